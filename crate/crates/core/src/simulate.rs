//! Synthetic data: blockwise OU series and stochastic SIR epidemics, plus the
//! preprocessing steps applied to them.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kernel::sir::BetaPath;
use crate::orders::RandomOrder;
use crate::rng;
use crate::{Error, Result};

/// Draws one series whose blocks follow independent stationary AR(1) paths.
///
/// Within a block with mean `μ` and variance `η` the first value is
/// `N(μ, η)` and later ones are `γ y + (1-γ) μ + N(0, (1-γ²) η)`, so every
/// value has marginal variance `η`. Nothing carries over across block starts.
pub fn simulate_ou_series(
    order: &RandomOrder,
    mus: &[f64],
    etas: &[f64],
    gamma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let m = order.num_blocks();
    if mus.len() != m || etas.len() != m {
        return Err(Error::Domain(format!(
            "{} means and {} variances for {m} blocks",
            mus.len(),
            etas.len()
        )));
    }
    if etas.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Domain("block variances must be positive".into()));
    }
    if !(gamma.abs() < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (-1, 1), got {gamma}")));
    }
    let mut rng = rng::rng_from(seed);
    let mut y = Vec::with_capacity(order.t());
    let innov = (1.0 - gamma * gamma).sqrt();
    for (b, r) in order.blocks().enumerate() {
        let (mu, sd) = (mus[b], etas[b].sqrt());
        let z: f64 = rng.sample(StandardNormal);
        let mut prev = mu + sd * z;
        y.push(prev);
        for _ in 1..r.len() {
            let z: f64 = rng.sample(StandardNormal);
            prev = gamma * prev + (1.0 - gamma) * mu + innov * sd * z;
            y.push(prev);
        }
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Infection,
    Recovery,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub s: u64,
    pub i: u64,
}

/// Output of one stochastic epidemic.
#[derive(Clone, Debug, PartialEq)]
pub struct Epidemic {
    pub infection_times: Vec<f64>,
    pub events: Vec<Event>,
    pub s0: u64,
    pub i0: u64,
}

impl Epidemic {
    pub fn final_state(&self) -> (u64, u64, u64) {
        match self.events.last() {
            Some(e) => (e.s, e.i, self.s0 + self.i0 - e.s - e.i),
            None => (self.s0, self.i0, 0),
        }
    }
}

/// Exact event-driven simulation of the Markov SIR epidemic on `(0, T]` with
/// infection pressure `β(u) S I / S0` and per-capita recovery rate `ξ`.
///
/// `β` is constant on each day, so the time to the next infection is found
/// by inverting the piecewise-linear cumulative hazard against a unit
/// exponential draw.
pub fn doob_gillespie(path: &BetaPath, xi: f64, s0: u64, i0: u64, seed: u64) -> Result<Epidemic> {
    if s0 == 0 || i0 == 0 {
        return Err(Error::Domain("S0 and I0 must be positive".into()));
    }
    if !(xi > 0.0) {
        return Err(Error::Domain(format!("recovery rate must be positive, got {xi}")));
    }
    let horizon = path.t() as f64;
    let mut rng = rng::rng_from(seed);
    let (mut s, mut i) = (s0, i0);
    let mut now = 0.0f64;
    let mut infection_times = Vec::new();
    let mut events = Vec::new();
    while i > 0 && now < horizon {
        // next recovery
        let e2: f64 = Exp1.sample(&mut rng);
        let t_rec = now + e2 / (xi * i as f64);
        // next infection by hazard inversion
        let t_inf = if s == 0 {
            f64::INFINITY
        } else {
            let scale = s as f64 * i as f64 / s0 as f64;
            let mut need: f64 = Exp1.sample(&mut rng);
            let mut u = now;
            let mut found = f64::INFINITY;
            while u < horizon {
                let day = (u.floor() as usize + 1).min(path.t());
                let seg_end = (day as f64).min(horizon);
                let rate = scale * path.on_day(day);
                let mass = rate * (seg_end - u);
                if rate > 0.0 && mass >= need {
                    found = u + need / rate;
                    break;
                }
                need -= mass;
                u = seg_end;
            }
            found
        };
        let next = t_inf.min(t_rec);
        if next > horizon {
            break;
        }
        now = next;
        let kind = if t_inf < t_rec {
            s -= 1;
            i += 1;
            infection_times.push(now);
            EventKind::Infection
        } else {
            i -= 1;
            EventKind::Recovery
        };
        events.push(Event { time: now, kind, s, i });
    }
    Ok(Epidemic {
        infection_times,
        events,
        s0,
        i0,
    })
}

/// Uniform subsample without replacement of `⌊fraction · N⌋` times, returned sorted.
pub fn subsample_infections(times: &[f64], fraction: f64, seed: u64) -> Result<Vec<f64>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let keep = (fraction * times.len() as f64).floor() as usize;
    let mut rng = rng::rng_from(seed);
    let mut out: Vec<f64> = index::sample(&mut rng, times.len(), keep)
        .into_iter()
        .map(|j| times[j])
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Trailing moving average; the first `window - 1` entries average the days available.
pub fn rolling_average(counts: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Domain("window must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(counts.len());
    let mut acc = 0.0;
    for (d, &c) in counts.iter().enumerate() {
        acc += c;
        if d >= window {
            acc -= counts[d - window];
        }
        out.push(acc / (d + 1).min(window) as f64);
    }
    Ok(out)
}

/// Keeps times in `(start, end]` and shifts them so the window starts at zero.
pub fn trim_window(times: &[f64], start: f64, end: f64) -> Vec<f64> {
    times
        .iter()
        .filter(|&&x| x > start && x <= end)
        .map(|x| x - start)
        .collect()
}
