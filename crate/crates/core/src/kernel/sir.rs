//! SIR epidemic kernel based on dynamical survival analysis.
//!
//! The mean-field SIR system
//!
//! ```text
//! S' = -β(t) S I,   I' = β(t) S I - ξ I,   R' = ξ I,   S(0) = 1, I(0) = I0, R(0) = 0
//! ```
//!
//! is integrated with a fixed-step fourth-order Runge–Kutta scheme, with
//! `β(t)` piecewise constant over the blocks of an order. Day `t` covers the
//! interval `(t-1, t]`, and every integer day is a grid point, so rate changes
//! never fall inside a step. Conditioning on the observation window `[0, T]`,
//! the infection time of a random individual has density
//!
//! ```text
//! f_T(t) = β(t) S(t) I(t) / (1 - S(T)),
//! ```
//!
//! and a series of daily case counts `y_t` contributes `Π_t f_T(t)^{y_t}`.
//! Block infection rates are integrated out by Monte Carlo over their Gamma
//! prior, with the draws fully determined by the evaluation seed.

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::numeric::log_mean_exp;
use crate::orders::RandomOrder;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// How daily counts enter the likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayLikelihood {
    /// `Π_t f_T(t)^{y_t}` with the continuous density evaluated at integer days.
    #[default]
    Density,
    /// Multinomial over days with `p_t = f_T(t) / Σ_s f_T(s)`.
    GridNormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SirHyperparams {
    /// Recovery rate per day, shared by all series.
    pub xi: f64,
    /// Gamma prior shape of each block's infection rate.
    pub beta_shape: f64,
    /// Gamma prior rate of each block's infection rate.
    pub beta_rate: f64,
    /// Monte Carlo draws used to integrate the infection rates.
    pub mc: usize,
    /// Runge–Kutta step in days; rounded down so a whole number of steps fits a day.
    pub ode_step: f64,
    /// Initial infected proportion at the start of the chain.
    pub i0_init: f64,
    /// Random-walk scale on `logit(I0)`.
    pub i0_proposal_sd: f64,
    pub likelihood: DayLikelihood,
}

impl Default for SirHyperparams {
    fn default() -> Self {
        Self {
            xi: 1.0 / 8.0,
            beta_shape: 4.0,
            beta_rate: 10.0,
            mc: 1000,
            ode_step: 0.1,
            i0_init: 1e-3,
            i0_proposal_sd: 0.1,
            likelihood: DayLikelihood::Density,
        }
    }
}

impl SirHyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sir.xi", self.xi),
            ("sir.beta_shape", self.beta_shape),
            ("sir.beta_rate", self.beta_rate),
            ("sir.ode_step", self.ode_step),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mc == 0 {
            return Err(Error::Domain("sir.mc must be at least 1".into()));
        }
        if !(self.i0_init > 0.0 && self.i0_init < 1.0) {
            return Err(Error::Domain(format!(
                "sir.i0_init must lie in (0, 1), got {}",
                self.i0_init
            )));
        }
        if !(self.i0_proposal_sd >= 0.0) {
            return Err(Error::Domain("sir.i0_proposal_sd must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        steps_per_day(self.ode_step)
    }
}

fn steps_per_day(step: f64) -> usize {
    ((1.0 / step) - 1e-9).ceil().max(1.0) as usize
}

/// A piecewise-constant infection rate: one value per block of an order.
#[derive(Clone, Debug, PartialEq)]
pub struct BetaPath {
    order: RandomOrder,
    betas: Vec<f64>,
}

impl BetaPath {
    pub fn new(order: RandomOrder, betas: Vec<f64>) -> Result<Self> {
        if betas.len() != order.num_blocks() {
            return Err(Error::Domain(format!(
                "{} infection rates for an order with {} blocks",
                betas.len(),
                order.num_blocks()
            )));
        }
        if betas.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::Domain(format!("infection rates must be nonnegative: {betas:?}")));
        }
        Ok(Self { order, betas })
    }

    pub fn constant(t: usize, beta: f64) -> Result<Self> {
        Self::new(RandomOrder::one_block(t), vec![beta])
    }

    pub fn t(&self) -> usize {
        self.order.t()
    }

    /// Rate on day `day` (1-based), i.e. on the interval `(day-1, day]`.
    pub fn on_day(&self, day: usize) -> f64 {
        self.betas[self.order.block_of(day)]
    }

    /// Rate at continuous time `time ∈ (0, T]`, left-continuous at day boundaries.
    pub fn at(&self, time: f64) -> f64 {
        let day = (time.ceil() as usize).clamp(1, self.t());
        self.on_day(day)
    }

    fn per_day(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.t());
        for (r, &b) in self.order.blocks().zip(&self.betas) {
            out.extend(std::iter::repeat_n(b, r.len()));
        }
        out
    }
}

/// Solution of the SIR system on a regular grid over `[0, T]`.
#[derive(Clone, Debug)]
pub struct SirTrajectory {
    pub steps_per_day: usize,
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    pub r: Vec<f64>,
}

impl SirTrajectory {
    pub fn step(&self) -> f64 {
        1.0 / self.steps_per_day as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        (0..self.s.len()).map(move |k| k as f64 * h)
    }

    pub fn t(&self) -> usize {
        (self.s.len() - 1) / self.steps_per_day
    }

    /// `(S, I, R)` at integer day `day` (0..=T).
    pub fn at_day(&self, day: usize) -> (f64, f64, f64) {
        let k = day * self.steps_per_day;
        (self.s[k], self.i[k], self.r[k])
    }
}

#[inline]
fn rhs(beta: f64, xi: f64, s: f64, i: f64) -> (f64, f64) {
    let inf = beta * s * i;
    (-inf, inf - xi * i)
}

#[inline]
fn rk4_step(beta: f64, xi: f64, h: f64, s: f64, i: f64, r: f64) -> (f64, f64, f64) {
    let (ds1, di1) = rhs(beta, xi, s, i);
    let (ds2, di2) = rhs(beta, xi, s + 0.5 * h * ds1, i + 0.5 * h * di1);
    let (ds3, di3) = rhs(beta, xi, s + 0.5 * h * ds2, i + 0.5 * h * di2);
    let (ds4, di4) = rhs(beta, xi, s + h * ds3, i + h * di3);
    let ds = h / 6.0 * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4);
    let di = h / 6.0 * (di1 + 2.0 * di2 + 2.0 * di3 + di4);
    // R' = ξ I; its stage sum is minus the sum of the other two
    (s + ds, i + di, r - ds - di)
}

fn check_inputs(xi: f64, i0: f64, step: f64) -> Result<()> {
    if !(i0 > 0.0 && i0 < 1.0) {
        return Err(Error::Domain(format!("I0 must lie in (0, 1), got {i0}")));
    }
    if !(xi >= 0.0) || !(step > 0.0) {
        return Err(Error::Domain(format!("invalid xi = {xi} or step = {step}")));
    }
    Ok(())
}

/// Integrates the SIR system over `[0, T]` with RK4.
pub fn integrate_sir(path: &BetaPath, xi: f64, i0: f64, step: f64) -> Result<SirTrajectory> {
    check_inputs(xi, i0, step)?;
    let spd = steps_per_day(step);
    let h = 1.0 / spd as f64;
    let n = path.t() * spd + 1;
    let (mut s, mut i, mut r) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let (mut cs, mut ci, mut cr) = (1.0, i0, 0.0);
    s.push(cs);
    i.push(ci);
    r.push(cr);
    for day in 1..=path.t() {
        let beta = path.on_day(day);
        for _ in 0..spd {
            (cs, ci, cr) = rk4_step(beta, xi, h, cs, ci, cr);
            if cs < 0.0 || ci < 0.0 || cr < 0.0 {
                return Err(Error::Evaluation(format!(
                    "negative SIR state on day {day}; reduce the step"
                )));
            }
            s.push(cs);
            i.push(ci);
            r.push(cr);
        }
    }
    Ok(SirTrajectory {
        steps_per_day: spd,
        s,
        i,
        r,
    })
}

/// `(S(t), I(t))` at days `0..=T` only, for the likelihood hot path.
fn day_states(betas_by_day: &[f64], xi: f64, i0: f64, spd: usize, out: &mut Vec<(f64, f64)>) -> Result<()> {
    let h = 1.0 / spd as f64;
    out.clear();
    let (mut s, mut i, mut r) = (1.0, i0, 0.0);
    out.push((s, i));
    for &beta in betas_by_day {
        for _ in 0..spd {
            (s, i, r) = rk4_step(beta, xi, h, s, i, r);
        }
        if !(s >= 0.0 && i >= 0.0) {
            return Err(Error::Evaluation("negative SIR state".into()));
        }
        out.push((s, i));
    }
    Ok(())
}

/// `log f_T(t) = log β(t) + log S(t) + log I(t) - log(1 - S(T))`, evaluated at a
/// grid time of `traj`.
pub fn dsa_log_density(time: f64, traj: &SirTrajectory, path: &BetaPath) -> Result<f64> {
    let t = path.t() as f64;
    if !(time > 0.0 && time <= t) {
        return Err(Error::Domain(format!("time {time} outside (0, {t}]")));
    }
    let k = (time * traj.steps_per_day as f64).round() as usize;
    let s_end = *traj.s.last().expect("nonempty trajectory");
    if !(s_end < 1.0) {
        return Err(Error::Evaluation("no infections in the window (S(T) = 1)".into()));
    }
    Ok(path.at(time).ln() + traj.s[k].ln() + traj.i[k].ln() - (-s_end).ln_1p())
}

/// Daily case counts of one population over days `1..=T`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpiSeries {
    counts: Vec<u32>,
}

impl EpiSeries {
    pub fn from_counts(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    /// Bins event times in `(0, T]` by day: `time ∈ (t-1, t]` counts towards day `t`.
    pub fn from_times(times: &[f64], t: usize) -> Result<Self> {
        let mut counts = vec![0u32; t];
        for &x in times {
            if !(x > 0.0 && x <= t as f64) {
                return Err(Error::Domain(format!("infection time {x} outside (0, {t}]")));
            }
            let day = (x.ceil() as usize).max(1);
            counts[day - 1] += 1;
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn t(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Event times at day resolution (each event placed at the end of its day).
    pub fn to_day_times(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(d, &c)| std::iter::repeat_n((d + 1) as f64, c as usize))
            .collect()
    }
}

fn log_lik_from_states(
    counts: &[u32],
    betas_by_day: &[f64],
    states: &[(f64, f64)],
    form: DayLikelihood,
) -> f64 {
    let s_end = states[states.len() - 1].0;
    let ln_mass = (-s_end).ln_1p();
    let mut total = 0.0;
    let mut n = 0.0;
    for (d, &y) in counts.iter().enumerate() {
        if y == 0 {
            continue;
        }
        let (s, i) = states[d + 1];
        total += y as f64 * (betas_by_day[d].ln() + s.ln() + i.ln());
        n += y as f64;
    }
    match form {
        DayLikelihood::Density => total - n * ln_mass,
        DayLikelihood::GridNormalized => {
            let norm: f64 = (1..states.len())
                .map(|d| betas_by_day[d - 1] * states[d].0 * states[d].1)
                .sum();
            total - n * norm.ln()
        }
    }
}

/// `Σ_t y_t log f_T(t)` at fixed block infection rates.
pub fn sir_log_likelihood(
    series: &EpiSeries,
    path: &BetaPath,
    xi: f64,
    i0: f64,
    step: f64,
    form: DayLikelihood,
) -> Result<f64> {
    if series.t() != path.t() {
        return Err(Error::Mismatch(format!(
            "series has {} days but the rate path covers {}",
            series.t(),
            path.t()
        )));
    }
    if series.total() == 0 {
        return Ok(0.0);
    }
    check_inputs(xi, i0, step)?;
    let by_day = path.per_day();
    let mut states = Vec::with_capacity(series.t() + 1);
    day_states(&by_day, xi, i0, steps_per_day(step), &mut states)?;
    let v = log_lik_from_states(series.counts(), &by_day, &states, form);
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::Evaluation(format!("SIR log-likelihood is {v}")));
    }
    Ok(v)
}

/// Block infection rates of every Monte Carlo draw under `seed`, indexed
/// `[draw][block]`.
///
/// Each block's rates come from a stream keyed by its start day, so orders
/// that share a block start share those rates.
pub fn draw_betas(h: &SirHyperparams, order: &RandomOrder, seed: u64) -> Vec<Vec<f64>> {
    let gamma = Gamma::new(h.beta_shape, 1.0 / h.beta_rate).expect("validated hyperparameters");
    let by_block: Vec<Vec<f64>> = order
        .blocks()
        .map(|b| {
            let mut rng = rng::rng_from(rng::derive(seed, &[b.start as u64]));
            (0..h.mc).map(|_| gamma.sample(&mut rng)).collect()
        })
        .collect();
    (0..h.mc).map(|r| by_block.iter().map(|v| v[r]).collect()).collect()
}

/// Per-draw log-likelihoods of the Monte Carlo marginalization.
pub fn sir_mc_log_likelihoods(
    series: &EpiSeries,
    order: &RandomOrder,
    h: &SirHyperparams,
    i0: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    h.validate()?;
    check_inputs(h.xi, i0, h.ode_step)?;
    if series.t() != order.t() {
        return Err(Error::Mismatch(format!(
            "series has {} days but the order covers {}",
            series.t(),
            order.t()
        )));
    }
    if series.total() == 0 {
        return Ok(vec![0.0; h.mc]);
    }
    let spd = h.steps_per_day();
    let sizes = order.block_sizes();
    let all_betas = draw_betas(h, order, seed);
    let draws: Vec<f64> = all_betas
        .par_iter()
        .map_init(
            || (Vec::with_capacity(series.t()), Vec::with_capacity(series.t() + 1)),
            |(by_day, states), betas| {
                by_day.clear();
                for (&b, &len) in betas.iter().zip(&sizes) {
                    by_day.extend(std::iter::repeat_n(b, len));
                }
                match day_states(by_day, h.xi, i0, spd, states) {
                    Ok(()) => {
                        let v = log_lik_from_states(series.counts(), by_day, states, h.likelihood);
                        if v.is_nan() {
                            f64::NEG_INFINITY
                        } else {
                            v
                        }
                    }
                    Err(_) => f64::NEG_INFINITY,
                }
            },
        )
        .collect();
    Ok(draws)
}

/// `log (1/MC) Σ_r exp(loglik(β_r))` with `β_r` i.i.d. from the Gamma prior per block.
pub fn sir_log_marginal(
    series: &EpiSeries,
    order: &RandomOrder,
    h: &SirHyperparams,
    i0: f64,
    seed: u64,
) -> Result<f64> {
    let draws = sir_mc_log_likelihoods(series, order, h, i0, seed)?;
    let v = log_mean_exp(&draws);
    if v == f64::NEG_INFINITY || v.is_nan() {
        return Err(Error::Evaluation(
            "every Monte Carlo draw gave a non-finite likelihood".into(),
        ));
    }
    Ok(v)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One random-walk Metropolis–Hastings step on `logit(I0)` under a uniform
/// prior on `I0`, targeting the Monte Carlo marginal at `seed`.
pub fn update_i0(
    series: &EpiSeries,
    order: &RandomOrder,
    h: &SirHyperparams,
    i0: f64,
    seed: u64,
    rng: &mut Rng,
) -> Result<f64> {
    update_i0_given(series, order, h, i0, None, seed, rng)
}

/// [`update_i0`] with the log marginal at the current `i0` already known.
pub fn update_i0_given(
    series: &EpiSeries,
    order: &RandomOrder,
    h: &SirHyperparams,
    i0: f64,
    current: Option<f64>,
    seed: u64,
    rng: &mut Rng,
) -> Result<f64> {
    check_inputs(h.xi, i0, h.ode_step)?;
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    let proposal = logistic(logit(i0) + h.i0_proposal_sd * z);
    if !(proposal > 0.0 && proposal < 1.0) {
        return Ok(i0);
    }
    if proposal == i0 {
        return Ok(i0);
    }
    let target = |p: f64| -> f64 {
        // uniform prior on I0 pulled back to the logit scale: density p (1 - p)
        let jac = p.ln() + (-p).ln_1p();
        match sir_log_marginal(series, order, h, p, seed) {
            Ok(v) => v + jac,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let at_current = match current {
        Some(v) => v + i0.ln() + (-i0).ln_1p(),
        None => target(i0),
    };
    let log_ratio = target(proposal) - at_current;
    if u.ln() < log_ratio {
        Ok(proposal)
    } else {
        Ok(i0)
    }
}

#[derive(Clone, Debug)]
pub struct SirKernel {
    h: SirHyperparams,
}

impl SirKernel {
    pub fn new(h: SirHyperparams) -> Result<Self> {
        h.validate()?;
        Ok(Self { h })
    }

    pub fn hyperparams(&self) -> &SirHyperparams {
        &self.h
    }
}

impl Kernel for SirKernel {
    type Payload = EpiSeries;
    type Local = f64;

    fn name(&self) -> &'static str {
        "sir"
    }

    fn horizon(&self, payload: &EpiSeries) -> usize {
        payload.t()
    }

    fn init_local(&self, _: &EpiSeries) -> f64 {
        self.h.i0_init
    }

    fn log_marginal(&self, payload: &EpiSeries, i0: &f64, order: &RandomOrder, seed: u64) -> Result<f64> {
        sir_log_marginal(payload, order, &self.h, *i0, seed)
    }

    fn has_local_updates(&self) -> bool {
        true
    }

    fn update_local(
        &self,
        payload: &EpiSeries,
        i0: &f64,
        order: &RandomOrder,
        current: Option<f64>,
        seed: u64,
        rng: &mut Rng,
    ) -> Result<f64> {
        update_i0_given(payload, order, &self.h, *i0, current, seed, rng)
    }
}
