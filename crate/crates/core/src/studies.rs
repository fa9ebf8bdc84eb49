//! Parameter sets and generators for the two synthetic studies: ten blockwise
//! OU series in three groups, and ten SIR epidemics in three groups.

use serde::{Deserialize, Serialize};

use crate::kernel::ou::standardize;
use crate::kernel::sir::{BetaPath, EpiSeries};
use crate::orders::{Partition, RandomOrder};
use crate::rng;
use crate::simulate::{doob_gillespie, simulate_ou_series, subsample_infections, trim_window};
use crate::{Error, Result};

/// One series of the OU study: block means and variances on a 300-point grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuSpec {
    pub lengths: Vec<usize>,
    pub mus: Vec<f64>,
    pub etas: Vec<f64>,
    pub group: usize,
}

pub const OU_STUDY_T: usize = 300;

pub fn ou_study_specs() -> Vec<OuSpec> {
    let g1 = vec![50, 100, 45, 55, 50];
    let g2 = vec![40, 50, 45, 45, 30, 90];
    let g3 = vec![75, 75, 30, 20, 75, 25];
    let spec = |lengths: &Vec<usize>, mus: &[f64], etas: &[f64], group| OuSpec {
        lengths: lengths.clone(),
        mus: mus.to_vec(),
        etas: etas.to_vec(),
        group,
    };
    vec![
        spec(&g1, &[0.5, 0.85, 0.5, 0.75, 1.0], &[0.1, 0.12, 0.14, 0.13, 0.15], 0),
        spec(&g1, &[0.15, 0.75, 0.25, 0.0, 0.25], &[0.12, 0.15, 0.12, 0.14, 0.13], 0),
        spec(&g1, &[0.25, 0.0, 0.15, 0.15, 0.3], &[0.1, 0.12, 0.2, 0.12, 0.14], 0),
        spec(&g1, &[0.75, 0.4, 0.8, 0.8, 0.4], &[0.1, 0.12, 0.09, 0.24, 0.15], 0),
        spec(&g2, &[0.0, -0.15, 0.15, 0.3, 0.1, 0.3], &[0.12, 0.13, 0.1, 0.13, 0.14, 0.12], 1),
        spec(&g2, &[0.5, 0.0, -0.5, 0.0, 0.2, 0.0], &[0.1, 0.24, 0.14, 0.15, 0.12, 0.13], 1),
        spec(&g2, &[0.0, 0.2, 0.4, 0.25, -0.1, 0.15], &[0.16, 0.15, 0.1, 0.13, 0.14, 0.12], 1),
        spec(&g3, &[0.0, -0.25, 0.0, 0.25, -0.25, 0.1], &[0.14, 0.13, 0.17, 0.12, 0.14, 0.12], 2),
        spec(&g3, &[0.25, 0.25, -0.2, 0.1, 0.3, 0.0], &[0.12, 0.22, 0.15, 0.14, 0.17, 0.19], 2),
        spec(&g3, &[0.0, -0.25, 0.0, 0.25, 0.0, -0.25], &[0.12, 0.13, 0.15, 0.12, 0.15, 0.18], 2),
    ]
}

/// Rescales block lengths to sum to `t` by largest remainder; every block keeps at least one point.
pub fn scale_lengths(lengths: &[usize], t: usize) -> Result<Vec<usize>> {
    let total: usize = lengths.iter().sum();
    if t < lengths.len() || total == 0 {
        return Err(Error::Domain(format!("cannot fit {} blocks into {t} points", lengths.len())));
    }
    let exact: Vec<f64> = lengths.iter().map(|&l| l as f64 * t as f64 / total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| (x.floor() as usize).max(1)).collect();
    let mut assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut k = 0;
    while assigned < t {
        out[order[k % order.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > t {
        let j = (0..out.len()).max_by_key(|&j| out[j]).expect("nonempty");
        out[j] -= 1;
        assigned -= 1;
    }
    Ok(out)
}

fn order_from_lengths(lengths: &[usize]) -> Result<RandomOrder> {
    let mut ends = Vec::with_capacity(lengths.len());
    let mut acc = 0;
    for &l in lengths {
        acc += l;
        ends.push(acc);
    }
    RandomOrder::new(acc, ends)
}

/// A generated real-valued dataset with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct OuDataset {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub truth: Partition,
    pub orders: Vec<RandomOrder>,
}

/// Draws the OU study at horizon `t` (block lengths rescaled from 300);
/// series `i` uses seed `derive(seed, [i])`.
pub fn simulate_ou_study(t: usize, gamma: f64, standardized: bool, seed: u64) -> Result<OuDataset> {
    let specs = ou_study_specs();
    let mut values = Vec::new();
    let mut orders = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        let order = order_from_lengths(&scale_lengths(&s.lengths, t)?)?;
        let y = simulate_ou_series(&order, &s.mus, &s.etas, gamma, rng::derive(seed, &[i as u64]))?;
        values.push(if standardized { standardize(&y) } else { y });
        orders.push(order);
    }
    Ok(OuDataset {
        ids: (1..=specs.len()).map(|i| format!("series{i}")).collect(),
        values,
        truth: Partition::from_labels(&specs.iter().map(|s| s.group).collect::<Vec<_>>()),
        orders,
    })
}

/// One population of the epidemic study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpiSpec {
    pub betas: [f64; 2],
    pub initial_infected: u64,
    /// Day of the rate change in the 200-day simulation.
    pub change_day: usize,
    pub group: usize,
}

pub fn epi_study_specs() -> Vec<EpiSpec> {
    let spec = |b1, b2, i0, change_day, group| EpiSpec {
        betas: [b1, b2],
        initial_infected: i0,
        change_day,
        group,
    };
    vec![
        spec(0.211, 0.55, 23, 110, 0),
        spec(0.221, 0.50, 23, 110, 0),
        spec(0.218, 0.54, 21, 110, 0),
        spec(0.225, 0.51, 20, 110, 0),
        spec(0.213, 0.52, 24, 90, 1),
        spec(0.213, 0.51, 23, 90, 1),
        spec(0.193, 0.57, 22, 90, 1),
        spec(0.195, 0.54, 21, 50, 2),
        spec(0.191, 0.53, 20, 50, 2),
        spec(0.189, 0.51, 24, 50, 2),
    ]
}

/// Simulation and preprocessing settings of the epidemic study.
///
/// Times are measured in units of `1 / time_scale` days: rates are multiplied
/// by `time_scale`, the change day is divided by it, and `horizon` and
/// `window` are given in the rescaled units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpiStudyConfig {
    pub s0: u64,
    pub xi: f64,
    pub horizon: usize,
    pub window: (usize, usize),
    pub fraction: f64,
    pub time_scale: f64,
}

impl Default for EpiStudyConfig {
    fn default() -> Self {
        Self {
            s0: 100_000,
            xi: 0.125,
            horizon: 200,
            window: (10, 150),
            fraction: 0.2,
            time_scale: 1.0,
        }
    }
}

impl EpiStudyConfig {
    /// The compressed variant used for quick runs: 60 analysed time units.
    pub fn reduced() -> Self {
        Self {
            horizon: 80,
            window: (4, 64),
            time_scale: 2.5,
            ..Self::default()
        }
    }

    pub fn t(&self) -> usize {
        self.window.1 - self.window.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.0 >= self.window.1 || self.window.1 > self.horizon {
            return Err(Error::Config(format!(
                "window {:?} must be increasing and inside the horizon {}",
                self.window, self.horizon
            )));
        }
        if !(self.time_scale > 0.0) || !(self.xi > 0.0) || self.s0 == 0 {
            return Err(Error::Config("time_scale, xi and s0 must be positive".into()));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction must lie in (0, 1], got {}", self.fraction)));
        }
        Ok(())
    }

    /// Change time of a population in analysis-window coordinates.
    pub fn window_change(&self, spec: &EpiSpec) -> usize {
        self.scaled_change(spec).saturating_sub(self.window.0)
    }

    fn scaled_change(&self, spec: &EpiSpec) -> usize {
        ((spec.change_day as f64 / self.time_scale).round() as usize).clamp(1, self.horizon - 1)
    }
}

/// A generated epidemic dataset: windowed daily counts of subsampled infections.
#[derive(Clone, Debug, PartialEq)]
pub struct EpiDataset {
    pub ids: Vec<String>,
    pub series: Vec<EpiSeries>,
    pub truth: Partition,
    pub orders: Vec<RandomOrder>,
    /// All infection times of each population before subsampling and trimming.
    pub infection_times: Vec<Vec<f64>>,
}

pub fn simulate_epi_study(cfg: &EpiStudyConfig, seed: u64) -> Result<EpiDataset> {
    cfg.validate()?;
    let specs = epi_study_specs();
    let t = cfg.t();
    let mut series = Vec::new();
    let mut orders = Vec::new();
    let mut all = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        let change = cfg.scaled_change(s);
        let path = BetaPath::new(
            RandomOrder::new(cfg.horizon, vec![change, cfg.horizon])?,
            s.betas.iter().map(|b| b * cfg.time_scale).collect(),
        )?;
        let ep = doob_gillespie(
            &path,
            cfg.xi * cfg.time_scale,
            cfg.s0,
            s.initial_infected,
            rng::derive(seed, &[i as u64, 0]),
        )?;
        let sub = subsample_infections(&ep.infection_times, cfg.fraction, rng::derive(seed, &[i as u64, 1]))?;
        let windowed = trim_window(&sub, cfg.window.0 as f64, cfg.window.1 as f64);
        series.push(EpiSeries::from_times(&windowed, t)?);
        let wc = cfg.window_change(s);
        orders.push(if wc == 0 || wc >= t {
            RandomOrder::one_block(t)
        } else {
            RandomOrder::new(t, vec![wc, t])?
        });
        all.push(ep.infection_times);
    }
    Ok(EpiDataset {
        ids: (1..=specs.len()).map(|i| format!("pop{i}")).collect(),
        series,
        truth: Partition::from_labels(&specs.iter().map(|s| s.group).collect::<Vec<_>>()),
        orders,
        infection_times: all,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_scaling() {
        assert_eq!(scale_lengths(&[50, 100, 45, 55, 50], 100).unwrap(), vec![17, 33, 15, 18, 17]);
        assert_eq!(scale_lengths(&[40, 50, 45, 45, 30, 90], 100).unwrap(), vec![13, 17, 15, 15, 10, 30]);
        assert_eq!(scale_lengths(&[75, 75, 30, 20, 75, 25], 100).unwrap(), vec![25, 25, 10, 7, 25, 8]);
        assert_eq!(scale_lengths(&[50, 100], 300).unwrap(), vec![100, 200]);
        for t in 6..60 {
            assert_eq!(scale_lengths(&[75, 75, 30, 20, 75, 25], t).unwrap().iter().sum::<usize>(), t);
        }
    }

    #[test]
    fn ou_study_shape() {
        let d = simulate_ou_study(300, 0.1, true, 1).unwrap();
        assert_eq!(d.values.len(), 10);
        assert!(d.values.iter().all(|v| v.len() == 300));
        assert_eq!(d.truth.k(), 3);
        assert_eq!(d.orders[0].block_sizes(), vec![50, 100, 45, 55, 50]);
    }

    #[test]
    fn epi_study_windows() {
        let full = EpiStudyConfig::default();
        assert_eq!(full.t(), 140);
        let specs = epi_study_specs();
        assert_eq!(full.window_change(&specs[0]), 100);
        let r = EpiStudyConfig::reduced();
        assert_eq!(r.t(), 60);
        let changes: Vec<usize> = [0, 4, 7].iter().map(|&i| r.window_change(&specs[i])).collect();
        assert_eq!(changes, vec![40, 32, 16]);
    }
}
