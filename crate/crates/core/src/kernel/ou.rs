//! Ornstein–Uhlenbeck kernel with conjugate Normal–Gamma block parameters.
//!
//! Within a block of length `n` the observations follow the discretized OU
//! recursion
//!
//! ```text
//! y_1 | μ, η      ~ N(μ, 1/η)
//! y_t | y_{t-1}   ~ N(γ y_{t-1} + (1-γ) μ, (1-γ²)/η),   t = 2..n
//! μ | η ~ N(0, 1/(c η)),   η ~ Gamma(a, rate b)
//! ```
//!
//! and `(μ, η)` integrate out in closed form:
//!
//! ```text
//! log M = a log(2b(1-γ²)) + log Γ(n/2 + a) - (n/2) log π - log Γ(a)
//!       + ½ log[c(1+γ)(1-γ²) / D]
//!       - (n/2 + a) log[ yᵀSy - (1-γ)(Σy - γ Σ_int y)² / D + 2b(1-γ²) ]
//! D = c + n - γ(n - c - 2)
//! ```
//!
//! `S` is tridiagonal with `1` at both diagonal corners, `1 + γ²` on the
//! interior diagonal and `-γ` off the diagonal, and `Σ_int` sums the interior
//! points `2..n-1`. Both are evaluated as "all points minus the first and the
//! last", which for a one-point block gives `yᵀSy = (1-γ²)y²` and
//! `Σy - γΣ_int y = (1+γ)y`; this is the value the integral takes.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::numeric::ln_gamma;
use crate::orders::RandomOrder;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OuHyperparams {
    /// Lag-one autocorrelation, `exp(-α_OU)`.
    pub gamma: f64,
    /// Gamma shape of the precision.
    pub a: f64,
    /// Gamma rate of the precision.
    pub b: f64,
    /// Precision scale of the mean.
    pub c: f64,
}

impl Default for OuHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            a: 1.0,
            b: 1.0,
            c: 0.1,
        }
    }
}

impl OuHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.abs() < 1.0) {
            return Err(Error::Domain(format!(
                "ou.gamma must lie in (-1, 1), got {}",
                self.gamma
            )));
        }
        for (name, v) in [("ou.a", self.a), ("ou.b", self.b), ("ou.c", self.c)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Sufficient statistics of a block.
#[derive(Clone, Copy, Debug)]
struct BlockStats {
    n: usize,
    sum: f64,
    sum_sq: f64,
    first: f64,
    last: f64,
    lag_cross: f64,
}

fn block_log_marginal_from_stats(s: BlockStats, h: &OuHyperparams) -> Result<f64> {
    let n = s.n as f64;
    let g = h.gamma;
    let one_m_g2 = 1.0 - g * g;
    let d = h.c + n - g * (n - h.c - 2.0);
    let interior = s.sum - s.first - s.last;
    let interior_sq = s.sum_sq - s.first * s.first - s.last * s.last;
    let quad = s.sum_sq + g * g * interior_sq - 2.0 * g * s.lag_cross;
    let lin = s.sum - g * interior;
    let q = quad - (1.0 - g) * lin * lin / d + 2.0 * h.b * one_m_g2;
    if !(q > 0.0) || !(d > 0.0) {
        return Err(Error::Evaluation(format!(
            "OU quadratic form is not positive (q = {q}, D = {d})"
        )));
    }
    let shape = n / 2.0 + h.a;
    let v = h.a * (2.0 * h.b * one_m_g2).ln() + ln_gamma(shape)
        - (n / 2.0) * PI.ln()
        - ln_gamma(h.a)
        + 0.5 * (h.c * (1.0 + g) * one_m_g2 / d).ln()
        - shape * q.ln();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation(format!("OU block marginal is {v}")))
    }
}

/// Log marginal likelihood of one block of observations.
pub fn ou_block_log_marginal(y: &[f64], h: &OuHyperparams) -> Result<f64> {
    h.validate()?;
    let (Some(&first), Some(&last)) = (y.first(), y.last()) else {
        return Err(Error::Domain("empty block".into()));
    };
    let stats = BlockStats {
        n: y.len(),
        sum: y.iter().sum(),
        sum_sq: y.iter().map(|v| v * v).sum(),
        first,
        last,
        lag_cross: y.windows(2).map(|w| w[0] * w[1]).sum(),
    };
    block_log_marginal_from_stats(stats, h)
}

/// A real-valued series with prefix sums for O(1) block statistics.
#[derive(Clone, Debug)]
pub struct OuSeries {
    values: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    /// `cross[t] = Σ_{s<t} y_s y_{s+1}` for pairs fully inside `0..=t`.
    cross: Vec<f64>,
}

impl OuSeries {
    pub fn new(values: Vec<f64>) -> Self {
        let t = values.len();
        let mut sum = vec![0.0; t + 1];
        let mut sum_sq = vec![0.0; t + 1];
        let mut cross = vec![0.0; t.max(1)];
        for (i, v) in values.iter().enumerate() {
            sum[i + 1] = sum[i] + v;
            sum_sq[i + 1] = sum_sq[i] + v * v;
            if i > 0 {
                cross[i] = cross[i - 1] + values[i - 1] * v;
            }
        }
        Self {
            values,
            sum,
            sum_sq,
            cross,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn stats(&self, r: &Range<usize>) -> BlockStats {
        BlockStats {
            n: r.len(),
            sum: self.sum[r.end] - self.sum[r.start],
            sum_sq: self.sum_sq[r.end] - self.sum_sq[r.start],
            first: self.values[r.start],
            last: self.values[r.end - 1],
            lag_cross: self.cross[r.end - 1] - self.cross[r.start],
        }
    }
}

#[derive(Clone, Debug)]
pub struct OuKernel {
    h: OuHyperparams,
}

impl OuKernel {
    pub fn new(h: OuHyperparams) -> Result<Self> {
        h.validate()?;
        Ok(Self { h })
    }

    pub fn hyperparams(&self) -> &OuHyperparams {
        &self.h
    }
}

impl Kernel for OuKernel {
    type Payload = OuSeries;
    type Local = ();

    fn name(&self) -> &'static str {
        "ou"
    }

    fn horizon(&self, payload: &OuSeries) -> usize {
        payload.len()
    }

    fn init_local(&self, _: &OuSeries) {}

    fn log_marginal(&self, payload: &OuSeries, _: &(), order: &RandomOrder, _seed: u64) -> Result<f64> {
        if order.t() != payload.len() {
            return Err(Error::Mismatch(format!(
                "order has T = {} but the series has {} points",
                order.t(),
                payload.len()
            )));
        }
        order
            .blocks()
            .map(|r| block_log_marginal_from_stats(payload.stats(&r), &self.h))
            .sum()
    }

    fn block_log_marginal(&self, payload: &OuSeries, _: &(), block: Range<usize>) -> Option<Result<f64>> {
        Some(block_log_marginal_from_stats(payload.stats(&block), &self.h))
    }
}

/// Centers and scales to unit sample variance. Constant series are only centered.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    values.iter().map(|v| (v - mean) / sd).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn student_t_single(y: f64, h: &OuHyperparams) -> f64 {
        // y ~ N(0, (c+1)/(c η)), η ~ Ga(a, b)  =>  scaled Student t
        let v = (h.c + 1.0) / h.c;
        ln_gamma(h.a + 0.5) - ln_gamma(h.a) + h.a * h.b.ln()
            - 0.5 * (2.0 * PI * v).ln()
            - (h.a + 0.5) * (h.b + y * y / (2.0 * v)).ln()
    }

    #[test]
    fn single_point_is_student_t() {
        for &g in &[0.0, 0.1, -0.6, 0.9] {
            let h = OuHyperparams {
                gamma: g,
                ..Default::default()
            };
            for &y in &[0.0, 0.7, -2.5] {
                let v = ou_block_log_marginal(&[y], &h).unwrap();
                assert!((v - student_t_single(y, &h)).abs() < 1e-12, "g={g} y={y}");
            }
        }
    }

    #[test]
    fn gamma_zero_is_iid_normal_normal_gamma() {
        // standard conjugate result for iid N(μ, 1/η), μ|η ~ N(0, 1/(cη)), η ~ Ga(a, b)
        let h = OuHyperparams {
            gamma: 0.0,
            a: 2.0,
            b: 0.5,
            c: 0.3,
        };
        let y = [0.3, -1.2, 0.8, 2.0, 0.1];
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let c_post = h.c + n;
        let a_post = h.a + n / 2.0;
        let b_post = h.b + 0.5 * ss + 0.5 * h.c * n * mean * mean / c_post;
        let expected = ln_gamma(a_post) - ln_gamma(h.a) + h.a * h.b.ln() - a_post * b_post.ln()
            + 0.5 * (h.c / c_post).ln()
            - (n / 2.0) * (2.0 * PI).ln();
        let v = ou_block_log_marginal(&y, &h).unwrap();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }

    #[test]
    fn prefix_sums_match_direct_blocks() {
        let y = vec![0.4, -0.3, 1.5, 0.2, -0.9, 0.0, 2.2, 1.1];
        let s = OuSeries::new(y.clone());
        let k = OuKernel::new(OuHyperparams::default()).unwrap();
        for start in 0..y.len() {
            for end in start + 1..=y.len() {
                let a = k.block_log_marginal(&s, &(), start..end).unwrap().unwrap();
                let b = ou_block_log_marginal(&y[start..end], k.hyperparams()).unwrap();
                assert!((a - b).abs() < 1e-10, "{start}..{end}");
            }
        }
    }

    #[test]
    fn whole_series_is_sum_of_blocks() {
        let y = vec![0.4, -0.3, 1.5, 0.2, -0.9, 0.0];
        let s = OuSeries::new(y.clone());
        let k = OuKernel::new(OuHyperparams::default()).unwrap();
        let one = k.log_marginal(&s, &(), &RandomOrder::one_block(6), 0).unwrap();
        let direct = ou_block_log_marginal(&y, k.hyperparams()).unwrap();
        assert!((one - direct).abs() < 1e-12);
        let two = RandomOrder::new(6, vec![2, 6]).unwrap();
        let v = k.log_marginal(&s, &(), &two, 0).unwrap();
        let parts = ou_block_log_marginal(&y[..2], k.hyperparams()).unwrap()
            + ou_block_log_marginal(&y[2..], k.hyperparams()).unwrap();
        assert!((v - parts).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_hyperparams_and_mismatch() {
        assert!(OuKernel::new(OuHyperparams {
            gamma: 1.0,
            ..Default::default()
        })
        .is_err());
        assert!(OuKernel::new(OuHyperparams {
            c: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(ou_block_log_marginal(&[], &OuHyperparams::default()).is_err());
        let k = OuKernel::new(OuHyperparams::default()).unwrap();
        let s = OuSeries::new(vec![0.0; 4]);
        assert!(matches!(
            k.log_marginal(&s, &(), &RandomOrder::one_block(5), 0),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn finite_for_extreme_inputs() {
        let h = OuHyperparams::default();
        let y = [1e6, -1e6, 3e5, 0.0];
        assert!(ou_block_log_marginal(&y, &h).unwrap().is_finite());
        assert!(ou_block_log_marginal(&[0.0; 10], &h).unwrap().is_finite());
    }

    #[test]
    fn standardize_unit_variance() {
        let z = standardize(&[1.0, 2.0, 3.0, 4.0]);
        let m: f64 = z.iter().sum::<f64>() / 4.0;
        let v: f64 = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        assert_eq!(standardize(&[5.0, 5.0]), vec![0.0, 0.0]);
    }
}
