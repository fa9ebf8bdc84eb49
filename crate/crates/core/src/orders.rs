//! Random orders, partitions of series, and the Dirichlet-categorical prior
//! that ties them together.
//!
//! A [`RandomOrder`] of `T` time points is an ordered partition of `1..=T` into
//! contiguous, nonempty blocks. It is stored as the list of block-end indices,
//! which is equivalent to the `T - 1` change-point indicators: bit `j`
//! (1-based) is set when a new block starts at time `j + 1`.
//!
//! Series choose their orders from `p(ρ) = Σ_r π_r δ_{ρ_r}(ρ)` with
//! `π ~ Dirichlet(α, ..., α)` over all `N = 2^(T-1)` orders. Integrating `π`
//! gives the exchangeable law of the vector of orders, which depends on the
//! induced [`Partition`] only through its block sizes ([`log_eppf`]).

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::numeric::{ln_num_orders, ln_rising, log_add_exp};
use crate::{Error, Result};

/// Largest `T` accepted by [`enumerate_orders`].
pub const MAX_ENUMERATION_T: usize = 25;

/// An ordered partition of `1..=T` into contiguous blocks.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RandomOrder {
    t: u32,
    ends: Vec<u32>,
}

impl RandomOrder {
    /// Builds an order from its strictly increasing block-end indices
    /// (1-based, last entry equal to `t`).
    pub fn new(t: usize, ends: Vec<usize>) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidOrder("T must be at least 1".into()));
        }
        if ends.last() != Some(&t) {
            return Err(Error::InvalidOrder(format!(
                "last block must end at T = {t}, got {ends:?}"
            )));
        }
        if ends[0] == 0 || ends.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidOrder(format!(
                "block ends must be strictly increasing and positive: {ends:?}"
            )));
        }
        Ok(Self {
            t: t as u32,
            ends: ends.into_iter().map(|e| e as u32).collect(),
        })
    }

    /// The order with a single block (no change points).
    pub fn one_block(t: usize) -> Self {
        assert!(t >= 1);
        Self {
            t: t as u32,
            ends: vec![t as u32],
        }
    }

    /// The order where every time point is its own block.
    pub fn singletons(t: usize) -> Self {
        assert!(t >= 1);
        Self {
            t: t as u32,
            ends: (1..=t as u32).collect(),
        }
    }

    /// Builds an order from `T - 1` change-point indicators.
    pub fn from_indicators(bits: &[bool]) -> Self {
        let t = bits.len() + 1;
        let mut ends: Vec<u32> = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(j, _)| j as u32 + 1)
            .collect();
        ends.push(t as u32);
        Self { t: t as u32, ends }
    }

    /// Builds an order of `t` points from an integer whose bit `j` (least
    /// significant first) is the change-point indicator after time `j + 1`.
    pub fn from_mask(t: usize, mask: u64) -> Self {
        let bits: Vec<bool> = (0..t - 1).map(|j| mask >> j & 1 == 1).collect();
        Self::from_indicators(&bits)
    }

    pub fn indicators(&self) -> Vec<bool> {
        let mut bits = vec![false; self.t as usize - 1];
        for &e in &self.ends[..self.ends.len() - 1] {
            bits[e as usize - 1] = true;
        }
        bits
    }

    /// Parses the `'0'`/`'1'` indicator string of length `T - 1`.
    pub fn from_bitstring(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!(
                    "unexpected character {other:?} in order bitstring {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_indicators(&bits))
    }

    pub fn to_bitstring(&self) -> String {
        self.indicators()
            .into_iter()
            .map(|b| if b { '1' } else { '0' })
            .collect()
    }

    pub fn t(&self) -> usize {
        self.t as usize
    }

    pub fn num_blocks(&self) -> usize {
        self.ends.len()
    }

    /// Block-end indices, 1-based.
    pub fn ends(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.ends.iter().map(|&e| e as usize)
    }

    /// Blocks as zero-based half-open ranges into a length-`T` array.
    pub fn blocks(&self) -> impl ExactSizeIterator<Item = Range<usize>> + '_ {
        self.ends.iter().enumerate().map(move |(j, &e)| {
            let start = if j == 0 { 0 } else { self.ends[j - 1] as usize };
            start..e as usize
        })
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks().map(|r| r.len()).collect()
    }

    /// Index of the block containing the 1-based time `time`.
    pub fn block_of(&self, time: usize) -> usize {
        debug_assert!(time >= 1 && time <= self.t());
        self.ends.partition_point(|&e| (e as usize) < time)
    }

    /// Splits block `block` so that its first part has `left_len` points.
    pub fn split_block(&self, block: usize, left_len: usize) -> Self {
        let r = self.blocks().nth(block).expect("block index in range");
        assert!(left_len >= 1 && left_len < r.len());
        let mut ends = self.ends.clone();
        ends.insert(block, (r.start + left_len) as u32);
        Self { t: self.t, ends }
    }

    /// Merges block `block` with block `block + 1`.
    pub fn merge_blocks(&self, block: usize) -> Self {
        assert!(block + 1 < self.ends.len());
        let mut ends = self.ends.clone();
        ends.remove(block);
        Self { t: self.t, ends }
    }
}

impl fmt::Display for RandomOrder {
    /// Formats as `{1,2|3}` style block lists.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (j, r) in self.blocks().enumerate() {
            if j > 0 {
                f.write_str("|")?;
            }
            for (i, t) in r.enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{}", t + 1)?;
            }
        }
        f.write_str("}")
    }
}

impl Serialize for RandomOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_bitstring())
    }
}

impl<'de> Deserialize<'de> for RandomOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        RandomOrder::from_bitstring(&s).map_err(serde::de::Error::custom)
    }
}

/// All `2^(T-1)` orders of `t` points, ordered by the integer value of the
/// change-point mask (first change point least significant).
pub fn enumerate_orders(t: usize) -> Result<Vec<RandomOrder>> {
    if t == 0 || t > MAX_ENUMERATION_T {
        return Err(Error::TooManyOrders {
            t: t.max(1),
            limit: MAX_ENUMERATION_T,
        });
    }
    Ok((0..1u64 << (t - 1))
        .map(|mask| RandomOrder::from_mask(t, mask))
        .collect())
}

/// A clustering of `n` series, labels canonicalized by first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Builds a partition from arbitrary labels; only equality of labels matters.
    pub fn from_labels<L: Copy + Eq>(labels: &[L]) -> Self {
        let mut seen: Vec<L> = Vec::new();
        let canonical = labels
            .iter()
            .map(|l| match seen.iter().position(|s| s == l) {
                Some(p) => p,
                None => {
                    seen.push(*l);
                    seen.len() - 1
                }
            })
            .collect();
        Self {
            labels: canonical,
            k: seen.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            k: n,
        }
    }

    pub fn one_cluster(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Zero-based canonical labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            blocks[l].push(i);
        }
        blocks
    }

    pub fn co_clustered(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }

    /// Parses comma-separated labels (any integers).
    pub fn parse(s: &str) -> Result<Self> {
        let labels = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<i64>()
                    .map_err(|e| Error::Parse(format!("bad partition label {x:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_labels(&labels))
    }
}

impl fmt::Display for Partition {
    /// Comma-separated 1-based labels.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", l + 1)?;
        }
        Ok(())
    }
}

impl Serialize for Partition {
    /// Serialized as the array of 1-based labels.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let one_based: Vec<usize> = self.labels.iter().map(|l| l + 1).collect();
        one_based.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<usize>::deserialize(d)?;
        Ok(Partition::from_labels(&labels))
    }
}

/// Symmetric Dirichlet concentration, stored as `ln α` so that values like
/// `2^-(T-1)` for long series stay representable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Concentration {
    ln_alpha: f64,
}

impl Concentration {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!(
                "concentration must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self {
            ln_alpha: alpha.ln(),
        })
    }

    pub fn from_ln(ln_alpha: f64) -> Result<Self> {
        if !ln_alpha.is_finite() {
            return Err(Error::Domain(format!("log concentration {ln_alpha}")));
        }
        Ok(Self { ln_alpha })
    }

    pub fn ln(&self) -> f64 {
        self.ln_alpha
    }

    /// `α` as a plain float; may underflow to zero for very long series.
    pub fn value(&self) -> f64 {
        self.ln_alpha.exp()
    }
}

/// `α = 1 / 2^(T-1)`.
pub fn default_alpha(t: usize) -> Concentration {
    Concentration {
        ln_alpha: -ln_num_orders(t),
    }
}

/// Probability that two draws from the Dirichlet-categorical model coincide,
/// `(α + 1) / (2^(T-1) α + 1)`.
pub fn tie_probability(alpha: Concentration, t: usize) -> f64 {
    let ln_num = log_add_exp(alpha.ln(), 0.0);
    let ln_den = log_add_exp(alpha.ln() + ln_num_orders(t), 0.0);
    (ln_num - ln_den).exp()
}

/// Log probability of one specific vector of orders whose ties induce a
/// partition with the given block sizes:
/// `Γ(Nα)/Γ(Nα + n) Π_j Γ(α + n_j)/Γ(α)` with `N = 2^(T-1)`.
pub fn log_eppf_sizes(sizes: &[usize], alpha: Concentration, t: usize) -> f64 {
    let n: usize = sizes.iter().sum();
    let ln_total = alpha.ln() + ln_num_orders(t);
    let blocks: f64 = sizes.iter().map(|&s| ln_rising(alpha.ln(), s)).sum();
    blocks - ln_rising(ln_total, n)
}

pub fn log_eppf(partition: &Partition, alpha: Concentration, t: usize) -> f64 {
    log_eppf_sizes(&partition.sizes(), alpha, t)
}

/// Which expression to use for the probability of the set of unique orders.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniqueOrdersForm {
    /// `1 - Π_{j<k} (1 - 1/(N - j))`.
    #[default]
    Printed,
    /// `Π_{j<k} 1/(N - j)`, the probability of drawing `k` given distinct
    /// values uniformly without replacement.
    Standard,
}

/// Log probability of a set of `k` unique orders among the `2^(T-1)` possible.
pub fn log_unique_orders_prior(k: usize, t: usize, form: UniqueOrdersForm) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("T must be at least 1".into()));
    }
    let ln_n = ln_num_orders(t);
    if k == 0 || (t <= 64 && (k as u128) > (1u128 << (t - 1))) {
        return Err(Error::Domain(format!(
            "number of unique orders k = {k} must lie in 1..=2^(T-1) for T = {t}"
        )));
    }
    let n = ln_n.exp();
    match form {
        UniqueOrdersForm::Printed => {
            if n.is_finite() {
                // Σ log(1 - 1/(N - j))
                let mut acc = 0.0;
                for j in 0..k {
                    let remaining = n - j as f64;
                    acc += (-1.0 / remaining).ln_1p();
                }
                Ok((-acc.exp_m1()).ln())
            } else {
                // each factor is 1 - 1/N to first order
                Ok((k as f64).ln() - ln_n)
            }
        }
        UniqueOrdersForm::Standard => {
            let mut acc = 0.0;
            for j in 0..k {
                // log(N - j) = log N + log1p(-j/N)
                acc -= ln_n + (-(j as f64) / n).ln_1p();
            }
            Ok(acc)
        }
    }
}
