//! The data-informed proposal over orders.
//!
//! New orders are proposed from the mixture of single-series order posteriors
//!
//! ```text
//! ψ(ρ | Y) = (1/n) Σ_i L(y_i | ρ) / Z_i,      Z_i = Σ_ρ' L(y_i | ρ')
//! ```
//!
//! (the uniform order prior cancels). Sampling a component is done with a
//! short split-merge Metropolis chain on that series' posterior; evaluating
//! the mixture needs the `n` normalization constants `Z_i`, which are
//! estimated once by importance sampling (or computed exactly for short
//! series) before the main chain starts.
//!
//! The importance law draws the number of change points `c ~ Binomial(T-1, p)`
//! and then the block sizes of the `c + 1` blocks from a multinomial with equal
//! cell probabilities conditioned on every block being nonempty. The
//! conditioning is done exactly: a conditioned multinomial is the block-size
//! vector of a uniformly random surjection, sampled through the Stirling
//! recursion `S(n, k) = k S(n-1, k) + S(n-1, k-1)`.

use std::sync::{Arc, Mutex};

use dashmap::DashMap;
use rand::Rng as _;
use rand::seq::SliceRandom;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{Evaluator, Kernel};
use crate::numeric::{ln_choose, ln_factorial, ln_num_orders, log_add_exp, log_sum_exp};
use crate::orders::{enumerate_orders, RandomOrder};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Largest `T` for which exact enumeration is offered.
pub const MAX_EXACT_T: usize = 20;

/// `ln S(n, k)` for `0 <= k <= n <= t`, Stirling numbers of the second kind.
#[derive(Clone, Debug)]
pub struct LogStirling {
    t: usize,
    table: Vec<f64>,
}

impl LogStirling {
    pub fn new(t: usize) -> Self {
        let w = t + 1;
        let mut table = vec![f64::NEG_INFINITY; w * w];
        table[0] = 0.0;
        for n in 1..=t {
            for k in 1..=n {
                let stay = table[(n - 1) * w + k] + (k as f64).ln();
                let new = table[(n - 1) * w + k - 1];
                table[n * w + k] = log_add_exp(stay, new);
            }
        }
        Self { t, table }
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        if k > n || n > self.t {
            return f64::NEG_INFINITY;
        }
        self.table[n * (self.t + 1) + k]
    }
}

/// The binomial–multinomial importance law over orders of `T` points.
#[derive(Clone, Debug)]
pub struct ImportanceLaw {
    t: usize,
    p: f64,
    stirling: LogStirling,
}

impl ImportanceLaw {
    pub fn new(t: usize, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("binomial probability must lie in (0, 1), got {p}")));
        }
        if t == 0 {
            return Err(Error::Domain("T must be at least 1".into()));
        }
        Ok(Self {
            t,
            p,
            stirling: LogStirling::new(t),
        })
    }

    /// Block sizes of a uniform random surjection of `t` items onto `k` labels.
    fn surjection_sizes(&self, k: usize, rng: &mut Rng) -> Vec<usize> {
        // downward pass: is item n the first of its block given k blocks remain?
        let mut fresh = vec![false; self.t + 1];
        let mut kk = k;
        for n in (1..=self.t).rev() {
            let ln_total = self.stirling.get(n, kk);
            let ln_single = self.stirling.get(n - 1, kk - 1);
            let prob = (ln_single - ln_total).exp();
            if rng.random::<f64>() < prob {
                fresh[n] = true;
                kk -= 1;
            }
        }
        debug_assert_eq!(kk, 0);
        // upward pass: fresh items open a block, others join a uniform existing one
        let mut sizes: Vec<usize> = Vec::with_capacity(k);
        for &is_fresh in &fresh[1..] {
            if is_fresh {
                sizes.push(1);
            } else {
                let b = rng.random_range(0..sizes.len());
                sizes[b] += 1;
            }
        }
        sizes.shuffle(rng);
        sizes
    }

    pub fn sample(&self, rng: &mut Rng) -> RandomOrder {
        if self.t == 1 {
            return RandomOrder::one_block(1);
        }
        let change_points = Binomial::new((self.t - 1) as u64, self.p)
            .expect("valid binomial")
            .sample(rng) as usize;
        let sizes = self.surjection_sizes(change_points + 1, rng);
        let mut ends = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for s in sizes {
            acc += s;
            ends.push(acc);
        }
        RandomOrder::new(self.t, ends).expect("sizes form a composition of T")
    }

    /// Log probability of drawing `order`.
    pub fn log_pmf(&self, order: &RandomOrder) -> f64 {
        let t = self.t;
        let k = order.num_blocks();
        let c = (k - 1) as u64;
        let n = (t - 1) as u64;
        let ln_binom = ln_choose(n, c) + c as f64 * self.p.ln() + (n - c) as f64 * (-self.p).ln_1p();
        let ln_sizes: f64 = order.blocks().map(|r| ln_factorial(r.len() as u64)).sum();
        ln_binom + ln_factorial(t as u64) - ln_sizes - ln_factorial(k as u64) - self.stirling.get(t, k)
    }
}

/// Importance-sampling estimate of `log Σ_ρ L(y | ρ)` over all orders of `t` points.
pub fn estimate_log_norm_constant(
    log_lik: impl Fn(&RandomOrder) -> f64,
    t: usize,
    draws: usize,
    p: f64,
    seed: u64,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::Domain("importance sample size B must be at least 1".into()));
    }
    let law = ImportanceLaw::new(t, p)?;
    let mut rng = rng::rng_from(seed);
    let weights: Vec<f64> = (0..draws)
        .map(|_| {
            let o = law.sample(&mut rng);
            log_lik(&o) - law.log_pmf(&o)
        })
        .collect();
    let v = log_sum_exp(&weights) - (draws as f64).ln();
    if !v.is_finite() {
        return Err(Error::Evaluation(format!(
            "all {draws} importance draws had zero likelihood"
        )));
    }
    Ok(v)
}

/// Exact `log Σ_ρ L(y | ρ)` by enumeration.
pub fn exact_log_norm_constant(log_lik: impl Fn(&RandomOrder) -> f64, t: usize) -> Result<f64> {
    if t > MAX_EXACT_T {
        return Err(Error::TooManyOrders {
            t,
            limit: MAX_EXACT_T,
        });
    }
    let v: Vec<f64> = enumerate_orders(t)?.iter().map(log_lik).collect();
    Ok(log_sum_exp(&v))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    Importance,
    Exact,
}

/// One sidecar record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConstant {
    pub id: String,
    #[serde(rename = "logZ")]
    pub log_z: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub p: f64,
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: NormMethod,
}

fn default_method() -> NormMethod {
    NormMethod::Importance
}

/// Per-series log normalization constants of the single-series order posteriors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub entries: Vec<NormConstant>,
}

impl NormConstants {
    pub fn log_z(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.log_z).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that the constants belong to a dataset with these series ids.
    pub fn check_ids(&self, ids: &[String]) -> Result<()> {
        if self.entries.len() != ids.len()
            || self.entries.iter().zip(ids).any(|(e, id)| &e.id != id)
        {
            return Err(Error::Mismatch(
                "normalization constants do not match the dataset's series".into(),
            ));
        }
        if let Some(bad) = self.entries.iter().find(|e| !e.log_z.is_finite()) {
            return Err(Error::Mismatch(format!("non-finite logZ for series {}", bad.id)));
        }
        Ok(())
    }
}

/// Estimates every series' constant in parallel; series `i` uses seed `derive(seed, [i])`.
pub fn estimate_norm_constants<K: Kernel>(
    eval: &Evaluator<K>,
    draws: usize,
    p: f64,
    seed: u64,
) -> Result<NormConstants> {
    let ids = eval.dataset().ids();
    let t = eval.t();
    let entries = (0..eval.n())
        .into_par_iter()
        .map(|i| {
            let s = rng::derive(seed, &[i as u64]);
            let log_z = estimate_log_norm_constant(|o| eval.log_lik(i, o), t, draws, p, s)
                .map_err(|e| Error::Evaluation(format!("series {}: {e}", ids[i])))?;
            Ok(NormConstant {
                id: ids[i].clone(),
                log_z,
                b: draws,
                p,
                seed: s,
                method: NormMethod::Importance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormConstants { entries })
}

/// Forward sums of a block-factorizing order posterior:
/// `f[e] = log Σ over orders of the first e points of Π block values`.
#[derive(Clone, Debug)]
pub struct BlockRecursion {
    forward: Vec<f64>,
}

impl BlockRecursion {
    /// `block(s, e)` is the log value of the zero-based block `s..e`.
    pub fn new(t: usize, block: impl Fn(usize, usize) -> f64) -> Self {
        let mut forward = vec![f64::NEG_INFINITY; t + 1];
        forward[0] = 0.0;
        let mut terms = Vec::with_capacity(t);
        for e in 1..=t {
            terms.clear();
            terms.extend((0..e).map(|s| forward[s] + block(s, e)));
            forward[e] = log_sum_exp(&terms);
        }
        Self { forward }
    }

    /// `log Σ_ρ Π_blocks value`.
    pub fn log_total(&self) -> f64 {
        self.forward[self.forward.len() - 1]
    }

    /// Exact draw, sampling block starts backwards from the end.
    pub fn sample(&self, block: impl Fn(usize, usize) -> f64, rng: &mut Rng) -> RandomOrder {
        let t = self.forward.len() - 1;
        let mut ends = vec![t];
        let mut e = t;
        while e > 0 {
            let total = self.forward[e];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut start = 0;
            for s in (0..e).rev() {
                acc += (self.forward[s] + block(s, e) - total).exp();
                if u < acc {
                    start = s;
                    break;
                }
            }
            if start > 0 {
                ends.push(start);
            }
            e = start;
        }
        ends.reverse();
        RandomOrder::new(t, ends).expect("increasing block ends")
    }
}

/// Exact `log Σ_ρ L(y_i | ρ)` for every series: by the block recursion when the
/// kernel factorizes, by enumeration for short series otherwise.
pub fn exact_norm_constants<K: Kernel>(eval: &Evaluator<K>) -> Result<NormConstants> {
    let ids = eval.dataset().ids();
    let t = eval.t();
    let entries = (0..eval.n())
        .into_par_iter()
        .map(|i| {
            let log_z = if eval.factorizes() {
                BlockRecursion::new(t, |s, e| eval.block_log_lik(i, s..e).expect("factorizes"))
                    .log_total()
            } else {
                exact_log_norm_constant(|o| eval.log_lik(i, o), t)?
            };
            Ok(NormConstant {
                id: ids[i].clone(),
                log_z,
                b: 0,
                p: 0.5,
                seed: 0,
                method: NormMethod::Exact,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormConstants { entries })
}

/// One split-or-merge Metropolis step on a single series' order posterior
/// under the uniform order prior.
///
/// A split picks a uniformly chosen block of size at least two and cuts it
/// at a uniform position; a merge joins a uniformly chosen adjacent pair.
/// Impossible moves count as rejections. Returns whether the move was accepted.
pub fn split_merge_step(
    current: &mut RandomOrder,
    current_ll: &mut f64,
    log_lik: &impl Fn(&RandomOrder) -> f64,
    q_split: f64,
    rng: &mut Rng,
) -> bool {
    let m = current.num_blocks();
    let sizes = current.block_sizes();
    let split = rng.random::<f64>() < q_split;
    let (candidate, log_q_ratio) = if split {
        let splittable: Vec<usize> = (0..m).filter(|&j| sizes[j] >= 2).collect();
        if splittable.is_empty() {
            return false;
        }
        let block = splittable[rng.random_range(0..splittable.len())];
        let len = sizes[block];
        let cut = rng.random_range(1..len);
        let cand = current.split_block(block, cut);
        // reverse: merge one of the m adjacent pairs of the new order
        let fwd = q_split.ln() - (splittable.len() as f64).ln() - ((len - 1) as f64).ln();
        let rev = (1.0 - q_split).ln() - (m as f64).ln();
        (cand, rev - fwd)
    } else {
        if m == 1 {
            return false;
        }
        let block = rng.random_range(0..m - 1);
        let merged_len = sizes[block] + sizes[block + 1];
        let cand = current.merge_blocks(block);
        let splittable_after = cand.block_sizes().iter().filter(|&&s| s >= 2).count();
        let fwd = (1.0 - q_split).ln() - ((m - 1) as f64).ln();
        let rev = q_split.ln() - (splittable_after as f64).ln() - ((merged_len - 1) as f64).ln();
        (cand, rev - fwd)
    };
    let cand_ll = log_lik(&candidate);
    let log_ratio = cand_ll - *current_ll + log_q_ratio;
    let u: f64 = rng.random();
    // a -inf current state accepts any finite candidate
    if u.ln() < log_ratio || (current_ll.is_infinite() && cand_ll.is_finite()) {
        *current = candidate;
        *current_ll = cand_ll;
        true
    } else {
        false
    }
}

/// Initial order with i.i.d. fair change-point indicators (uniform over orders).
pub fn uniform_order(t: usize, rng: &mut Rng) -> RandomOrder {
    let bits: Vec<bool> = (0..t.saturating_sub(1)).map(|_| rng.random::<bool>()).collect();
    RandomOrder::from_indicators(&bits)
}

/// Draws from one series' order posterior approximately: a start drawn from
/// `start` followed by `depth` split-merge steps.
pub fn sample_single_series_order(
    log_lik: impl Fn(&RandomOrder) -> f64,
    t: usize,
    depth: usize,
    q_split: f64,
    start: ChainStart,
    rng: &mut Rng,
) -> RandomOrder {
    let mut order = start.draw(t, rng);
    if t == 1 {
        return order;
    }
    let mut ll = log_lik(&order);
    for _ in 0..depth {
        split_merge_step(&mut order, &mut ll, &log_lik, q_split, rng);
    }
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalConfig {
    /// Split-merge steps per proposed order (`L`).
    pub depth: usize,
    /// Probability of attempting a split in those steps.
    pub q_split: f64,
    /// Sample components exactly: by the block recursion for factorizing
    /// kernels, from enumerated posteriors for short series otherwise.
    pub exact: bool,
    /// Continue each series' split-merge chain from its previous draw
    /// instead of restarting it.
    pub warm_start: bool,
    /// State each component chain starts from.
    pub start: ChainStart,
}

/// Initial state of a per-series split-merge chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainStart {
    /// Independent fair change-point indicators.
    #[default]
    Uniform,
    /// A single block.
    OneBlock,
}

impl ChainStart {
    pub fn draw(self, t: usize, rng: &mut Rng) -> RandomOrder {
        match self {
            ChainStart::Uniform => uniform_order(t, rng),
            ChainStart::OneBlock => RandomOrder::one_block(t),
        }
    }
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            depth: 1,
            q_split: 0.5,
            exact: false,
            warm_start: false,
            start: ChainStart::Uniform,
        }
    }
}

impl ProposalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 && !self.exact {
            return Err(Error::Config("proposal depth L must be at least 1".into()));
        }
        if !(self.q_split > 0.0 && self.q_split < 1.0) {
            return Err(Error::Config(format!(
                "q_split must lie in (0, 1), got {}",
                self.q_split
            )));
        }
        Ok(())
    }
}

enum Sampling {
    Chain,
    Warm(Mutex<Vec<Option<(RandomOrder, f64)>>>),
    Enumerated {
        orders: Vec<RandomOrder>,
        cumulative: Vec<Vec<f64>>,
    },
    Recursion(Vec<BlockRecursion>),
}

/// The mixture-of-posteriors proposal bound to a dataset.
///
/// Its likelihood evaluations use the kernel's initial local state, so `ψ`
/// stays a fixed distribution for the whole run.
pub struct Proposal<K: Kernel> {
    eval: Evaluator<K>,
    log_z: Vec<f64>,
    config: ProposalConfig,
    psi_cache: DashMap<RandomOrder, f64>,
    sampling: Sampling,
}

impl<K: Kernel> Proposal<K> {
    pub fn new(eval: Evaluator<K>, constants: &NormConstants, config: ProposalConfig) -> Result<Self> {
        config.validate()?;
        constants.check_ids(&eval.dataset().ids())?;
        let log_z = constants.log_z();
        let t = eval.t();
        let sampling = if config.exact && eval.factorizes() {
            Sampling::Recursion(
                (0..eval.n())
                    .into_par_iter()
                    .map(|i| BlockRecursion::new(t, |s, e| eval.block_log_lik(i, s..e).expect("factorizes")))
                    .collect(),
            )
        } else if config.exact {
            let orders = enumerate_orders(t)?;
            if t > MAX_EXACT_T {
                return Err(Error::TooManyOrders { t, limit: MAX_EXACT_T });
            }
            let cumulative = (0..eval.n())
                .map(|i| {
                    let lls: Vec<f64> = orders.iter().map(|o| eval.log_lik(i, o)).collect();
                    let z = log_sum_exp(&lls);
                    let mut acc = 0.0;
                    lls.iter()
                        .map(|ll| {
                            acc += (ll - z).exp();
                            acc
                        })
                        .collect()
                })
                .collect();
            Sampling::Enumerated { orders, cumulative }
        } else if config.warm_start {
            Sampling::Warm(Mutex::new(vec![None; eval.n()]))
        } else {
            Sampling::Chain
        };
        Ok(Self {
            eval,
            log_z,
            config,
            psi_cache: DashMap::new(),
            sampling,
        })
    }

    pub fn evaluator(&self) -> &Evaluator<K> {
        &self.eval
    }

    pub fn config(&self) -> &ProposalConfig {
        &self.config
    }

    pub fn log_z(&self) -> &[f64] {
        &self.log_z
    }

    /// Current states of the warm-started component chains, if any.
    pub fn warm_states(&self) -> Option<Vec<Option<RandomOrder>>> {
        match &self.sampling {
            Sampling::Warm(states) => Some(
                states
                    .lock()
                    .expect("unpoisoned")
                    .iter()
                    .map(|s| s.as_ref().map(|(o, _)| o.clone()))
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Restores component chain states saved by [`Proposal::warm_states`].
    pub fn restore_warm_states(&self, saved: &[Option<RandomOrder>]) -> Result<()> {
        if let Sampling::Warm(states) = &self.sampling {
            if saved.len() != self.eval.n() {
                return Err(Error::Mismatch("saved proposal states do not match the dataset".into()));
            }
            let mut st = states.lock().expect("unpoisoned");
            for (i, o) in saved.iter().enumerate() {
                st[i] = o.as_ref().map(|o| (o.clone(), self.eval.log_lik(i, o)));
            }
        }
        Ok(())
    }

    /// Draws a component order for series `i`.
    pub fn sample_component(&self, i: usize, rng: &mut Rng) -> RandomOrder {
        let t = self.eval.t();
        let ll = |o: &RandomOrder| self.eval.log_lik(i, o);
        match &self.sampling {
            Sampling::Enumerated { orders, cumulative } => {
                let cum = &cumulative[i];
                let u = rng.random::<f64>() * cum[cum.len() - 1];
                let idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
                orders[idx].clone()
            }
            Sampling::Recursion(rec) => rec[i].sample(
                |s, e| self.eval.block_log_lik(i, s..e).expect("factorizes"),
                rng,
            ),
            Sampling::Warm(states) => {
                let mut st = states.lock().expect("unpoisoned");
                let (mut order, mut cur) = match st[i].take() {
                    Some(s) => s,
                    None => {
                        let o = self.config.start.draw(t, rng);
                        let v = ll(&o);
                        (o, v)
                    }
                };
                if t > 1 {
                    for _ in 0..self.config.depth {
                        split_merge_step(&mut order, &mut cur, &ll, self.config.q_split, rng);
                    }
                }
                st[i] = Some((order.clone(), cur));
                order
            }
            Sampling::Chain => {
                sample_single_series_order(ll, t, self.config.depth, self.config.q_split, self.config.start, rng)
            }
        }
    }

    /// Picks a series uniformly and samples from its order posterior.
    pub fn sample(&self, rng: &mut Rng) -> RandomOrder {
        let i = rng.random_range(0..self.eval.n());
        self.sample_component(i, rng)
    }

    /// `log ψ(ρ)`.
    pub fn log_psi(&self, order: &RandomOrder) -> f64 {
        if let Some(v) = self.psi_cache.get(order) {
            return *v;
        }
        let v = log_psi(order, &self.eval, &self.log_z);
        self.psi_cache.insert(order.clone(), v);
        v
    }
}

/// `log[(1/n) Σ_i exp(log L(y_i | ρ) - Z_i)]`.
pub fn log_psi<K: Kernel>(order: &RandomOrder, eval: &Evaluator<K>, log_z: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..eval.n()).map(|i| eval.log_lik(i, order) - log_z[i]).collect();
    log_sum_exp(&terms) - (eval.n() as f64).ln()
}

/// Picks a series uniformly and draws from its order posterior with `depth`
/// split-merge steps, from a single seed.
pub fn propose_order<K: Kernel>(eval: &Evaluator<K>, depth: usize, q_split: f64, seed: u64) -> RandomOrder {
    let mut rng = rng::rng_from(seed);
    let i = rng.random_range(0..eval.n());
    sample_single_series_order(|o| eval.log_lik(i, o), eval.t(), depth, q_split, ChainStart::Uniform, &mut rng)
}

/// Convenience constructor bundling an evaluator with shared kernel and data.
pub fn build_proposal<K: Kernel>(
    kernel: Arc<K>,
    data: Arc<crate::kernel::Dataset<K::Payload>>,
    eval_seed: u64,
    constants: &NormConstants,
    config: ProposalConfig,
) -> Result<Proposal<K>> {
    Proposal::new(Evaluator::new(kernel, data, eval_seed), constants, config)
}

/// `log 2^(T-1)`; re-exported for callers folding the uniform order prior.
pub fn ln_uniform_order_mass(t: usize) -> f64 {
    ln_num_orders(t)
}
