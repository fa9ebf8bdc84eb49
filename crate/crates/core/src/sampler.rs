//! Split-merge Metropolis–Hastings over partitions of series and their orders.
//!
//! The chain state is a partition of the `n` series together with one
//! distinct order per cluster. Its target is
//!
//! ```text
//! π(z, ρ) ∝ p(z | α) Π_j Π_{i ∈ B_j} L(y_i | ρ_j)
//! ```
//!
//! where `p(z | α)` is the Dirichlet-categorical probability of the order
//! vector. Each iteration picks an ordered pair of distinct series, proposes a
//! split (same cluster) or a merge (different clusters) with fresh orders drawn
//! from the mixture proposal `ψ`, then refreshes each cluster's order with an
//! independence Metropolis step using `ψ`. Kernels with local state get one
//! local update per series at the end of every `local_every`-th iteration.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::kernel::{Evaluator, Kernel};
use crate::orders::{
    default_alpha, log_eppf_sizes, log_unique_orders_prior, Concentration, Partition, RandomOrder,
    UniqueOrdersForm,
};
use crate::proposal::Proposal;
use crate::rng::{self, Rng};
use crate::{Error, Result};

const LN_2: f64 = std::f64::consts::LN_2;

/// Starting partition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// All series in one cluster with an order drawn from `ψ`.
    #[default]
    OneCluster,
    /// Every series alone, each with an order drawn from its own posterior.
    Singletons,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Number of iterations `M`, burn-in included.
    pub iterations: usize,
    pub burn_in: usize,
    /// Dirichlet concentration; `None` means `1 / 2^(T-1)`.
    pub alpha: Option<f64>,
    /// Include a factor for the set of unique orders in the target.
    pub unique_orders: Option<UniqueOrdersForm>,
    /// Run the per-cluster order refresh every iteration.
    pub accelerate: bool,
    pub init: Init,
    pub seed: u64,
    /// Update local states every this many iterations; 0 disables them.
    pub local_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            burn_in: 2000,
            alpha: None,
            unique_orders: None,
            accelerate: true,
            init: Init::OneCluster,
            seed: 1,
            local_every: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if let Some(a) = self.alpha {
            Concentration::new(a).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn concentration(&self, t: usize) -> Result<Concentration> {
        match self.alpha {
            Some(a) => Concentration::new(a),
            None => Ok(default_alpha(t)),
        }
    }
}

/// One stored iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub iter: usize,
    pub partition: Partition,
    /// Orders of the clusters, indexed by cluster label.
    pub orders: Vec<RandomOrder>,
    pub logpost: f64,
    /// Whether this iteration's split or merge was accepted.
    pub accepted: bool,
}

/// Move counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub split_proposed: usize,
    pub split_accepted: usize,
    pub merge_proposed: usize,
    pub merge_accepted: usize,
    pub refresh_proposed: usize,
    pub refresh_accepted: usize,
    pub local_changed: usize,
}

impl MoveStats {
    pub fn split_merge_rate(&self) -> f64 {
        let p = self.split_proposed + self.merge_proposed;
        if p == 0 {
            0.0
        } else {
            (self.split_accepted + self.merge_accepted) as f64 / p as f64
        }
    }
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<L> {
    /// Completed iterations.
    pub iter: usize,
    pub partition: Partition,
    pub orders: Vec<RandomOrder>,
    pub locals: Vec<L>,
    pub rng_seed: u64,
    /// ChaCha word position, as a decimal string.
    pub rng_word_pos: String,
    pub stats: MoveStats,
    /// Cached per-cluster log-likelihood sums, restored so that resumed
    /// traces match an uninterrupted run bit for bit.
    #[serde(default)]
    pub cluster_log_lik: Vec<f64>,
    /// States of warm-started proposal chains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_states: Option<Vec<Option<RandomOrder>>>,
}

/// Result of a complete run.
#[derive(Clone, Debug)]
pub struct ChainOutput<L> {
    pub records: Vec<ChainRecord>,
    pub stats: MoveStats,
    pub final_locals: Vec<L>,
    pub evaluations: usize,
    pub failures: usize,
}

impl<L> ChainOutput<L> {
    /// Partitions after burn-in.
    pub fn partitions_after(&self, burn_in: usize) -> Vec<Partition> {
        self.records
            .iter()
            .filter(|r| r.iter > burn_in)
            .map(|r| r.partition.clone())
            .collect()
    }
}

/// The chain with its state.
pub struct Sampler<K: Kernel> {
    eval: Evaluator<K>,
    proposal: Arc<Proposal<K>>,
    config: SamplerConfig,
    alpha: Concentration,
    labels: Vec<usize>,
    orders: Vec<RandomOrder>,
    cluster_ll: Vec<f64>,
    rng: Rng,
    rng_seed: u64,
    iter: usize,
    stats: MoveStats,
}

impl<K: Kernel> Sampler<K> {
    /// `eval` scores the target and owns the kernel's local state; `proposal`
    /// must be built on the same dataset.
    pub fn new(eval: Evaluator<K>, proposal: Arc<Proposal<K>>, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        let n = eval.n();
        if n < 1 || proposal.evaluator().n() != n || proposal.evaluator().t() != eval.t() {
            return Err(Error::Mismatch("proposal and target evaluators disagree".into()));
        }
        let alpha = config.concentration(eval.t())?;
        let rng_seed = rng::derive(config.seed, &[0x5a4d]);
        let mut rng = rng::rng_from(rng_seed);
        let (labels, orders) = match config.init {
            Init::OneCluster => (vec![0; n], vec![proposal.sample(&mut rng)]),
            Init::Singletons => {
                let mut labels = Vec::with_capacity(n);
                let mut orders: Vec<RandomOrder> = Vec::new();
                for i in 0..n {
                    let mut o = proposal.sample_component(i, &mut rng);
                    let mut tries = 0;
                    while orders.contains(&o) && tries < 100 {
                        o = proposal.sample_component(i, &mut rng);
                        tries += 1;
                    }
                    match orders.iter().position(|x| *x == o) {
                        Some(j) => labels.push(j),
                        None => {
                            labels.push(orders.len());
                            orders.push(o);
                        }
                    }
                }
                (labels, orders)
            }
        };
        let mut s = Self {
            eval,
            proposal,
            config,
            alpha,
            labels,
            orders,
            cluster_ll: Vec::new(),
            rng,
            rng_seed,
            iter: 0,
            stats: MoveStats::default(),
        };
        s.refresh_cluster_ll();
        Ok(s)
    }

    /// Restores a chain from a checkpoint written by [`Sampler::checkpoint`].
    pub fn resume(
        mut eval: Evaluator<K>,
        proposal: Arc<Proposal<K>>,
        config: SamplerConfig,
        ck: Checkpoint<K::Local>,
    ) -> Result<Self> {
        config.validate()?;
        let n = eval.n();
        if ck.partition.n() != n || ck.orders.len() != ck.partition.k() || ck.locals.len() != n {
            return Err(Error::Mismatch("checkpoint does not match the dataset".into()));
        }
        if ck.orders.iter().any(|o| o.t() != eval.t()) {
            return Err(Error::Mismatch("checkpoint orders have the wrong length".into()));
        }
        for (i, l) in ck.locals.into_iter().enumerate() {
            eval.set_local(i, l);
        }
        let word_pos: u128 = ck
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Parse(format!("bad rng word position {:?}", ck.rng_word_pos)))?;
        let mut rng = rng::rng_from(ck.rng_seed);
        rng.set_word_pos(word_pos);
        if let Some(states) = &ck.proposal_states {
            proposal.restore_warm_states(states)?;
        }
        let alpha = config.concentration(eval.t())?;
        let mut s = Self {
            eval,
            proposal,
            config,
            alpha,
            labels: ck.partition.labels().to_vec(),
            orders: ck.orders,
            cluster_ll: Vec::new(),
            rng,
            rng_seed: ck.rng_seed,
            iter: ck.iter,
            stats: ck.stats,
        };
        s.refresh_cluster_ll();
        if ck.cluster_log_lik.len() == s.cluster_ll.len()
            && ck.cluster_log_lik.iter().zip(&s.cluster_ll).all(|(a, b)| (a - b).abs() <= 1e-8 * b.abs().max(1.0))
        {
            s.cluster_ll = ck.cluster_log_lik;
        }
        Ok(s)
    }

    pub fn checkpoint(&self) -> Checkpoint<K::Local> {
        Checkpoint {
            iter: self.iter,
            partition: self.partition(),
            orders: self.orders.clone(),
            locals: self.eval.locals().to_vec(),
            rng_seed: self.rng_seed,
            rng_word_pos: self.rng.get_word_pos().to_string(),
            stats: self.stats,
            cluster_log_lik: self.cluster_ll.clone(),
            proposal_states: self.proposal.warm_states(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn stats(&self) -> MoveStats {
        self.stats
    }

    pub fn evaluator(&self) -> &Evaluator<K> {
        &self.eval
    }

    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.labels)
    }

    pub fn orders(&self) -> &[RandomOrder] {
        &self.orders
    }

    fn cluster_log_lik(&self, members: &[usize], order: &RandomOrder) -> f64 {
        members.iter().map(|&i| self.eval.log_lik(i, order)).sum()
    }

    fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == label).collect()
    }

    fn refresh_cluster_ll(&mut self) {
        self.canonicalize();
        self.cluster_ll = (0..self.orders.len())
            .map(|j| self.cluster_log_lik(&self.members(j), &self.orders[j]))
            .collect();
    }

    /// Relabels clusters by first appearance, permuting orders and cached sums.
    fn canonicalize(&mut self) {
        let mut map = vec![usize::MAX; self.orders.len()];
        let mut next = 0;
        for l in self.labels.iter_mut() {
            if map[*l] == usize::MAX {
                map[*l] = next;
                next += 1;
            }
            *l = map[*l];
        }
        let mut orders = vec![RandomOrder::one_block(1); next];
        let mut ll = vec![0.0; next];
        for (old, &new) in map.iter().enumerate() {
            if new != usize::MAX {
                orders[new] = self.orders[old].clone();
                if let Some(v) = self.cluster_ll.get(old) {
                    ll[new] = *v;
                }
            }
        }
        self.orders = orders;
        if !self.cluster_ll.is_empty() {
            self.cluster_ll = ll;
        }
    }

    fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.orders.len()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    fn log_prior_sizes(&self, sizes: &[usize]) -> Result<f64> {
        let t = self.eval.t();
        let mut v = log_eppf_sizes(sizes, self.alpha, t);
        if let Some(form) = self.config.unique_orders {
            v += log_unique_orders_prior(sizes.len(), t, form)?;
        }
        Ok(v)
    }

    /// Log target of the current state, from cached cluster sums.
    pub fn log_posterior(&self) -> f64 {
        self.log_prior_sizes(&self.sizes()).unwrap_or(f64::NEG_INFINITY)
            + self.cluster_ll.iter().sum::<f64>()
    }

    /// Log target recomputed through the kernel without any cache.
    pub fn recompute_log_posterior(&self) -> Result<f64> {
        let kernel = self.eval.kernel();
        let data = self.eval.dataset();
        let mut ll = 0.0;
        for (i, &l) in self.labels.iter().enumerate() {
            let order = &self.orders[l];
            let seed = self.eval.eval_seed(i);
            ll += kernel.log_marginal(&data.get(i).payload, &self.eval.locals()[i], order, seed)?;
        }
        Ok(self.log_prior_sizes(&self.sizes())? + ll)
    }

    fn accept(&mut self, log_ratio: f64) -> bool {
        if log_ratio.is_nan() {
            return false;
        }
        log_ratio >= 0.0 || self.rng.random::<f64>().ln() < log_ratio
    }

    fn split_merge(&mut self) -> Result<bool> {
        let n = self.labels.len();
        if n < 2 {
            return Ok(false);
        }
        let i = self.rng.random_range(0..n);
        let mut l = self.rng.random_range(0..n - 1);
        if l >= i {
            l += 1;
        }
        if self.labels[i] == self.labels[l] {
            self.split(i, l)
        } else {
            self.merge(i, l)
        }
    }

    fn split(&mut self, i: usize, l: usize) -> Result<bool> {
        self.stats.split_proposed += 1;
        let s = self.labels[i];
        let members = self.members(s);
        let new_s = self.proposal.sample(&mut self.rng);
        let new_r = self.proposal.sample(&mut self.rng);
        let mut left = vec![i];
        let mut right = vec![l];
        for &m in &members {
            if m != i && m != l {
                if self.rng.random::<bool>() {
                    left.push(m);
                } else {
                    right.push(m);
                }
            }
        }
        let clash = new_s == new_r
            || self
                .orders
                .iter()
                .enumerate()
                .any(|(j, o)| j != s && (*o == new_s || *o == new_r));
        if clash {
            return Ok(false);
        }
        let mut sizes = self.sizes();
        let old_prior = self.log_prior_sizes(&sizes)?;
        sizes[s] = left.len();
        sizes.push(right.len());
        let new_prior = self.log_prior_sizes(&sizes)?;
        let ll_left = self.cluster_log_lik(&left, &new_s);
        let ll_right = self.cluster_log_lik(&right, &new_r);
        let log_ratio = new_prior - old_prior + ll_left + ll_right - self.cluster_ll[s]
            + (members.len() as f64 - 2.0) * LN_2
            + self.proposal.log_psi(&self.orders[s])
            - self.proposal.log_psi(&new_s)
            - self.proposal.log_psi(&new_r);
        if !self.accept(log_ratio) {
            return Ok(false);
        }
        let r = self.orders.len();
        for &m in &right {
            self.labels[m] = r;
        }
        self.orders[s] = new_s;
        self.orders.push(new_r);
        self.cluster_ll[s] = ll_left;
        self.cluster_ll.push(ll_right);
        self.canonicalize();
        self.stats.split_accepted += 1;
        Ok(true)
    }

    fn merge(&mut self, i: usize, l: usize) -> Result<bool> {
        self.stats.merge_proposed += 1;
        let s = self.labels[i];
        let r = self.labels[l];
        let new = self.proposal.sample(&mut self.rng);
        if self
            .orders
            .iter()
            .enumerate()
            .any(|(j, o)| j != s && j != r && *o == new)
        {
            return Ok(false);
        }
        let mut merged = self.members(s);
        merged.extend(self.members(r));
        let mut sizes = self.sizes();
        let old_prior = self.log_prior_sizes(&sizes)?;
        sizes[s] += sizes[r];
        sizes.remove(r);
        let new_prior = self.log_prior_sizes(&sizes)?;
        let ll_new = self.cluster_log_lik(&merged, &new);
        let log_ratio = new_prior - old_prior + ll_new - self.cluster_ll[s] - self.cluster_ll[r]
            - (merged.len() as f64 - 2.0) * LN_2
            + self.proposal.log_psi(&self.orders[s])
            + self.proposal.log_psi(&self.orders[r])
            - self.proposal.log_psi(&new);
        if !self.accept(log_ratio) {
            return Ok(false);
        }
        for &m in &merged {
            self.labels[m] = s;
        }
        self.orders[s] = new;
        self.cluster_ll[s] = ll_new;
        // r is now empty; canonicalize drops it
        self.canonicalize_dropping(r);
        self.stats.merge_accepted += 1;
        Ok(true)
    }

    fn canonicalize_dropping(&mut self, empty: usize) {
        self.orders.remove(empty);
        self.cluster_ll.remove(empty);
        for l in self.labels.iter_mut() {
            if *l > empty {
                *l -= 1;
            }
        }
        self.canonicalize();
    }

    /// Independence Metropolis refresh of each cluster's order with `ψ`.
    fn refresh_orders(&mut self) {
        for j in 0..self.orders.len() {
            self.stats.refresh_proposed += 1;
            let cand = self.proposal.sample(&mut self.rng);
            if self.orders.contains(&cand) {
                continue;
            }
            let members = self.members(j);
            let ll = self.cluster_log_lik(&members, &cand);
            let log_ratio = ll - self.cluster_ll[j] + self.proposal.log_psi(&self.orders[j])
                - self.proposal.log_psi(&cand);
            if self.accept(log_ratio) {
                self.orders[j] = cand;
                self.cluster_ll[j] = ll;
                self.stats.refresh_accepted += 1;
            }
        }
    }

    fn update_locals(&mut self) -> Result<()> {
        if !self.eval.kernel().has_local_updates() {
            return Ok(());
        }
        let mut changed = false;
        for i in 0..self.labels.len() {
            let order = self.orders[self.labels[i]].clone();
            if self.eval.update_local(i, &order, &mut self.rng)? {
                self.stats.local_changed += 1;
                changed = true;
            }
        }
        if changed {
            self.refresh_cluster_ll();
        }
        Ok(())
    }

    /// Runs one iteration and returns its record.
    pub fn step(&mut self) -> Result<ChainRecord> {
        let accepted = self.split_merge()?;
        if self.config.accelerate {
            self.refresh_orders();
        }
        let every = self.config.local_every;
        if every > 0 && (self.iter + 1).is_multiple_of(every) {
            self.update_locals()?;
        }
        self.iter += 1;
        Ok(ChainRecord {
            iter: self.iter,
            partition: self.partition(),
            orders: self.orders.clone(),
            logpost: self.log_posterior(),
            accepted,
        })
    }

    /// Runs until `config.iterations` iterations are complete.
    pub fn run_to_end(&mut self, mut on_record: impl FnMut(&ChainRecord) -> Result<()>) -> Result<()> {
        while self.iter < self.config.iterations {
            let rec = self.step()?;
            on_record(&rec)?;
        }
        Ok(())
    }
}

/// Runs a full chain from scratch, keeping every record.
pub fn run_mcmc<K: Kernel>(
    eval: Evaluator<K>,
    proposal: Arc<Proposal<K>>,
    config: SamplerConfig,
) -> Result<ChainOutput<K::Local>> {
    let mut sampler = Sampler::new(eval, proposal, config)?;
    let mut records = Vec::with_capacity(sampler.config.iterations);
    sampler.run_to_end(|r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok(ChainOutput {
        records,
        stats: sampler.stats,
        final_locals: sampler.eval.locals().to_vec(),
        evaluations: sampler.eval.evaluations(),
        failures: sampler.eval.failures(),
    })
}
