//! Observation kernels.
//!
//! A kernel turns one observed series and a candidate [`RandomOrder`] into the
//! log marginal likelihood `log L(y_i | ρ)` with the block-local parameters
//! integrated out. Kernels whose likelihood factorizes over blocks
//! (Ornstein–Uhlenbeck) also expose the per-block term, which the
//! [`Evaluator`] memoizes by `(series, block start, block end)`. Kernels whose
//! blocks are coupled (the SIR kernel, where the susceptible curve depends on
//! the whole infection-rate path) are memoized by whole order.
//!
//! Non-finite values are reported as [`Error::Evaluation`]; the evaluator maps
//! them to `-inf`, i.e. certain rejection.

pub mod ou;
pub mod sir;

use std::fmt::Debug;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::orders::RandomOrder;
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// An observation model for one series.
pub trait Kernel: Send + Sync {
    /// Kernel-specific observations of one series.
    type Payload: Send + Sync + Debug;
    /// Per-series nuisance state that the sampler updates in separate sweeps
    /// (the initial infected proportion for the SIR kernel). `()` when absent.
    type Local: Clone + Send + Sync + Debug + PartialEq + Serialize + DeserializeOwned;

    fn name(&self) -> &'static str;

    /// Number of time points covered by the payload.
    fn horizon(&self, payload: &Self::Payload) -> usize;

    fn init_local(&self, payload: &Self::Payload) -> Self::Local;

    /// `log L(y | ρ)` with local parameters integrated out. Must be a
    /// deterministic function of its arguments.
    fn log_marginal(
        &self,
        payload: &Self::Payload,
        local: &Self::Local,
        order: &RandomOrder,
        seed: u64,
    ) -> Result<f64>;

    /// Log marginal of one block (zero-based half-open time range) for kernels
    /// that factorize over blocks; `None` otherwise.
    fn block_log_marginal(
        &self,
        _payload: &Self::Payload,
        _local: &Self::Local,
        _block: Range<usize>,
    ) -> Option<Result<f64>> {
        None
    }

    /// Whether [`Kernel::update_local`] does anything.
    fn has_local_updates(&self) -> bool {
        false
    }

    /// One conditional update of the local state given the series' current
    /// order. `seed` is the seed the likelihood of that order is evaluated
    /// with and `current` its log marginal under `local`, when known.
    fn update_local(
        &self,
        _payload: &Self::Payload,
        local: &Self::Local,
        _order: &RandomOrder,
        _current: Option<f64>,
        _seed: u64,
        _rng: &mut Rng,
    ) -> Result<Self::Local> {
        Ok(local.clone())
    }
}

/// One observed series.
#[derive(Clone, Debug)]
pub struct Series<P> {
    pub id: String,
    pub payload: P,
}

/// Aligned series sharing the same horizon `T`.
#[derive(Clone, Debug)]
pub struct Dataset<P> {
    series: Vec<Series<P>>,
    t: usize,
}

impl<P> Dataset<P> {
    /// Builds a dataset, checking that every series has the same horizon.
    pub fn new(series: Vec<Series<P>>, horizon: impl Fn(&P) -> usize) -> Result<Self> {
        let first = series
            .first()
            .ok_or_else(|| Error::Mismatch("dataset has no series".into()))?;
        let t = horizon(&first.payload);
        if t == 0 {
            return Err(Error::Mismatch("series have zero length".into()));
        }
        if let Some(bad) = series.iter().find(|s| horizon(&s.payload) != t) {
            return Err(Error::Mismatch(format!(
                "series {} has horizon {} but the dataset has {t}",
                bad.id,
                horizon(&bad.payload)
            )));
        }
        Ok(Self { series, t })
    }

    pub fn for_kernel<K: Kernel<Payload = P>>(kernel: &K, series: Vec<Series<P>>) -> Result<Self> {
        Self::new(series, |p| kernel.horizon(p))
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn series(&self) -> &[Series<P>] {
        &self.series
    }

    pub fn get(&self, i: usize) -> &Series<P> {
        &self.series[i]
    }

    pub fn ids(&self) -> Vec<String> {
        self.series.iter().map(|s| s.id.clone()).collect()
    }
}

const EMPTY: u64 = u64::MAX;

/// Lazily filled triangular table of block log marginals for one series.
struct BlockTable {
    cells: Vec<AtomicU64>,
}

impl BlockTable {
    fn new(t: usize) -> Self {
        Self {
            cells: (0..t * (t + 1) / 2).map(|_| AtomicU64::new(EMPTY)).collect(),
        }
    }

    fn index(r: &Range<usize>) -> usize {
        r.end * (r.end - 1) / 2 + r.start
    }

    fn get(&self, r: &Range<usize>) -> Option<f64> {
        let bits = self.cells[Self::index(r)].load(Ordering::Relaxed);
        (bits != EMPTY).then(|| f64::from_bits(bits))
    }

    fn put(&self, r: &Range<usize>, v: f64) {
        self.cells[Self::index(r)].store(v.to_bits(), Ordering::Relaxed);
    }

    fn clear(&self) {
        for c in &self.cells {
            c.store(EMPTY, Ordering::Relaxed);
        }
    }
}

/// Memoizing evaluator of `log L(y_i | ρ)` over a dataset.
///
/// Failures are returned as `-inf`. All caches allow concurrent insertion, so
/// one evaluator can be shared by worker threads.
pub struct Evaluator<K: Kernel> {
    kernel: Arc<K>,
    data: Arc<Dataset<K::Payload>>,
    locals: Vec<K::Local>,
    seed: u64,
    blocks: Option<Vec<BlockTable>>,
    orders: Vec<DashMap<RandomOrder, f64>>,
    evaluations: AtomicUsize,
    failures: AtomicUsize,
}

impl<K: Kernel> Evaluator<K> {
    pub fn new(kernel: Arc<K>, data: Arc<Dataset<K::Payload>>, seed: u64) -> Self {
        let locals = data
            .series()
            .iter()
            .map(|s| kernel.init_local(&s.payload))
            .collect();
        Self::with_locals(kernel, data, locals, seed)
    }

    pub fn with_locals(
        kernel: Arc<K>,
        data: Arc<Dataset<K::Payload>>,
        locals: Vec<K::Local>,
        seed: u64,
    ) -> Self {
        assert_eq!(locals.len(), data.len());
        let t = data.t();
        let factorizes = data.series().first().is_some_and(|s| {
            kernel
                .block_log_marginal(&s.payload, &locals[0], 0..t)
                .is_some()
        });
        let blocks = factorizes.then(|| (0..data.len()).map(|_| BlockTable::new(t)).collect());
        let orders = (0..data.len()).map(|_| DashMap::new()).collect();
        Self {
            kernel,
            data,
            locals,
            seed,
            blocks,
            orders,
            evaluations: AtomicUsize::new(0),
            failures: AtomicUsize::new(0),
        }
    }

    pub fn kernel(&self) -> &Arc<K> {
        &self.kernel
    }

    pub fn dataset(&self) -> &Arc<Dataset<K::Payload>> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn t(&self) -> usize {
        self.data.t()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn locals(&self) -> &[K::Local] {
        &self.locals
    }

    /// The seed used for every evaluation of series `i`; orders share it so
    /// kernels can reuse draws between orders.
    pub fn eval_seed(&self, i: usize) -> u64 {
        rng::derive(self.seed, &[i as u64])
    }

    /// Replaces the local state of series `i`, dropping its cached values.
    pub fn set_local(&mut self, i: usize, local: K::Local) {
        if self.locals[i] == local {
            return;
        }
        self.locals[i] = local;
        if let Some(blocks) = &self.blocks {
            blocks[i].clear();
        }
        self.orders[i].clear();
    }

    /// Uncached evaluation, with failures surfaced as errors.
    pub fn try_log_lik(&self, i: usize, order: &RandomOrder) -> Result<f64> {
        let s = &self.data.get(i).payload;
        let v = self
            .kernel
            .log_marginal(s, &self.locals[i], order, self.eval_seed(i))?;
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::Evaluation(format!(
                "series {} produced {v}",
                self.data.get(i).id
            )));
        }
        Ok(v)
    }

    /// Whether the kernel factorizes over blocks, so block values are cached.
    pub fn factorizes(&self) -> bool {
        self.blocks.is_some()
    }

    /// Memoized log marginal of one zero-based block of series `i`; `None`
    /// for kernels that do not factorize.
    pub fn block_log_lik(&self, i: usize, r: Range<usize>) -> Option<f64> {
        let table = &self.blocks.as_ref()?[i];
        if let Some(v) = table.get(&r) {
            return Some(v);
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let s = &self.data.get(i).payload;
        let v = match self.kernel.block_log_marginal(s, &self.locals[i], r.clone()) {
            Some(Ok(v)) if v.is_finite() => v,
            _ => {
                self.failures.fetch_add(1, Ordering::Relaxed);
                f64::NEG_INFINITY
            }
        };
        table.put(&r, v);
        Some(v)
    }

    /// Memoized `log L(y_i | ρ)`; `-inf` when evaluation fails.
    pub fn log_lik(&self, i: usize, order: &RandomOrder) -> f64 {
        if self.blocks.is_some() {
            return order
                .blocks()
                .map(|r| self.block_log_lik(i, r).expect("factorizing kernel"))
                .sum();
        }
        if let Some(v) = self.orders[i].get(order) {
            return *v;
        }
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let v = match self.try_log_lik(i, order) {
            Ok(v) => v,
            Err(_) => {
                self.failures.fetch_add(1, Ordering::Relaxed);
                f64::NEG_INFINITY
            }
        };
        self.orders[i].insert(order.clone(), v);
        v
    }

    /// Number of uncached kernel evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::Relaxed)
    }

    /// Runs the kernel's local-state update for series `i`, keeping caches coherent.
    pub fn update_local(&mut self, i: usize, order: &RandomOrder, rng: &mut Rng) -> Result<bool> {
        if !self.kernel.has_local_updates() {
            return Ok(false);
        }
        let seed = self.eval_seed(i);
        let current = Some(self.log_lik(i, order)).filter(|v| v.is_finite());
        let new = self.kernel.update_local(
            &self.data.get(i).payload,
            &self.locals[i],
            order,
            current,
            seed,
            rng,
        )?;
        let changed = new != self.locals[i];
        self.set_local(i, new);
        Ok(changed)
    }
}

#[cfg(test)]
mod tests {
    use super::ou::{OuHyperparams, OuKernel, OuSeries};
    use super::*;

    fn toy() -> (Arc<OuKernel>, Arc<Dataset<OuSeries>>) {
        let k = Arc::new(OuKernel::new(OuHyperparams::default()).unwrap());
        let series = vec![
            Series {
                id: "a".into(),
                payload: OuSeries::new(vec![0.1, -0.4, 1.2, 1.0, 0.9]),
            },
            Series {
                id: "b".into(),
                payload: OuSeries::new(vec![0.0, 0.2, 0.3, -1.0, -1.1]),
            },
        ];
        let d = Arc::new(Dataset::for_kernel(&*k, series).unwrap());
        (k, d)
    }

    #[test]
    fn evaluator_matches_kernel_and_memoizes() {
        let (k, d) = toy();
        let ev = Evaluator::new(k.clone(), d.clone(), 1);
        let o = RandomOrder::new(5, vec![2, 5]).unwrap();
        let direct = k.log_marginal(&d.get(0).payload, &(), &o, 0).unwrap();
        assert!((ev.log_lik(0, &o) - direct).abs() < 1e-12);
        let before = ev.evaluations();
        ev.log_lik(0, &o);
        assert_eq!(ev.evaluations(), before);
        // blocks are shared between orders
        let o2 = RandomOrder::new(5, vec![2, 4, 5]).unwrap();
        ev.log_lik(0, &o2);
        assert_eq!(ev.evaluations(), before + 2);
    }

    #[test]
    fn dataset_rejects_mixed_horizons() {
        let k = OuKernel::new(OuHyperparams::default()).unwrap();
        let series = vec![
            Series {
                id: "a".into(),
                payload: OuSeries::new(vec![0.0; 4]),
            },
            Series {
                id: "b".into(),
                payload: OuSeries::new(vec![0.0; 5]),
            },
        ];
        assert!(matches!(
            Dataset::for_kernel(&k, series),
            Err(Error::Mismatch(_))
        ));
    }
}
