//! Shared helpers for integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use orderclust::kernel::ou::{OuHyperparams, OuKernel, OuSeries};
use orderclust::kernel::{Dataset, Evaluator, Series};
use orderclust::orders::{enumerate_orders, log_eppf_sizes, Concentration, Partition};
use orderclust::numeric::log_sum_exp;

pub fn ou_dataset(values: Vec<Vec<f64>>, h: OuHyperparams) -> (Arc<OuKernel>, Arc<Dataset<OuSeries>>) {
    let k = Arc::new(OuKernel::new(h).unwrap());
    let series = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| Series {
            id: format!("s{}", i + 1),
            payload: OuSeries::new(v),
        })
        .collect();
    let d = Arc::new(Dataset::for_kernel(&*k, series).unwrap());
    (k, d)
}

/// Posterior over partitions by summing the joint target over every vector
/// of per-series orders; ties among the orders define the partition.
pub fn enumerated_partition_posterior(
    eval: &Evaluator<OuKernel>,
    alpha: Concentration,
) -> HashMap<Partition, f64> {
    let n = eval.n();
    let t = eval.t();
    let orders = enumerate_orders(t).unwrap();
    let m = orders.len();
    let ll: Vec<Vec<f64>> = (0..n)
        .map(|i| orders.iter().map(|o| eval.log_lik(i, o)).collect())
        .collect();
    let mut by_partition: HashMap<Partition, Vec<f64>> = HashMap::new();
    let total = m.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let idx: Vec<usize> = (0..n)
            .map(|_| {
                let v = c % m;
                c /= m;
                v
            })
            .collect();
        let p = Partition::from_labels(&idx);
        let w = log_eppf_sizes(&p.sizes(), alpha, t) + (0..n).map(|i| ll[i][idx[i]]).sum::<f64>();
        by_partition.entry(p).or_default().push(w);
    }
    let logs: HashMap<Partition, f64> = by_partition
        .into_iter()
        .map(|(p, ws)| (p, log_sum_exp(&ws)))
        .collect();
    let z = log_sum_exp(&logs.values().cloned().collect::<Vec<_>>());
    logs.into_iter().map(|(p, v)| (p, (v - z).exp())).collect()
}

pub fn total_variation(a: &HashMap<Partition, f64>, b: &HashMap<Partition, f64>) -> f64 {
    let mut keys: Vec<&Partition> = a.keys().chain(b.keys()).collect();
    keys.sort_by_key(|p| p.to_string());
    keys.dedup();
    keys.iter()
        .map(|k| (a.get(*k).unwrap_or(&0.0) - b.get(*k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
        / 2.0
}

pub fn empirical(partitions: &[Partition]) -> HashMap<Partition, f64> {
    let mut m = HashMap::new();
    for p in partitions {
        *m.entry(p.clone()).or_insert(0.0) += 1.0;
    }
    let n = partitions.len() as f64;
    m.values_mut().for_each(|v| *v /= n);
    m
}

/// Three short series for the enumerable check: two share a level shift.
pub fn keystone_values() -> Vec<Vec<f64>> {
    vec![
        vec![0.3, -0.2, 1.6, 1.9],
        vec![-0.1, 0.4, 1.4, 2.2],
        vec![1.2, -0.9, 0.1, 0.4],
    ]
}
