//! Posterior summaries of a partition chain.
//!
//! The Binder loss counts the pairs of series on which two partitions disagree
//! about co-clustering, divided by the number of pairs `n(n-1)/2`. The point
//! estimate is the visited partition with the smallest average loss against
//! all retained samples.

use serde::{Deserialize, Serialize};

use crate::orders::Partition;
use crate::{Error, Result};

/// Normalized Binder loss in `[0, 1]`.
pub fn binder_loss(a: &Partition, b: &Partition) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::Mismatch(format!(
            "partitions of {} and {} items",
            a.n(),
            b.n()
        )));
    }
    let n = a.n();
    if n < 2 {
        return Ok(0.0);
    }
    let mut disagree = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if a.co_clustered(i, j) != b.co_clustered(i, j) {
                disagree += 1;
            }
        }
    }
    Ok(disagree as f64 / (n * (n - 1) / 2) as f64)
}

/// Symmetric matrix of co-clustering frequencies with unit diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n)
    }

    /// Builds from a full row-major matrix, checking the invariants.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("similarity matrix is not square".into()));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        let m = Self { n, values };
        for i in 0..n {
            if m.get(i, i) != 1.0 {
                return Err(Error::Parse(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = m.get(i, j);
                if !(0.0..=1.0).contains(&v) || v != m.get(j, i) {
                    return Err(Error::Parse(format!("invalid entry ({i}, {j}) = {v}")));
                }
            }
        }
        Ok(m)
    }

    /// Expected Binder loss of `p` against the samples the matrix was built from.
    pub fn expected_loss(&self, p: &Partition) -> Result<f64> {
        if p.n() != self.n {
            return Err(Error::Mismatch("partition size differs from matrix".into()));
        }
        if self.n < 2 {
            return Ok(0.0);
        }
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let s = self.get(i, j);
                acc += if p.co_clustered(i, j) { 1.0 - s } else { s };
            }
        }
        Ok(acc / (self.n * (self.n - 1) / 2) as f64)
    }
}

fn check_nonempty(samples: &[Partition]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Domain("no retained samples".into()))?;
    let n = first.n();
    if samples.iter().any(|p| p.n() != n) {
        return Err(Error::Mismatch("samples partition different numbers of items".into()));
    }
    Ok(n)
}

pub fn similarity_matrix(samples: &[Partition]) -> Result<SimilarityMatrix> {
    let n = check_nonempty(samples)?;
    let mut counts = vec![0usize; n * n];
    for p in samples {
        for i in 0..n {
            for j in i..n {
                if p.co_clustered(i, j) {
                    counts[i * n + j] += 1;
                }
            }
        }
    }
    let total = samples.len() as f64;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        values[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = counts[i * n + j] as f64 / total;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(SimilarityMatrix { n, values })
}

/// Point estimate with its position among the samples and its expected loss.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEstimate {
    pub partition: Partition,
    pub index: usize,
    pub expected_loss: f64,
}

/// The visited partition minimizing the average Binder loss to all samples;
/// ties go to the earliest sample.
pub fn point_estimate(samples: &[Partition]) -> Result<PointEstimate> {
    let sim = similarity_matrix(samples)?;
    let mut best: Option<PointEstimate> = None;
    let mut seen = std::collections::HashSet::new();
    for (idx, p) in samples.iter().enumerate() {
        if !seen.insert(p.clone()) {
            continue;
        }
        let loss = sim.expected_loss(p)?;
        if best.as_ref().is_none_or(|b| loss < b.expected_loss - 1e-12) {
            best = Some(PointEstimate {
                partition: p.clone(),
                index: idx,
                expected_loss: loss,
            });
        }
    }
    Ok(best.expect("nonempty"))
}
