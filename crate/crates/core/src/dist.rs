//! Probability vectors over a truncated photon/click number basis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("all entries are zero or negative")]
    AllZero,
    #[error("length mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("distribution has zero mean")]
    ZeroMean,
}

/// A normalized probability vector indexed by number `n` in `[0, n_max]`.
///
/// Entries are nonnegative and sum to one; the length is `n_max + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberDistribution {
    probs: Vec<f64>,
}

impl NumberDistribution {
    /// Clamp negatives to zero and rescale so the entries sum to one.
    pub fn normalize(raw: &[f64]) -> Result<Self, DistError> {
        let clamped: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        if total <= 0.0 {
            return Err(DistError::AllZero);
        }
        Ok(NumberDistribution {
            probs: clamped.into_iter().map(|v| v / total).collect(),
        })
    }

    /// Build from exact event counts. The largest entry absorbs the float
    /// rounding so the result sums to one exactly.
    pub fn from_counts(counts: &[u64]) -> Result<Self, DistError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(DistError::AllZero);
        }
        let mut probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let others: f64 = probs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != argmax)
            .map(|(_, p)| p)
            .sum();
        probs[argmax] = 1.0 - others;
        Ok(NumberDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Second factorial moment `⟨n(n−1)⟩`.
    pub fn second_factorial_moment(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p)
            .sum()
    }
}

/// Poisson probabilities with mean `nbar`, renormalized over `[0, n_max]`.
pub fn poisson_pmf_vector(nbar: f64, n_max: usize) -> NumberDistribution {
    assert!(nbar >= 0.0, "nbar must be nonnegative");
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut p = (-nbar).exp();
    probs.push(p);
    for n in 1..=n_max {
        p *= nbar / n as f64;
        probs.push(p);
    }
    NumberDistribution::normalize(&probs).expect("poisson pmf is positive")
}

/// Unnormalized Poisson pmf value `nbar^n e^{-nbar} / n!`.
pub fn poisson_pmf(nbar: f64, n: usize) -> f64 {
    let mut p = (-nbar).exp();
    for k in 1..=n {
        p *= nbar / k as f64;
    }
    p
}

/// Smallest `n_max` whose Poissonian tail mass beyond it is below `1e-6` at
/// the expected mean, floored at 10.
pub fn default_n_max(nbar_expected: f64) -> usize {
    let nbar = nbar_expected.max(0.0);
    let mut cumulative = 0.0;
    let mut p = (-nbar).exp();
    let mut n = 0usize;
    loop {
        cumulative += p;
        if 1.0 - cumulative < 1e-6 && n >= 10 {
            return n;
        }
        n += 1;
        p *= nbar / n as f64;
        if n > 10_000 {
            return n;
        }
    }
}
