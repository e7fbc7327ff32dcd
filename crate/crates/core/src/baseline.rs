//! Closed-form estimators: naive, Good-Turing unseen mass, and the check
//! estimator that lumps all singletons into the blob.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::partition::Partition;
use crate::pmf::OrderedPmf;

/// Empirical pmf over population labels (not sorted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPmf {
    pub freq: Vec<f64>,
    pub n: u64,
}

impl EmpiricalPmf {
    /// Cumulative distribution `F(x) = sum_{alpha <= x} f_alpha`.
    pub fn cdf(&self) -> Vec<f64> {
        self.freq
            .iter()
            .scan(0.0, |acc, f| {
                *acc += f;
                Some(*acc)
            })
            .collect()
    }
}

pub fn empirical_from_counts(x: &[u64]) -> Result<EmpiricalPmf> {
    let n: u64 = x.iter().sum();
    if n == 0 {
        return invalid("empirical pmf needs at least one observation");
    }
    let freq = x.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(EmpiricalPmf { freq, n })
}

/// Sorted relative frequencies `N / n` with no blob.
pub fn naive_estimator(p: &Partition) -> OrderedPmf {
    let n = p.n() as f64;
    let mass = p.counts().iter().map(|&c| c as f64 / n).collect();
    OrderedPmf::proper(mass).expect("relative frequencies form a pmf")
}

/// Singletons divided by sample size: the estimated mass of unseen species.
pub fn good_turing_unseen(p: &Partition) -> f64 {
    p.singletons() as f64 / p.n() as f64
}

/// Blob coordinate plus the relative frequencies of the species seen at
/// least twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEstimate {
    /// Coordinate 0: the total relative frequency of singletons.
    pub blob: f64,
    /// Coordinates `1..=I`, non-increasing.
    pub mass: Vec<f64>,
}

impl CheckEstimate {
    /// Coordinates over `{0, 1, ..., I}`.
    pub fn coords(&self) -> Vec<f64> {
        std::iter::once(self.blob)
            .chain(self.mass.iter().copied())
            .collect()
    }

    pub fn into_pmf(self) -> OrderedPmf {
        OrderedPmf::new(self.mass, self.blob).expect("check estimate is a pmf")
    }
}

pub fn check_estimator(p: &Partition) -> CheckEstimate {
    let n = p.n() as f64;
    let repeated = p.repeated();
    let mass = p.counts()[..repeated]
        .iter()
        .map(|&c| c as f64 / n)
        .collect();
    // The singleton mass is counted, not subtracted, so the total is 1 to rounding.
    let blob = p.counts()[repeated..].iter().sum::<u64>() as f64 / n;
    CheckEstimate { blob, mass }
}
