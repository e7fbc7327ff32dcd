//! Integer partitions of the sample size, their run-length form, monotone
//! rearrangement and partition counting.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default cap on `n` for [`partition_count_exact`].
pub const PARTITION_COUNT_CAP: usize = 1000;
/// Cap on `n` for [`enumerate_partitions`].
pub const ENUMERATION_CAP: usize = 30;

/// Observed species counts, sorted non-increasingly. All counts are positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct Partition {
    counts: Vec<u64>,
    n: u64,
}

impl Partition {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return invalid("a partition needs at least one count");
        }
        if counts.contains(&0) {
            return invalid("partition counts must be positive");
        }
        if let Some(i) = counts.windows(2).position(|w| w[0] < w[1]) {
            return invalid(format!(
                "partition counts must be non-increasing ({} < {} at position {})",
                counts[i],
                counts[i + 1],
                i + 1
            ));
        }
        let n = counts.iter().sum();
        Ok(Self { counts, n })
    }

    /// Sorts arbitrary non-negative counts and drops zeros.
    pub fn from_unsorted(counts: &[u64]) -> Result<Self> {
        let mut c: Vec<u64> = counts.iter().copied().filter(|&x| x > 0).collect();
        c.sort_unstable_by(|a, b| b.cmp(a));
        Self::new(c)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Sample size.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of distinct species observed.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Number of species observed exactly once.
    pub fn singletons(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 1).count()
    }

    /// Number of species observed at least twice.
    pub fn repeated(&self) -> usize {
        self.counts.iter().filter(|&&c| c >= 2).count()
    }

    pub fn compact(&self) -> CompactPartition {
        compact(self)
    }
}

impl From<Partition> for Vec<u64> {
    fn from(p: Partition) -> Self {
        p.counts
    }
}

impl TryFrom<Vec<u64>> for Partition {
    type Error = Error;

    fn try_from(counts: Vec<u64>) -> Result<Self> {
        Partition::new(counts)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.counts.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses the strict text form `3,1,1,1`.
impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let counts = s
            .trim()
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<u64>()
                    .map_err(|_| Error::InvalidInput(format!("not a positive integer: {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Partition::new(counts)
    }
}

/// Run-length form of a partition: distinct counts `n_1 < ... < n_J` with
/// repetitions `r_1, ..., r_J`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCompact")]
pub struct CompactPartition {
    distinct: Vec<u64>,
    reps: Vec<usize>,
}

#[derive(Deserialize)]
struct RawCompact {
    distinct: Vec<u64>,
    reps: Vec<usize>,
}

impl TryFrom<RawCompact> for CompactPartition {
    type Error = Error;

    fn try_from(raw: RawCompact) -> Result<Self> {
        CompactPartition::new(raw.distinct, raw.reps)
    }
}

impl CompactPartition {
    pub fn new(distinct: Vec<u64>, reps: Vec<usize>) -> Result<Self> {
        if distinct.is_empty() || distinct.len() != reps.len() {
            return invalid("distinct and reps must be non-empty and of equal length");
        }
        if distinct[0] == 0 || distinct.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("distinct counts must be positive and strictly increasing");
        }
        if reps.contains(&0) {
            return invalid("repetitions must be positive");
        }
        Ok(Self { distinct, reps })
    }

    pub fn distinct(&self) -> &[u64] {
        &self.distinct
    }

    pub fn reps(&self) -> &[usize] {
        &self.reps
    }

    /// Number of distinct counts, `J`.
    pub fn classes(&self) -> usize {
        self.distinct.len()
    }

    /// Sample size `T = sum_j r_j n_j`.
    pub fn total(&self) -> u64 {
        self.distinct
            .iter()
            .zip(&self.reps)
            .map(|(n, r)| n * *r as u64)
            .sum()
    }

    /// `S`: number of singletons (0 unless the smallest count is 1).
    pub fn singletons(&self) -> usize {
        if self.distinct[0] == 1 {
            self.reps[0]
        } else {
            0
        }
    }

    /// `N`: number of species observed at least twice.
    pub fn repeated(&self) -> usize {
        self.distinct
            .iter()
            .zip(&self.reps)
            .filter(|(n, _)| **n >= 2)
            .map(|(_, r)| r)
            .sum()
    }

    /// `L = S + N`, the number of observed species.
    pub fn observed(&self) -> usize {
        self.reps.iter().sum()
    }

    pub fn expand(&self) -> Partition {
        let counts = self
            .distinct
            .iter()
            .zip(&self.reps)
            .rev()
            .flat_map(|(&n, &r)| std::iter::repeat_n(n, r))
            .collect();
        Partition::new(counts).expect("compact partition expands to a valid partition")
    }
}

/// Reduces a discovery-order label string (labels start at 1, and label `r`
/// first appears only after all labels below it) to its partition.
pub fn partition_from_labels(labels: &[usize]) -> Result<Partition> {
    let mut counts: Vec<u64> = Vec::new();
    for (pos, &label) in labels.iter().enumerate() {
        if label == 0 || label > counts.len() + 1 {
            return invalid(format!(
                "label {label} at position {} is out of discovery order (next new label would be {})",
                pos + 1,
                counts.len() + 1
            ));
        }
        if label == counts.len() + 1 {
            counts.push(0);
        }
        counts[label - 1] += 1;
    }
    Partition::from_unsorted(&counts)
}

pub fn compact(p: &Partition) -> CompactPartition {
    let mut distinct = Vec::new();
    let mut reps = Vec::new();
    for &c in p.counts().iter().rev() {
        if distinct.last() == Some(&c) {
            *reps.last_mut().unwrap() += 1;
        } else {
            distinct.push(c);
            reps.push(1);
        }
    }
    CompactPartition { distinct, reps }
}

/// Sorts non-negative values into non-increasing order. Ties keep their
/// original relative order.
pub fn monotone_rearrange(w: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = w.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return invalid(format!(
            "monotone rearrangement needs finite non-negative entries, got {bad}"
        ));
    }
    let mut out = w.to_vec();
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Exact `p(n)` by Euler's pentagonal-number recurrence, with the default cap.
pub fn partition_count_exact(n: usize) -> Result<BigUint> {
    partition_count_exact_capped(n, PARTITION_COUNT_CAP)
}

pub fn partition_count_exact_capped(n: usize, cap: usize) -> Result<BigUint> {
    if n == 0 {
        return invalid("partition counts are defined here for n >= 1");
    }
    if n > cap {
        return Err(Error::Resource(format!(
            "n = {n} exceeds the partition-count cap {cap}"
        )));
    }
    let mut p: Vec<BigInt> = Vec::with_capacity(n + 1);
    p.push(BigInt::from(1));
    for m in 1..=n {
        let mut acc = BigInt::zero();
        for k in 1.. {
            let g1 = k * (3 * k - 1) / 2;
            if g1 > m {
                break;
            }
            let g2 = k * (3 * k + 1) / 2;
            let mut term = p[m - g1].clone();
            if g2 <= m {
                term += &p[m - g2];
            }
            if k % 2 == 1 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        p.push(acc);
    }
    let last = p.pop().unwrap();
    debug_assert!(!last.is_negative());
    Ok(last.to_biguint().expect("p(n) is non-negative"))
}

/// Hardy-Ramanujan leading term `exp(pi sqrt(2n/3)) / (4 n sqrt 3)`.
pub fn partition_count_asymptotic(n: usize) -> f64 {
    log_partition_count_asymptotic(n as f64).exp()
}

/// Natural log of the Hardy-Ramanujan leading term, finite for any `n >= 1`.
pub fn log_partition_count_asymptotic(n: f64) -> f64 {
    std::f64::consts::PI * (2.0 * n / 3.0).sqrt() - (4.0 * n * 3f64.sqrt()).ln()
}

/// All partitions of `n`, largest first part first: `3 -> [3], [2,1], [1,1,1]`.
pub fn enumerate_partitions(n: usize) -> Result<Vec<Partition>> {
    if n == 0 {
        return invalid("cannot enumerate partitions of 0");
    }
    if n > ENUMERATION_CAP {
        return Err(Error::Resource(format!(
            "enumeration is capped at n = {ENUMERATION_CAP}, got {n}"
        )));
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    fill(n as u64, n as u64, &mut current, &mut out);
    Ok(out)
}

fn fill(remaining: u64, max_part: u64, current: &mut Vec<u64>, out: &mut Vec<Partition>) {
    if remaining == 0 {
        out.push(Partition::new(current.clone()).expect("generated partition is valid"));
        return;
    }
    for part in (1..=max_part.min(remaining)).rev() {
        current.push(part);
        fill(remaining - part, part, current, out);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(c: &[u64]) -> Partition {
        Partition::new(c.to_vec()).unwrap()
    }

    #[test]
    fn labels_reduce_to_partition() {
        assert_eq!(
            partition_from_labels(&[1, 2, 2, 3, 1]).unwrap(),
            part(&[2, 2, 1])
        );
        assert_eq!(partition_from_labels(&[1]).unwrap(), part(&[1]));
        assert_eq!(partition_from_labels(&[1, 1, 1]).unwrap(), part(&[3]));
    }

    #[test]
    fn labels_out_of_discovery_order() {
        assert!(matches!(
            partition_from_labels(&[1, 3, 2]),
            Err(Error::InvalidInput(_))
        ));
        assert!(partition_from_labels(&[2]).is_err());
        assert!(partition_from_labels(&[0]).is_err());
        assert!(partition_from_labels(&[]).is_err());
    }

    #[test]
    fn compact_examples() {
        let c = compact(&part(&[3, 2, 1, 1]));
        assert_eq!(c.distinct(), &[1, 2, 3]);
        assert_eq!(c.reps(), &[2, 1, 1]);
        assert_eq!(c.classes(), 3);
        assert_eq!(c.total(), 7);

        let c = compact(&part(&[5]));
        assert_eq!((c.distinct(), c.reps()), (&[5][..], &[1][..]));
        assert_eq!(c.singletons(), 0);

        let c = compact(&part(&[3, 1, 1, 1]));
        assert_eq!((c.distinct(), c.reps()), (&[1, 3][..], &[3, 1][..]));
        assert_eq!((c.singletons(), c.repeated(), c.observed()), (3, 1, 4));
    }

    #[test]
    fn compact_json() {
        let c = compact(&part(&[3, 1, 1, 1]));
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"distinct":[1,3],"reps":[3,1]}"#);
        assert_eq!(serde_json::from_str::<CompactPartition>(&s).unwrap(), c);
        assert!(
            serde_json::from_str::<CompactPartition>(r#"{"distinct":[3,1],"reps":[1,1]}"#).is_err()
        );
    }

    #[test]
    fn text_format() {
        let p: Partition = "3,1,1,1".parse().unwrap();
        assert_eq!(p.n(), 6);
        assert_eq!(p.to_string(), "3,1,1,1");
        assert!("2,3".parse::<Partition>().is_err());
        assert!("2,0".parse::<Partition>().is_err());
        assert!("a".parse::<Partition>().is_err());
    }

    #[test]
    fn rearrange_examples() {
        assert_eq!(
            monotone_rearrange(&[0.1, 0.3, 0.2]).unwrap(),
            vec![0.3, 0.2, 0.1]
        );
        assert_eq!(
            monotone_rearrange(&[0.2, 0.2, 0.6]).unwrap(),
            vec![0.6, 0.2, 0.2]
        );
        assert_eq!(monotone_rearrange(&[0.5, 0.25]).unwrap(), vec![0.5, 0.25]);
        assert!(monotone_rearrange(&[0.1, -0.1]).is_err());
        assert!(monotone_rearrange(&[f64::NAN]).is_err());
    }

    /// Brute-force partition count by recursion on the largest part.
    fn count_by_largest_part(n: u64, max: u64) -> u64 {
        if n == 0 {
            return 1;
        }
        (1..=max.min(n))
            .map(|k| count_by_largest_part(n - k, k))
            .sum()
    }

    #[test]
    fn exact_counts() {
        assert_eq!(partition_count_exact(1).unwrap(), BigUint::from(1u32));
        assert_eq!(partition_count_exact(5).unwrap(), BigUint::from(7u32));
        assert_eq!(partition_count_exact(6).unwrap(), BigUint::from(11u32));
        for n in 1..=20u64 {
            assert_eq!(
                partition_count_exact(n as usize).unwrap(),
                BigUint::from(count_by_largest_part(n, n))
            );
        }
        assert!(matches!(
            partition_count_exact(1001),
            Err(Error::Resource(_))
        ));
        assert!(partition_count_exact(0).is_err());
    }

    #[test]
    fn exact_count_past_u64() {
        // p(417) is the first value above u64::MAX.
        let p = partition_count_exact(417).unwrap();
        assert_eq!(p.to_string(), "18987964267331664557");
        assert!(partition_count_exact(416).unwrap() < BigUint::from(u64::MAX));
    }

    #[test]
    fn asymptotic_count() {
        let exact: f64 = partition_count_exact(100)
            .unwrap()
            .to_string()
            .parse()
            .unwrap();
        let ratio = partition_count_asymptotic(100) / exact;
        assert!(ratio > 0.9 && ratio < 1.2, "ratio {ratio}");
        let direct = (std::f64::consts::PI * (2.0f64 / 3.0).sqrt()).exp() / (4.0 * 3f64.sqrt());
        assert!((partition_count_asymptotic(1) - direct).abs() < 1e-12 * direct);
        for n in 1..200 {
            assert!(partition_count_asymptotic(n + 1) > partition_count_asymptotic(n));
        }
    }

    #[test]
    fn enumeration() {
        let three = enumerate_partitions(3).unwrap();
        assert_eq!(three, vec![part(&[3]), part(&[2, 1]), part(&[1, 1, 1])]);
        assert_eq!(enumerate_partitions(1).unwrap(), vec![part(&[1])]);
        assert_eq!(enumerate_partitions(5).unwrap().len(), 7);
        assert!(matches!(enumerate_partitions(31), Err(Error::Resource(_))));
        for n in 1..=20 {
            let all = enumerate_partitions(n).unwrap();
            assert_eq!(BigUint::from(all.len()), partition_count_exact(n).unwrap());
            for p in &all {
                assert_eq!(p.n(), n as u64);
                assert_eq!(&p.compact().expand(), p);
            }
        }
    }

    proptest! {
        #[test]
        fn rearrange_is_idempotent_and_preserves_sum(w in prop::collection::vec(0.0f64..10.0, 0..40)) {
            let t = monotone_rearrange(&w).unwrap();
            prop_assert_eq!(monotone_rearrange(&t).unwrap(), t.clone());
            let mut a = w.clone();
            let mut b = t.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn rearrange_is_sup_norm_contraction(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30)
        ) {
            let (w, v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let tw = monotone_rearrange(&w).unwrap();
            let tv = monotone_rearrange(&v).unwrap();
            let before = crate::pmf::sup_distance(&w, &v);
            let after = crate::pmf::sup_distance(&tw, &tv);
            prop_assert!(after <= before);
        }

        #[test]
        fn labels_round_trip(raw in prop::collection::vec(1u64..6, 1..12)) {
            // Build a discovery-order string with raw[i] copies of species i+1.
            let mut labels = Vec::new();
            for (i, &c) in raw.iter().enumerate() {
                labels.push(i + 1);
                labels.extend(std::iter::repeat_n(i + 1, c as usize - 1));
            }
            let p = partition_from_labels(&labels).unwrap();
            prop_assert_eq!(p, Partition::from_unsorted(&raw).unwrap());
        }
    }
}
