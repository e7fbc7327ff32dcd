//! Exact likelihoods, partition probabilities and brute-force estimates for
//! tiny instances. Everything here enumerates; nothing scales.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::partition::{CompactPartition, Partition};
use crate::pmf::OrderedPmf;

/// Largest number of positive-mass positions the injection sum handles.
pub const SUPPORT_CAP: usize = 12;
/// Largest sample size accepted by [`exact_mle_extended`].
pub const MLE_SAMPLE_CAP: u64 = 8;
/// Largest number of latent maps [`exact_psi_posterior`] will enumerate.
pub const PSI_STATE_CAP: usize = 100_000;
/// Grid points examined per support size before the grid is coarsened.
const GRID_BUDGET: usize = 300_000;

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn ln_factorial(m: u64) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Log of the sum over injections of `counts` into the positions of `mass`
/// of `prod mass[pos]^count`. Zero-mass positions are never used.
fn log_injection_sum(counts: &[u64], mass: &[f64]) -> Result<f64> {
    let log_mass: Vec<f64> = mass.iter().filter(|&&m| m > 0.0).map(|m| m.ln()).collect();
    let m = log_mass.len();
    if m > SUPPORT_CAP {
        return Err(Error::Resource(format!(
            "support {m} exceeds the exact-likelihood cap {SUPPORT_CAP}"
        )));
    }
    if counts.len() > m {
        return Ok(f64::NEG_INFINITY);
    }
    if counts.is_empty() {
        return Ok(0.0);
    }
    // dp[mask]: species 0..popcount(mask) placed exactly on the positions in mask.
    let mut dp = vec![f64::NEG_INFINITY; 1 << m];
    dp[0] = 0.0;
    for mask in 0usize..(1 << m) {
        let placed = mask.count_ones() as usize;
        if dp[mask] == f64::NEG_INFINITY || placed >= counts.len() {
            continue;
        }
        let c = counts[placed] as f64;
        for (pos, lm) in log_mass.iter().enumerate() {
            if mask & (1 << pos) == 0 {
                let next = mask | (1 << pos);
                dp[next] = log_add(dp[next], dp[mask] + c * lm);
            }
        }
    }
    let mut total = f64::NEG_INFINITY;
    for (mask, v) in dp.iter().enumerate() {
        if mask.count_ones() as usize == counts.len() {
            total = log_add(total, *v);
        }
    }
    Ok(total)
}

/// Log-likelihood of `p` when each singleton may come from the blob.
pub fn likelihood_extended(phi: &OrderedPmf, p: &Partition) -> Result<f64> {
    let repeated = &p.counts()[..p.repeated()];
    let s = p.singletons() as u64;
    let p0 = phi.deficit();
    let mut total = f64::NEG_INFINITY;
    for n0 in 0..=s {
        if n0 > 0 && p0 <= 0.0 {
            break;
        }
        let mut counts = repeated.to_vec();
        counts.extend(std::iter::repeat_n(1, (s - n0) as usize));
        let inj = log_injection_sum(&counts, phi.mass())?;
        let blob = if n0 == 0 { 0.0 } else { n0 as f64 * p0.ln() };
        total = log_add(total, ln_choose(s, n0) + blob + inj);
    }
    Ok(total)
}

/// Log-likelihood of `p` under a pmf without blob.
pub fn likelihood_basic(theta: &OrderedPmf, p: &Partition) -> Result<f64> {
    if theta.deficit() > crate::pmf::SUM_TOLERANCE {
        return invalid(format!(
            "basic likelihood needs deficit 0, got {}",
            theta.deficit()
        ));
    }
    log_injection_sum(p.counts(), theta.mass())
}

/// Log-likelihood under the model truncated to `phi.len()` coordinates plus
/// the blob. Impossible (`-inf`) when more species repeat than coordinates exist.
pub fn likelihood_sieved(phi: &OrderedPmf, p: &Partition) -> Result<f64> {
    if p.repeated() > phi.len() {
        return Ok(f64::NEG_INFINITY);
    }
    likelihood_extended(phi, p)
}

/// Log probability that a sample of size `n` from `phi` has partition `p`.
pub fn probability_of_partition(phi: &OrderedPmf, p: &Partition) -> Result<f64> {
    let lik = likelihood_extended(phi, p)?;
    // Species with equal counts are exchangeable: each distinct labeled
    // outcome appears r_j! times in the injection sum.
    let coef = ln_factorial(p.n())
        - p.counts().iter().map(|&c| ln_factorial(c)).sum::<f64>()
        - p.compact()
            .reps()
            .iter()
            .map(|&r| ln_factorial(r as u64))
            .sum::<f64>();
    Ok(coef + lik)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactMle {
    pub estimate: OrderedPmf,
    pub log_likelihood: f64,
    /// Grid step actually used (coarsened from the request if needed).
    pub grid: f64,
}

/// Masses from differences: `theta_i = sum_{j >= i} d_j`.
fn masses_from_diffs(d: &[f64]) -> Vec<f64> {
    let mut mass = vec![0.0; d.len()];
    let mut acc = 0.0;
    for i in (0..d.len()).rev() {
        acc += d[i];
        mass[i] = acc;
    }
    mass
}

fn pmf_from_diffs(d: &[f64]) -> Option<OrderedPmf> {
    let mass = masses_from_diffs(d);
    let used: f64 = mass.iter().sum();
    if used > 1.0 + 1e-12 || d.iter().any(|&v| v < 0.0) {
        return None;
    }
    OrderedPmf::new(mass, (1.0 - used).max(0.0)).ok()
}

/// Counts grid points `k` with `sum (i+1) k_i <= units` for a support of `m`.
fn grid_size(m: usize, units: usize, cap: usize) -> usize {
    // ways[u]: compositions using weights 1..=m with total exactly u.
    let mut ways = vec![0usize; units + 1];
    ways[0] = 1;
    for w in 1..=m {
        for u in w..=units {
            ways[u] = ways[u].saturating_add(ways[u - w]).min(cap + 1);
        }
    }
    ways.iter()
        .fold(0usize, |a, &b| a.saturating_add(b))
        .min(cap + 1)
}

fn grid_search(p: &Partition, m: usize, units: usize) -> Result<(Vec<f64>, f64)> {
    let step = 1.0 / units as f64;
    let mut best = (vec![0.0; m], f64::NEG_INFINITY);
    let mut k = vec![0usize; m];
    // Odometer over k with sum (i+1) k_i <= units.
    loop {
        let d: Vec<f64> = k.iter().map(|&v| v as f64 * step).collect();
        if let Some(phi) = pmf_from_diffs(&d) {
            let ll = likelihood_extended(&phi, p)?;
            if ll > best.1 {
                best = (d, ll);
            }
        }
        let mut i = 0;
        loop {
            if i == m {
                return Ok(best);
            }
            k[i] += 1;
            let used: usize = k.iter().enumerate().map(|(j, v)| (j + 1) * v).sum();
            if used <= units {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

/// Local search on the difference coordinates with step halving.
fn refine(p: &Partition, mut d: Vec<f64>, mut ll: f64, start: f64) -> Result<(Vec<f64>, f64)> {
    let m = d.len();
    let mut h = start;
    let eval = |d: &[f64]| -> Result<f64> {
        match pmf_from_diffs(d) {
            Some(phi) => likelihood_extended(&phi, p),
            None => Ok(f64::NEG_INFINITY),
        }
    };
    while h > 1e-9 {
        let mut improved = false;
        for i in 0..m {
            for sign in [1.0, -1.0] {
                let mut cand = d.clone();
                cand[i] += sign * h / (i + 1) as f64;
                if cand[i] < 0.0 {
                    continue;
                }
                let v = eval(&cand)?;
                if v > ll + 1e-14 {
                    (d, ll, improved) = (cand, v, true);
                }
            }
            for j in 0..m {
                if i == j {
                    continue;
                }
                // Shift mass between two levels with the total unchanged.
                let mut cand = d.clone();
                cand[i] += h / (i + 1) as f64;
                cand[j] -= h / (j + 1) as f64;
                if cand[j] < 0.0 {
                    continue;
                }
                let v = eval(&cand)?;
                if v > ll + 1e-14 {
                    (d, ll, improved) = (cand, v, true);
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    Ok((d, ll))
}

/// Brute-force maximizer of the extended likelihood over ordered pmfs with
/// blob, searching every support size up to the sample size.
pub fn exact_mle_extended(p: &Partition, grid: f64) -> Result<ExactMle> {
    if !(grid > 0.0 && grid <= 0.5) {
        return invalid(format!("grid step must lie in (0, 0.5], got {grid}"));
    }
    if p.n() > MLE_SAMPLE_CAP {
        return Err(Error::Resource(format!(
            "exact MLE is capped at n = {MLE_SAMPLE_CAP}, got {}",
            p.n()
        )));
    }
    let all_blob = OrderedPmf::new(Vec::new(), 1.0)?;
    let mut best = ExactMle {
        log_likelihood: likelihood_extended(&all_blob, p)?,
        estimate: all_blob,
        grid,
    };
    // Unobserved species can carry mass at the optimum, so supports beyond
    // the observed count are searched too.
    let max_support = (p.n() as usize).min(SUPPORT_CAP);
    for m in 1..=max_support {
        let mut units = (1.0 / grid).round() as usize;
        while grid_size(m, units, GRID_BUDGET) > GRID_BUDGET {
            units = units * 3 / 4;
        }
        let (d, ll) = grid_search(p, m, units)?;
        if ll == f64::NEG_INFINITY {
            continue;
        }
        let (d, ll) = refine(p, d, ll, 1.0 / units as f64)?;
        if ll > best.log_likelihood {
            let estimate = pmf_from_diffs(&d).expect("refinement keeps feasibility");
            best = ExactMle {
                estimate,
                log_likelihood: ll,
                grid: grid.max(1.0 / units as f64),
            };
        }
    }
    Ok(best)
}

/// Number of latent maps of length `k` satisfying C1 and C2 for `cp`.
pub fn psi_state_count(cp: &CompactPartition, k: usize) -> f64 {
    let singles = cp.distinct()[0] == 1;
    let fixed: Vec<usize> = cp
        .reps()
        .iter()
        .enumerate()
        .filter(|(j, _)| !(singles && *j == 0))
        .map(|(_, &r)| r)
        .collect();
    let used: usize = fixed.iter().sum();
    if used > k {
        return 0.0;
    }
    let base = ln_factorial(k as u64) - fixed.iter().map(|&r| ln_factorial(r as u64)).sum::<f64>();
    let max_ones = if singles {
        cp.reps()[0].min(k - used)
    } else {
        0
    };
    (0..=max_ones)
        .map(|t| (base - ln_factorial(t as u64) - ln_factorial((k - used - t) as u64)).exp())
        .sum::<f64>()
        .round()
}

/// Every latent map of length `k` satisfying C1 and C2, in lexicographic order.
pub fn enumerate_psi(cp: &CompactPartition, k: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    let count = psi_state_count(cp, k);
    if count > cap as f64 {
        return Err(Error::Resource(format!(
            "{count} latent maps exceed the enumeration cap {cap}"
        )));
    }
    let singles = cp.distinct()[0] == 1;
    let mut remaining: Vec<usize> = std::iter::once(usize::MAX)
        .chain(cp.reps().iter().copied())
        .collect();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn walk(
        k: usize,
        singles: bool,
        remaining: &mut Vec<usize>,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let left = k - current.len();
        let must: usize = remaining
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(j, _)| !(singles && *j == 1))
            .map(|(_, &r)| r)
            .sum();
        if must > left {
            return;
        }
        if left == 0 {
            out.push(current.clone());
            return;
        }
        for class in 0..remaining.len() {
            if remaining[class] == 0 {
                continue;
            }
            remaining[class] -= 1;
            current.push(class);
            walk(k, singles, remaining, current, out);
            current.pop();
            remaining[class] += 1;
        }
    }
    walk(k, singles, &mut remaining, &mut current, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiPosterior {
    pub states: Vec<Vec<usize>>,
    pub probabilities: Vec<f64>,
}

impl PsiPosterior {
    pub fn probability_of(&self, psi: &[usize]) -> f64 {
        self.states
            .binary_search_by(|s| s.as_slice().cmp(psi))
            .map_or(0.0, |i| self.probabilities[i])
    }

    /// Marginal law of the number of blob-assigned observations.
    pub fn n0_marginal(&self, cp: &CompactPartition) -> Vec<f64> {
        let s = cp.singletons();
        let mut out = vec![0.0; s + 1];
        for (psi, pr) in self.states.iter().zip(&self.probabilities) {
            out[blob_count(psi, cp)] += pr;
        }
        out
    }
}

fn blob_count(psi: &[usize], cp: &CompactPartition) -> usize {
    if cp.distinct()[0] == 1 {
        cp.reps()[0] - psi.iter().filter(|&&c| c == 1).count()
    } else {
        0
    }
}

/// Exact conditional law of the latent map given `theta` over `{0..K}`:
/// weights `p0^n0 / n0! * prod_a p_a^count(psi(a))`, normalized.
pub fn exact_psi_posterior(theta: &OrderedPmf, cp: &CompactPartition) -> Result<PsiPosterior> {
    let k = theta.len();
    let states = enumerate_psi(cp, k, PSI_STATE_CAP)?;
    let count_of = |c: usize| {
        if c == 0 {
            0.0
        } else {
            cp.distinct()[c - 1] as f64
        }
    };
    let term = |n: f64, p: f64| if n == 0.0 { 0.0 } else { n * p.ln() };
    let logw: Vec<f64> = states
        .iter()
        .map(|psi| {
            let n0 = blob_count(psi, cp);
            let mut w = term(n0 as f64, theta.deficit()) - ln_factorial(n0 as u64);
            for (a, &c) in psi.iter().enumerate() {
                w += term(count_of(c), theta.mass()[a]);
            }
            w
        })
        .collect();
    let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::InfeasibleModel(
            "every latent map has zero weight".into(),
        ));
    }
    let raw: Vec<f64> = logw.iter().map(|w| (w - top).exp()).collect();
    let z: f64 = raw.iter().sum();
    Ok(PsiPosterior {
        states,
        probabilities: raw.iter().map(|w| w / z).collect(),
    })
}
