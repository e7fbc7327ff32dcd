//! Ground-truth families, multinomial sampling, Monte Carlo experiments and
//! the concentration bounds for the NPMLE.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{check_estimator, good_turing_unseen, naive_estimator};
use crate::error::{invalid, Error, Result};
use crate::partition::Partition;
use crate::pmf::{l1_distance, sup_distance, OrderedPmf};
use crate::saem::{run_saem, SaemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// `theta_i ∝ i^-kappa`.
    Powerlaw {
        kappa: f64,
    },
    /// `theta_i ∝ i^(nu - 1/2) exp(-beta i^(nu + 1/2))`.
    Subexp {
        nu: f64,
        beta: f64,
    },
    /// `theta_i ∝ rho^i`.
    Geometric {
        rho: f64,
    },
    Uniform {
        m: usize,
    },
    Custom,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Powerlaw { kappa } => write!(f, "powerlaw:{kappa}"),
            Self::Subexp { nu, beta } => write!(f, "subexp:{nu},{beta}"),
            Self::Geometric { rho } => write!(f, "geometric:{rho}"),
            Self::Uniform { m } => write!(f, "uniform:{m}"),
            Self::Custom => write!(f, "custom"),
        }
    }
}

pub const FAMILY_NAMES: &str = "powerlaw:<kappa>, subexp:<nu>,<beta>, geometric:<rho>, uniform:<m>";

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = || -> Result<Vec<f64>> {
            args.split(',')
                .map(|a| {
                    a.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("bad family parameter {a:?} in {s:?}"))
                    })
                })
                .collect()
        };
        let wrong = || {
            invalid(format!(
                "unknown family {s:?}; expected one of {FAMILY_NAMES}"
            ))
        };
        match (name.trim(), nums()?.as_slice()) {
            ("powerlaw", &[kappa]) => Ok(Self::Powerlaw { kappa }),
            ("subexp", &[nu, beta]) => Ok(Self::Subexp { nu, beta }),
            ("geometric", &[rho]) => Ok(Self::Geometric { rho }),
            ("uniform", &[m]) if m >= 1.0 && m.fract() == 0.0 => {
                Ok(Self::Uniform { m: m as usize })
            }
            _ => wrong(),
        }
    }
}

/// A normalized truncation of a family to its first `size` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFamily {
    pub kind: FamilyKind,
    pub size: usize,
    pub realized: OrderedPmf,
}

impl ThetaFamily {
    pub fn custom(weights: &[f64]) -> Result<Self> {
        let realized = OrderedPmf::from_weights(weights)?;
        Ok(Self {
            kind: FamilyKind::Custom,
            size: realized.len(),
            realized,
        })
    }
}

/// Builds a family truncated to `size` coordinates. For `uniform` the
/// support is `m` and `size` is ignored.
pub fn make_theta(kind: FamilyKind, size: usize) -> Result<ThetaFamily> {
    if size == 0 {
        return invalid("family size must be at least 1");
    }
    let idx = |i: usize| (i + 1) as f64;
    let (weights, size): (Vec<f64>, usize) = match kind {
        FamilyKind::Powerlaw { kappa } => {
            if !(kappa > 1.0 && kappa.is_finite()) {
                return invalid(format!("power law needs kappa > 1, got {kappa}"));
            }
            ((0..size).map(|i| idx(i).powf(-kappa)).collect(), size)
        }
        FamilyKind::Subexp { nu, beta } => {
            if !(nu > 0.0 && beta > 0.0 && nu.is_finite() && beta.is_finite()) {
                return invalid(format!(
                    "subexponential family needs nu, beta > 0, got {nu}, {beta}"
                ));
            }
            // Computed relative to the first coordinate to avoid underflow.
            let log_w = |i: usize| (nu - 0.5) * idx(i).ln() - beta * idx(i).powf(nu + 0.5);
            let first = log_w(0);
            ((0..size).map(|i| (log_w(i) - first).exp()).collect(), size)
        }
        FamilyKind::Geometric { rho } => {
            if !(rho > 0.0 && rho < 1.0) {
                return invalid(format!("geometric family needs 0 < rho < 1, got {rho}"));
            }
            ((0..size).map(|i| rho.powi(i as i32)).collect(), size)
        }
        FamilyKind::Uniform { m } => {
            if m == 0 {
                return invalid("uniform family needs m >= 1");
            }
            (vec![1.0; m], m)
        }
        FamilyKind::Custom => return invalid("custom families are built with ThetaFamily::custom"),
    };
    let realized = OrderedPmf::from_weights(&weights)?;
    Ok(ThetaFamily {
        kind,
        size,
        realized,
    })
}

/// Generator for replicate `stream` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn multinomial<R: Rng>(theta: &OrderedPmf, n: u64, rng: &mut R) -> Vec<u64> {
    let mut left = n;
    let mut mass_left = 1.0;
    let mut x = Vec::with_capacity(theta.len());
    for (i, &p) in theta.mass().iter().enumerate() {
        if left == 0 {
            x.push(0);
            continue;
        }
        let draw = if i + 1 == theta.len() || p >= mass_left {
            left
        } else {
            let q = (p / mass_left).clamp(0.0, 1.0);
            Binomial::new(left, q)
                .expect("probability in [0, 1]")
                .sample(rng)
        };
        x.push(draw);
        left -= draw;
        mass_left -= p;
    }
    x
}

/// Multinomial counts `X` over the labels of `theta` and their partition.
pub fn sample_partition(theta: &OrderedPmf, n: u64, seed: u64) -> Result<(Vec<u64>, Partition)> {
    sample_with(theta, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn sample_with<R: Rng>(
    theta: &OrderedPmf,
    n: u64,
    rng: &mut R,
) -> Result<(Vec<u64>, Partition)> {
    if theta.deficit() > crate::pmf::SUM_TOLERANCE {
        return invalid("sampling needs a pmf without blob");
    }
    if n == 0 {
        return invalid("sample size must be at least 1");
    }
    let x = multinomial(theta, n, rng);
    let p = Partition::from_unsorted(&x)?;
    Ok((x, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIndex {
    pub r: usize,
    pub eps: f64,
}

/// Smallest `r >= 1` with `sum_{i > r} theta_i <= delta / 4`, and `eps = delta / (8 r)`.
pub fn tail_index(theta: &OrderedPmf, delta: f64) -> Result<TailIndex> {
    if !(delta > 0.0 && delta <= 2.0) {
        return invalid(format!("delta must lie in (0, 2], got {delta}"));
    }
    let mut tail = 0.0;
    let mut suffix = vec![0.0; theta.len() + 1];
    for i in (0..theta.len()).rev() {
        tail += theta.mass()[i];
        suffix[i] = tail;
    }
    let r = (1..=theta.len().max(1))
        .find(|&r| suffix.get(r).copied().unwrap_or(0.0) <= delta / 4.0)
        .unwrap_or(theta.len().max(1));
    Ok(TailIndex {
        r,
        eps: delta / (8.0 * r as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub n: f64,
    pub log_value: f64,
    pub value: f64,
    /// The bound is below 1 and so says something.
    pub informative: bool,
}

impl BoundValue {
    fn from_log(n: f64, log_value: f64) -> Self {
        Self {
            n,
            log_value,
            value: log_value.exp(),
            informative: log_value < 0.0,
        }
    }
}

fn theorem1_log(n: f64, eps: f64) -> f64 {
    -(3f64.sqrt() * n).ln() + PI * (2.0 * n / 3.0).sqrt() - n * eps * eps / 2.0
}

/// `exp(pi sqrt(2n/3) - n eps^2 / 2) / (sqrt(3) n)` with `eps` from [`tail_index`].
pub fn theorem1_bound(n: f64, delta: f64, theta: &OrderedPmf) -> Result<BoundValue> {
    if !(n >= 1.0) {
        return invalid(format!("n must be at least 1, got {n}"));
    }
    let t = tail_index(theta, delta)?;
    Ok(BoundValue::from_log(n, theorem1_log(n, t.eps)))
}

/// First integer `n` at which the deviation bound drops below 1.
pub fn theorem1_crossover(delta: f64, theta: &OrderedPmf) -> Result<u64> {
    let eps = tail_index(theta, delta)?.eps;
    let f = |n: u64| theorem1_log(n as f64, eps);
    for n in 1..3 {
        if f(n) < 0.0 {
            return Ok(n);
        }
    }
    // Concave from n = 3 on: walk to the maximum, then bisect the descent.
    let (mut lo, mut hi) = (3u64, 3u64);
    while f(hi + 1) > f(hi) {
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let peak = (lo..=hi).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    if f(peak) < 0.0 {
        return Ok((3..=peak).find(|&n| f(n) < 0.0).unwrap());
    }
    let mut lo = peak;
    let mut hi = peak.max(1);
    while f(hi) >= 0.0 {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or_else(|| Error::Resource("no crossover below u64::MAX".into()))?;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem3Bound {
    pub bound: BoundValue,
    /// `sum_{i > k} theta_i`, for checking the tail hypothesis.
    pub tail_beyond_k: f64,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Sieved-MLE deviation bound for the sieve of size `k`.
#[allow(clippy::too_many_arguments)]
pub fn theorem3_bound(
    n: f64,
    delta: f64,
    theta: &OrderedPmf,
    k: usize,
    c: f64,
    beta: f64,
    nu: f64,
) -> Result<Theorem3Bound> {
    if !(n >= 1.0) {
        return invalid(format!("n must be at least 1, got {n}"));
    }
    if c < 0.0 || !c.is_finite() {
        return invalid(format!("C must be a non-negative number, got {c}"));
    }
    let eps = tail_index(theta, delta)?.eps;
    let terms = [
        -n * (eps + 1.0 / n).powi(2) / 2.0,
        -n * (eps - 1.0 / n).powi(2) / 2.0,
        c.ln() - beta * n.powf(0.5 + nu),
    ];
    let log_value =
        -(2.0 * 3f64.sqrt() * n).ln() + PI * (2.0 * n / 3.0).sqrt() + log_sum_exp(&terms);
    Ok(Theorem3Bound {
        bound: BoundValue::from_log(n, log_value),
        tail_beyond_k: theta.tail_after(k),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DkwCheck {
    pub empirical: f64,
    pub bound: f64,
    /// Monte Carlo standard error of `empirical`.
    pub sigma: f64,
    pub reps: usize,
    pub passes: bool,
}

/// Frequency of `sup |naive - theta| >= eps` against `2 exp(-n eps^2 / 2)`.
pub fn dkw_check(theta: &OrderedPmf, n: u64, eps: f64, reps: usize, seed: u64) -> Result<DkwCheck> {
    if !(eps > 0.0) {
        return invalid(format!("eps must be positive, got {eps}"));
    }
    if reps == 0 {
        return invalid("dkw check needs at least one replicate");
    }
    let exceed: Vec<bool> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<bool> {
            let (_, p) = sample_with(theta, n, &mut replicate_rng(seed, rep as u64))?;
            Ok(sup_distance(naive_estimator(&p).mass(), theta.mass()) >= eps)
        })
        .collect::<Result<_>>()?;
    let hits = exceed.iter().filter(|&&e| e).count();
    let empirical = hits as f64 / reps as f64;
    let sigma = (empirical * (1.0 - empirical) / reps as f64).sqrt();
    let bound = 2.0 * (-(n as f64) * eps * eps / 2.0).exp();
    Ok(DkwCheck {
        empirical,
        bound,
        sigma,
        reps,
        passes: empirical <= bound + 3.0 * sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    Check,
    Saem,
    GoodTuring,
}

pub const ESTIMATOR_NAMES: &str = "naive, check, saem, good_turing";

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Naive => "naive",
            Self::Check => "check",
            Self::Saem => "saem",
            Self::GoodTuring => "good_turing",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Self::Naive),
            "check" => Ok(Self::Check),
            "saem" => Ok(Self::Saem),
            "good_turing" | "good-turing" => Ok(Self::GoodTuring),
            _ => invalid(format!(
                "unknown estimator {s:?}; expected one of {ESTIMATOR_NAMES}"
            )),
        }
    }
}

/// Settings for the sieved estimators inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentOptions {
    /// SA-EM template; `K`, iterations and the rest are taken from here, the
    /// seed is replaced per replicate.
    pub saem: SaemConfig,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            saem: SaemConfig {
                max_iterations: 2000,
                ..SaemConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateError {
    pub n: u64,
    pub replicate: usize,
    pub l1: f64,
    pub sup: f64,
    /// Blob against the truth's mass beyond the sieve (sieved estimators only).
    pub deficit_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: u64,
    pub errors: Vec<ReplicateError>,
    pub skipped: usize,
    pub mean_l1: f64,
    pub se_l1: f64,
    pub mean_sup: f64,
    pub se_sup: f64,
    /// Sieve size used at this `n` (sieved estimators only).
    pub sieve: Option<usize>,
    /// Truth's mass beyond the sieve.
    pub tail_beyond_sieve: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub family: String,
    pub family_size: usize,
    pub estimator: EstimatorKind,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub seed: u64,
    pub points: Vec<GridPoint>,
    /// Least-squares slope of log mean L1 error on log n.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
}

impl ExperimentReport {
    pub const CSV_HEADER: &'static str = "n,replicate,l1,sup,deficit_error";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in self.points.iter().flat_map(|p| &p.errors) {
            let deficit = e.deficit_error.map_or(String::new(), |d| d.to_string());
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.n, e.replicate, e.l1, e.sup, deficit
            ));
        }
        out
    }

    /// File stem encoding family, estimator, n range and seed.
    pub fn artifact_stem(&self) -> String {
        let family = self.family.replace([':', ','], "-");
        let range = match (self.n_grid.first(), self.n_grid.last()) {
            (Some(a), Some(b)) => format!("{a}-{b}"),
            _ => "empty".into(),
        };
        format!("{family}_{}_n{range}_seed{}", self.estimator, self.seed)
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Least-squares slope and its standard error.
pub fn loglog_slope(ns: &[f64], errors: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(errors)
        .filter(|(n, e)| **n > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(n, e)| (n.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let se = if pts.len() > 2 {
        let rss: f64 = pts
            .iter()
            .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
            .sum();
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some((slope, se))
}

/// Sieve size for the check estimator: `ceil(sqrt n)`.
pub fn default_sieve(n: u64) -> usize {
    (n as f64).sqrt().ceil() as usize
}

fn truncated(v: &[f64], k: usize) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().take(k).copied().collect();
    out.resize(k, 0.0);
    out
}

enum Outcome {
    Done(ReplicateError),
    Skipped,
}

fn one_replicate(
    family: &ThetaFamily,
    estimator: EstimatorKind,
    n: u64,
    rep: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<Outcome> {
    let theta = &family.realized;
    let mut rng = replicate_rng(seed, (n << 20) ^ rep as u64);
    let (x, p) = sample_with(theta, n, &mut rng)?;
    let err = |l1, sup, deficit_error| {
        Outcome::Done(ReplicateError {
            n,
            replicate: rep,
            l1,
            sup,
            deficit_error,
        })
    };
    Ok(match estimator {
        EstimatorKind::Naive => {
            let est = naive_estimator(&p);
            err(
                l1_distance(est.mass(), theta.mass()),
                sup_distance(est.mass(), theta.mass()),
                None,
            )
        }
        EstimatorKind::GoodTuring => {
            let unseen: f64 = x
                .iter()
                .zip(theta.mass())
                .filter(|(c, _)| **c == 0)
                .map(|(_, m)| m)
                .sum();
            let e = (good_turing_unseen(&p) - unseen).abs();
            err(e, e, None)
        }
        EstimatorKind::Check => {
            let k = default_sieve(n);
            let est = check_estimator(&p);
            let a = truncated(&est.mass, k);
            let b = truncated(theta.mass(), k);
            err(
                l1_distance(&a, &b),
                sup_distance(&a, &b),
                Some((est.blob - theta.tail_after(k)).abs()),
            )
        }
        EstimatorKind::Saem => {
            let cfg = SaemConfig {
                seed: rng.random(),
                ..opts.saem.clone()
            };
            match run_saem(&p, &cfg) {
                Ok(fit) => {
                    let k = fit.k;
                    let a = truncated(fit.estimate.mass(), k);
                    let b = truncated(theta.mass(), k);
                    err(
                        l1_distance(&a, &b),
                        sup_distance(&a, &b),
                        Some((fit.estimate.deficit() - theta.tail_after(k)).abs()),
                    )
                }
                Err(Error::UnsupportedSample(_) | Error::InfeasibleModel(_)) => Outcome::Skipped,
                Err(e) => return Err(e),
            }
        }
    })
}

/// Monte Carlo errors of `estimator` on samples from `family` at each `n`.
pub fn consistency_experiment(
    family: &ThetaFamily,
    estimator: EstimatorKind,
    n_grid: &[u64],
    reps: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    if n_grid.contains(&0) {
        return invalid("sample sizes must be positive");
    }
    if n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("the n grid must be strictly increasing");
    }
    let mut points = Vec::with_capacity(n_grid.len());
    if reps > 0 {
        for &n in n_grid {
            let outcomes: Vec<Outcome> = (0..reps)
                .into_par_iter()
                .map(|rep| one_replicate(family, estimator, n, rep, seed, opts))
                .collect::<Result<_>>()?;
            let mut errors = Vec::new();
            let mut skipped = 0;
            for o in outcomes {
                match o {
                    Outcome::Done(e) => errors.push(e),
                    Outcome::Skipped => skipped += 1,
                }
            }
            let l1: Vec<f64> = errors.iter().map(|e| e.l1).collect();
            let sup: Vec<f64> = errors.iter().map(|e| e.sup).collect();
            let (mean_l1, se_l1) = mean_se(&l1);
            let (mean_sup, se_sup) = mean_se(&sup);
            let sieve = match estimator {
                EstimatorKind::Check => Some(default_sieve(n)),
                EstimatorKind::Saem => opts.saem.k,
                _ => None,
            };
            points.push(GridPoint {
                n,
                errors,
                skipped,
                mean_l1,
                se_l1,
                mean_sup,
                se_sup,
                sieve,
                tail_beyond_sieve: sieve.map(|k| family.realized.tail_after(k)),
            });
        }
    }
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let means: Vec<f64> = points.iter().map(|p| p.mean_l1).collect();
    let fit = loglog_slope(&ns, &means);
    Ok(ExperimentReport {
        family: family.kind.to_string(),
        family_size: family.size,
        estimator,
        n_grid: n_grid.to_vec(),
        reps,
        seed,
        points,
        slope: fit.map(|f| f.0),
        slope_se: fit.map(|f| f.1).filter(|s| s.is_finite()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn family_examples() {
        let f = make_theta(FamilyKind::Powerlaw { kappa: 2.0 }, 3).unwrap();
        for (a, b) in f
            .realized
            .mass()
            .iter()
            .zip([36.0 / 49.0, 9.0 / 49.0, 4.0 / 49.0])
        {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let u = make_theta(FamilyKind::Uniform { m: 4 }, 1).unwrap();
        assert_eq!(u.realized.mass(), &[0.25; 4]);
        assert!(make_theta(FamilyKind::Powerlaw { kappa: 1.0 }, 3).is_err());
        assert!(make_theta(FamilyKind::Geometric { rho: 1.0 }, 3).is_err());
        let g = make_theta(FamilyKind::Geometric { rho: 0.5 }, 3).unwrap();
        assert_abs_diff_eq!(g.realized.mass()[0], 4.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn subexp_is_non_increasing() {
        for nu in [0.1, 0.5, 1.0, 2.0] {
            for beta in [0.1, 1.0, 5.0] {
                let f = make_theta(FamilyKind::Subexp { nu, beta }, 200).unwrap();
                assert!(f.realized.mass().windows(2).all(|w| w[0] >= w[1]));
            }
        }
    }

    #[test]
    fn family_strings() {
        assert_eq!(
            "powerlaw:2".parse::<FamilyKind>().unwrap(),
            FamilyKind::Powerlaw { kappa: 2.0 }
        );
        assert_eq!(
            "uniform:4".parse::<FamilyKind>().unwrap(),
            FamilyKind::Uniform { m: 4 }
        );
        assert_eq!(
            "subexp:0.5,1".parse::<FamilyKind>().unwrap(),
            FamilyKind::Subexp { nu: 0.5, beta: 1.0 }
        );
        for bad in [
            "zipf:2",
            "uniform:2.5",
            "powerlaw",
            "powerlaw:x",
            "subexp:1",
        ] {
            assert!(bad.parse::<FamilyKind>().is_err(), "{bad}");
        }
        for s in ["powerlaw:2", "uniform:4", "geometric:0.5", "subexp:0.5,1"] {
            assert_eq!(s.parse::<FamilyKind>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn sampling_examples() {
        let one = OrderedPmf::proper(vec![1.0]).unwrap();
        let (x, p) = sample_partition(&one, 17, 4).unwrap();
        assert_eq!(x, vec![17]);
        assert_eq!(p.counts(), &[17]);

        let u = make_theta(FamilyKind::Uniform { m: 5 }, 5)
            .unwrap()
            .realized;
        assert_eq!(
            sample_partition(&u, 50, 8).unwrap(),
            sample_partition(&u, 50, 8).unwrap()
        );
        assert!(sample_partition(&OrderedPmf::new(vec![0.5], 0.5).unwrap(), 3, 0).is_err());
    }

    #[test]
    fn multinomial_means_within_three_sigma() {
        let theta = make_theta(FamilyKind::Powerlaw { kappa: 2.0 }, 6)
            .unwrap()
            .realized;
        let n = 40u64;
        let reps = 10_000;
        let mut sums = [0.0; 6];
        for rep in 0..reps {
            let (x, _) = sample_with(&theta, n, &mut replicate_rng(1, rep)).unwrap();
            for (s, v) in sums.iter_mut().zip(x) {
                *s += v as f64 / n as f64;
            }
        }
        for (s, &p) in sums.iter().zip(theta.mass()) {
            let sigma = (p * (1.0 - p) / (n as f64 * reps as f64)).sqrt();
            assert!((s / reps as f64 - p).abs() <= 3.0 * sigma, "{s} vs {p}");
        }
    }

    #[test]
    fn tail_index_examples() {
        let one = OrderedPmf::proper(vec![1.0]).unwrap();
        let t = tail_index(&one, 0.4).unwrap();
        assert_eq!(t.r, 1);
        assert_abs_diff_eq!(t.eps, 0.05);

        let u = make_theta(FamilyKind::Uniform { m: 4 }, 4)
            .unwrap()
            .realized;
        let t = tail_index(&u, 1.0).unwrap();
        assert_eq!(t.r, 3);
        assert_abs_diff_eq!(t.eps, 1.0 / 24.0);
        assert!(tail_index(&u, 0.0).is_err());
        assert!(tail_index(&u, 2.5).is_err());
    }

    #[test]
    fn dkw_examples() {
        let u = make_theta(FamilyKind::Uniform { m: 4 }, 4)
            .unwrap()
            .realized;
        let d = dkw_check(&u, 200, 0.1, 10, 0).unwrap();
        assert_abs_diff_eq!(d.bound, 2.0 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.bound, 0.7358, epsilon = 1e-4);
        let d = dkw_check(&u, 10, 1.0, 200, 0).unwrap();
        assert_eq!(d.empirical, 0.0);
        assert!(dkw_check(&u, 10, 0.0, 10, 0).is_err());
    }

    #[test]
    fn theorem3_limits() {
        let u = make_theta(FamilyKind::Uniform { m: 4 }, 4)
            .unwrap()
            .realized;
        for n in [10.0, 1e3, 1e6] {
            let t1 = theorem1_bound(n, 1.0, &u).unwrap();
            let t3 = theorem3_bound(n, 1.0, &u, 4, 0.0, 1.0, 0.5).unwrap();
            let eps = 1.0f64 / 24.0;
            let expected = t1.log_value + eps.cosh().ln() - 1.0 / (2.0 * n);
            assert_abs_diff_eq!(
                t3.bound.log_value,
                expected,
                epsilon = 1e-9 * expected.abs().max(1.0)
            );
        }
        let lo = theorem3_bound(100.0, 1.0, &u, 2, 1.0, 0.1, 0.5).unwrap();
        let hi = theorem3_bound(100.0, 1.0, &u, 2, 1.0, 0.2, 0.5).unwrap();
        assert!(hi.bound.log_value < lo.bound.log_value);
        assert_abs_diff_eq!(lo.tail_beyond_k, 0.5);
    }

    #[test]
    fn bounds_do_not_overflow() {
        let u = make_theta(FamilyKind::Uniform { m: 4 }, 4)
            .unwrap()
            .realized;
        for n in [1.0, 1e3, 1e6, 1e9] {
            assert!(theorem1_bound(n, 1.0, &u).unwrap().log_value.is_finite());
            assert!(theorem3_bound(n, 1.0, &u, 4, 1.0, 1.0, 0.5)
                .unwrap()
                .bound
                .log_value
                .is_finite());
        }
    }

    #[test]
    fn slope_of_exact_power() {
        let ns = [100.0, 200.0, 400.0, 800.0];
        let es: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(-0.5)).collect();
        let (s, se) = loglog_slope(&ns, &es).unwrap();
        assert_abs_diff_eq!(s, -0.5, epsilon = 1e-12);
        assert!(se < 1e-6);
        assert!(loglog_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn empty_experiment() {
        let f = make_theta(FamilyKind::Uniform { m: 4 }, 4).unwrap();
        let r = consistency_experiment(
            &f,
            EstimatorKind::Naive,
            &[100],
            0,
            1,
            &ExperimentOptions::default(),
        )
        .unwrap();
        assert!(r.points.is_empty());
        assert!(r.slope.is_none());
        assert_eq!(r.to_csv(), format!("{}\n", ExperimentReport::CSV_HEADER));
        assert!(consistency_experiment(
            &f,
            EstimatorKind::Naive,
            &[200, 100],
            1,
            1,
            &ExperimentOptions::default()
        )
        .is_err());
    }

    #[test]
    fn experiments_are_deterministic() {
        let f = make_theta(FamilyKind::Powerlaw { kappa: 2.0 }, 20).unwrap();
        let opts = ExperimentOptions::default();
        for est in [
            EstimatorKind::Naive,
            EstimatorKind::Check,
            EstimatorKind::GoodTuring,
        ] {
            let a = consistency_experiment(&f, est, &[50, 100], 8, 3, &opts).unwrap();
            let b = consistency_experiment(&f, est, &[50, 100], 8, 3, &opts).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.points.iter().map(|p| p.errors.len()).sum::<usize>(), 16);
        }
    }

    #[test]
    fn saem_replicates_skip_unsupported_samples() {
        // One species: every sample is a single count, violating the singleton assumption.
        let f = ThetaFamily::custom(&[1.0]).unwrap();
        let mut opts = ExperimentOptions::default();
        opts.saem.max_iterations = 10;
        let r = consistency_experiment(&f, EstimatorKind::Saem, &[20], 4, 0, &opts).unwrap();
        assert_eq!(r.points[0].skipped, 4);
        assert!(r.points[0].errors.is_empty());
    }

    #[test]
    fn estimator_names() {
        for s in ["naive", "check", "saem", "good_turing"] {
            assert_eq!(s.parse::<EstimatorKind>().unwrap().to_string(), s);
        }
        assert!("mle".parse::<EstimatorKind>().is_err());
    }

    proptest! {
        #[test]
        fn tail_index_is_minimal_and_monotone(w in prop::collection::vec(0.01f64..1.0, 1..20), d1 in 0.01f64..2.0, d2 in 0.01f64..2.0) {
            let theta = OrderedPmf::from_weights(&w).unwrap();
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a = tail_index(&theta, lo).unwrap();
            let b = tail_index(&theta, hi).unwrap();
            prop_assert!(b.r <= a.r);
            prop_assert!(theta.tail_after(a.r) <= lo / 4.0);
            if a.r > 1 {
                prop_assert!(theta.tail_after(a.r - 1) > lo / 4.0);
            }
        }
    }
}
