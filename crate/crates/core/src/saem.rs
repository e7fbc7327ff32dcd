//! Stochastic-approximation EM for the sieved NPMLE.
//!
//! The latent variable is a map `psi` from population positions `1..=K` to
//! observed classes `{0, 1, ..., J}` (class 0 is the blob, class `j` the
//! species seen `n_j` times). The E-step averages the sufficient statistics
//! of Metropolis-Hastings draws of `psi`, the M-step is an isotonic
//! regression of the running average.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::isotonic::{isobound, isoreg_decreasing_unit};
use crate::partition::{CompactPartition, Partition};
use crate::pmf::OrderedPmf;

pub const DEFAULT_K0: u64 = 1000;
pub const DEFAULT_GAMMA_EXPONENT: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaemConfig {
    /// Number of non-blob species modeled. `None` means `min(n, 2L)`.
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub k0: u64,
    pub gamma_exponent: f64,
    /// MH proposals per E-step. `None` means `K`.
    pub sweeps_per_iteration: Option<usize>,
    pub max_iterations: usize,
    pub seed: u64,
    /// Lower bound on the normalized non-blob probabilities.
    pub lower_bound_c: Option<f64>,
    /// Record a trace row every this many iterations (0 picks about 100 rows).
    pub trace_every: usize,
}

impl Default for SaemConfig {
    fn default() -> Self {
        Self {
            k: None,
            k0: DEFAULT_K0,
            gamma_exponent: DEFAULT_GAMMA_EXPONENT,
            sweeps_per_iteration: None,
            max_iterations: 10_000,
            seed: 0,
            lower_bound_c: None,
            trace_every: 0,
        }
    }
}

impl SaemConfig {
    pub fn resolved_k(&self, cp: &CompactPartition) -> usize {
        self.k
            .unwrap_or_else(|| (cp.total() as usize).min(2 * cp.observed()))
    }

    fn validate(&self, cp: &CompactPartition) -> Result<usize> {
        let k = self.resolved_k(cp);
        if k < cp.repeated() {
            return Err(Error::InfeasibleModel(format!(
                "K = {k} is below the {} species observed at least twice",
                cp.repeated()
            )));
        }
        if !(self.gamma_exponent > 0.5 && self.gamma_exponent <= 1.0) {
            return invalid(format!(
                "gamma exponent must lie in (1/2, 1], got {}",
                self.gamma_exponent
            ));
        }
        if self.k0 == 0 {
            return invalid("k0 must be at least 1");
        }
        if let Some(c) = self.lower_bound_c {
            if !c.is_finite() || c < 0.0 {
                return invalid(format!("lower bound must be non-negative, got {c}"));
            }
            if c >= 1.0 / k as f64 {
                return Err(Error::InfeasibleBound {
                    c,
                    limit: 1.0 / k as f64,
                });
            }
        }
        Ok(k)
    }
}

/// Checks that the sample has singletons and at least one repeated species.
pub fn check_assumption(cp: &CompactPartition) -> Result<()> {
    if cp.distinct()[0] != 1 {
        return Err(Error::UnsupportedSample(
            "the sample has no singletons".into(),
        ));
    }
    if cp.classes() < 2 {
        return Err(Error::UnsupportedSample(
            "every observed species is a singleton".into(),
        ));
    }
    Ok(())
}

/// `(max(0, L - K), S)`.
pub fn n0_bounds(s: usize, n: usize, k: usize) -> Result<(usize, usize)> {
    if k < n {
        return Err(Error::InfeasibleModel(format!(
            "K = {k} is below N = {n} repeated species"
        )));
    }
    Ok(((s + n).saturating_sub(k), s))
}

fn singleton_class(cp: &CompactPartition) -> bool {
    cp.distinct()[0] == 1
}

/// Count attached to a class; the blob class 0 carries none.
fn class_count(cp: &CompactPartition, class: usize) -> u64 {
    if class == 0 {
        0
    } else {
        cp.distinct()[class - 1]
    }
}

/// `n log p` with `0 log 0 = 0`.
fn xlogy(n: f64, p: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * p.ln()
    }
}

fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|i| (i as f64).ln()).sum()
}

/// Latent assignment of population positions to observed classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentMap {
    psi: Vec<usize>,
    n0: usize,
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
}

impl LatentMap {
    /// Validates `psi` against C1 and C2 for `cp`.
    pub fn from_psi(psi: Vec<usize>, cp: &CompactPartition) -> Result<Self> {
        let classes = cp.classes();
        if let Some(bad) = psi.iter().find(|&&c| c > classes) {
            return invalid(format!("class {bad} exceeds J = {classes}"));
        }
        let mut members = vec![Vec::new(); classes + 1];
        let mut slot = vec![0; psi.len()];
        for (a, &c) in psi.iter().enumerate() {
            slot[a] = members[c].len();
            members[c].push(a);
        }
        let singles = singleton_class(cp);
        for j in 1..=classes {
            let have = members[j].len();
            let want = cp.reps()[j - 1];
            if j == 1 && singles {
                if have > want {
                    return invalid(format!(
                        "{have} positions hold singletons but only {want} exist"
                    ));
                }
            } else if have != want {
                return invalid(format!("class {j} needs {want} positions, has {have}"));
            }
        }
        let n0 = if singles {
            cp.reps()[0] - members[1].len()
        } else {
            0
        };
        Ok(Self {
            psi,
            n0,
            members,
            slot,
        })
    }

    /// Classes `J, J-1, ...` on the leading positions, everything else blob.
    pub fn initial(cp: &CompactPartition, k: usize) -> Result<Self> {
        n0_bounds(cp.singletons(), cp.repeated(), k)?;
        let lowest = if singleton_class(cp) { 2 } else { 1 };
        let mut psi = Vec::with_capacity(k);
        for j in (lowest..=cp.classes()).rev() {
            psi.extend(std::iter::repeat_n(j, cp.reps()[j - 1]));
        }
        psi.resize(k, 0);
        Self::from_psi(psi, cp)
    }

    pub fn psi(&self) -> &[usize] {
        &self.psi
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.members[class].len()
    }

    fn relabel(&mut self, a: usize, to: usize) {
        let from = self.psi[a];
        let s = self.slot[a];
        let last = *self.members[from].last().unwrap();
        self.members[from].swap_remove(s);
        if last != a {
            self.slot[last] = s;
        }
        self.slot[a] = self.members[to].len();
        self.members[to].push(a);
        self.psi[a] = to;
    }

    fn swap(&mut self, a: usize, b: usize) {
        let (ca, cb) = (self.psi[a], self.psi[b]);
        let (sa, sb) = (self.slot[a], self.slot[b]);
        self.members[ca][sa] = b;
        self.members[cb][sb] = a;
        self.slot.swap(a, b);
        self.psi.swap(a, b);
    }

    /// Re-checks C1, C2, the `n0` cache and its bounds from scratch.
    pub fn check(&self, cp: &CompactPartition) -> Result<()> {
        let fresh = Self::from_psi(self.psi.clone(), cp)?;
        if fresh.n0 != self.n0 {
            return invalid(format!("cached n0 {} differs from {}", self.n0, fresh.n0));
        }
        for (class, list) in self.members.iter().enumerate() {
            for (s, &a) in list.iter().enumerate() {
                if self.psi[a] != class || self.slot[a] != s {
                    return invalid(format!("member index out of sync at position {a}"));
                }
            }
        }
        let (lo, hi) = n0_bounds(cp.singletons(), cp.repeated(), self.len())?;
        if self.n0 < lo || self.n0 > hi {
            return invalid(format!("n0 = {} outside [{lo}, {hi}]", self.n0));
        }
        Ok(())
    }
}

/// Unnormalized log target of `psi` given `theta` over `{0..K}`:
/// `-ln n0! + n0 ln p0 + sum_a n_psi(a) ln p_a`.
pub fn log_full_weight(map: &LatentMap, cp: &CompactPartition, theta: &OrderedPmf) -> f64 {
    let mut w = -ln_factorial(map.n0) + xlogy(map.n0 as f64, theta.deficit());
    for (a, &c) in map.psi.iter().enumerate() {
        w += xlogy(class_count(cp, c) as f64, theta.at(a + 1));
    }
    w
}

/// Log acceptance ratio from partial old/new log weights and the Hastings term.
fn log_ratio(old: f64, new: f64, hastings: f64) -> f64 {
    if new == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if old == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        new - old + hastings
    }
}

fn acceptance_probability(delta: f64) -> f64 {
    if delta >= 0.0 {
        1.0
    } else {
        delta.exp()
    }
}

/// Classes whose members may be exchanged: the blob and every class of
/// repeated species. Singletons move only through blob moves.
fn exchange_classes(cp: &CompactPartition) -> impl Iterator<Item = usize> + '_ {
    let first = if singleton_class(cp) { 2 } else { 1 };
    std::iter::once(0).chain(first..=cp.classes())
}

fn exchange_delta(
    map: &LatentMap,
    cp: &CompactPartition,
    theta: &OrderedPmf,
    a: usize,
    b: usize,
) -> f64 {
    let na = class_count(cp, map.psi[a]) as f64;
    let nb = class_count(cp, map.psi[b]) as f64;
    let (pa, pb) = (theta.at(a + 1), theta.at(b + 1));
    let old = xlogy(na, pa) + xlogy(nb, pb);
    let new = xlogy(nb, pa) + xlogy(na, pb);
    log_ratio(old, new, 0.0)
}

/// Positions a blob move may pick, as `(use blob class, use singleton class)`.
fn blob_candidates(map: &LatentMap, cp: &CompactPartition) -> Option<(bool, bool)> {
    let s = cp.singletons();
    let k = map.len();
    if s == 0 || k <= cp.repeated() {
        return None;
    }
    if cp.observed() < k && map.n0 == 0 {
        Some((false, true))
    } else {
        Some((true, true))
    }
}

fn blob_delta(map: &LatentMap, cp: &CompactPartition, theta: &OrderedPmf, a: usize) -> f64 {
    let s = cp.singletons() as f64;
    let free = (map.len() - cp.repeated()) as f64;
    let exceptional = cp.observed() < map.len();
    let (p0, pa) = (theta.deficit(), theta.at(a + 1));
    let n0 = map.n0;
    if map.psi[a] == 1 {
        let hastings = if exceptional && n0 == 0 {
            s.ln() - free.ln()
        } else {
            0.0
        };
        log_ratio(pa.ln(), p0.ln() - ((n0 + 1) as f64).ln(), hastings)
    } else {
        let hastings = if exceptional && n0 == 1 {
            free.ln() - s.ln()
        } else {
            0.0
        };
        log_ratio(p0.ln() - (n0 as f64).ln(), pa.ln(), hastings)
    }
}

/// Uniform draw of an ordered pair of positions from distinct eligible classes.
fn draw_exchange_pair<R: Rng>(
    map: &LatentMap,
    cp: &CompactPartition,
    rng: &mut R,
) -> Option<(usize, usize)> {
    let classes: Vec<usize> = exchange_classes(cp).collect();
    let total: usize = classes.iter().map(|&c| map.members[c].len()).sum();
    let pair_weight = |c: usize| {
        let m = map.members[c].len();
        m * (total - m)
    };
    let w: usize = classes.iter().map(|&c| pair_weight(c)).sum();
    if w == 0 {
        return None;
    }
    let mut u = rng.random_range(0..w);
    let mut first = classes[0];
    for &c in &classes {
        let cw = pair_weight(c);
        if u < cw {
            first = c;
            break;
        }
        u -= cw;
    }
    let rest = total - map.members[first].len();
    let mut v = rng.random_range(0..rest);
    let mut second = first;
    for &c in classes.iter().filter(|&&c| c != first) {
        let m = map.members[c].len();
        if v < m {
            second = c;
            break;
        }
        v -= m;
    }
    let a = map.members[first][rng.random_range(0..map.members[first].len())];
    let b = map.members[second][rng.random_range(0..map.members[second].len())];
    Some((a, b))
}

/// Exact exchange-move transition law from `map`: every reachable `psi`
/// with its probability, the self-transition included, sorted by `psi`.
pub fn exchange_kernel(
    map: &LatentMap,
    cp: &CompactPartition,
    theta: &OrderedPmf,
) -> Vec<(Vec<usize>, f64)> {
    let eligible: Vec<usize> = exchange_classes(cp).collect();
    let positions: Vec<usize> = (0..map.len())
        .filter(|a| eligible.contains(&map.psi[*a]))
        .collect();
    let mut out = BTreeMap::new();
    let mut pairs = 0usize;
    for &a in &positions {
        for &b in &positions {
            if map.psi[a] != map.psi[b] {
                pairs += 1;
            }
        }
    }
    let mut stay = 1.0;
    if pairs > 0 {
        for &a in &positions {
            for &b in &positions {
                if map.psi[a] == map.psi[b] {
                    continue;
                }
                let p = acceptance_probability(exchange_delta(map, cp, theta, a, b)) / pairs as f64;
                let mut next = map.psi.clone();
                next.swap(a, b);
                stay -= p;
                *out.entry(next).or_insert(0.0) += p;
            }
        }
    }
    *out.entry(map.psi.clone()).or_insert(0.0) += stay;
    out.into_iter().collect()
}

/// Exact blob-move transition law from `map`, self-transition included.
pub fn blob_kernel(
    map: &LatentMap,
    cp: &CompactPartition,
    theta: &OrderedPmf,
) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut stay = 1.0;
    if let Some((zeros, ones)) = blob_candidates(map, cp) {
        let mut cand: Vec<usize> = Vec::new();
        if zeros {
            cand.extend(&map.members[0]);
        }
        if ones {
            cand.extend(&map.members[1]);
        }
        for &a in &cand {
            let p = acceptance_probability(blob_delta(map, cp, theta, a)) / cand.len() as f64;
            let mut next = map.psi.clone();
            next[a] = 1 - next[a];
            stay -= p;
            out.push((next, p));
        }
    }
    out.push((map.psi.clone(), stay));
    out
}

/// Running SA-EM state. Coordinate 0 of `mu` is the blob.
#[derive(Debug, Clone)]
pub struct SaemState {
    pub map: LatentMap,
    pub mu: Vec<f64>,
    pub theta: OrderedPmf,
    pub k: u64,
    pub rng: ChaCha8Rng,
    pub exchange_tried: u64,
    pub exchange_accepted: u64,
    pub blob_tried: u64,
    pub blob_accepted: u64,
}

impl SaemState {
    /// A chain at `map` with `theta` and its own generator, for running the
    /// MH moves without EM updates.
    pub fn with_theta(map: LatentMap, theta: OrderedPmf, seed: u64) -> Self {
        let mu = theta.with_blob_first();
        Self {
            map,
            mu,
            theta,
            k: DEFAULT_K0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            exchange_tried: 0,
            exchange_accepted: 0,
            blob_tried: 0,
            blob_accepted: 0,
        }
    }

    fn accept(&mut self, delta: f64) -> bool {
        let z: f64 = self.rng.sample(Exp1);
        !delta.is_nan() && -z <= delta
    }

    /// One exchange and one blob proposal.
    pub fn sweep(&mut self, cp: &CompactPartition) {
        propose_exchange(self, cp);
        propose_blob(self, cp);
    }
}

pub fn init_state(cp: &CompactPartition, cfg: &SaemConfig) -> Result<SaemState> {
    check_assumption(cp)?;
    let k = cfg.validate(cp)?;
    let map = LatentMap::initial(cp, k)?;
    let p0 = cp.singletons() as f64 / cp.total() as f64;
    let theta = OrderedPmf::new(vec![(1.0 - p0) / k as f64; k], p0)?;
    let mut state = SaemState::with_theta(map, theta, cfg.seed);
    state.k = cfg.k0;
    Ok(state)
}

/// Exchange the classes of two positions. Returns whether the move was accepted;
/// a state without an eligible pair is left untouched.
pub fn propose_exchange(state: &mut SaemState, cp: &CompactPartition) -> bool {
    let Some((a, b)) = draw_exchange_pair(&state.map, cp, &mut state.rng) else {
        return false;
    };
    state.exchange_tried += 1;
    let delta = exchange_delta(&state.map, cp, &state.theta, a, b);
    if state.accept(delta) {
        state.map.swap(a, b);
        state.exchange_accepted += 1;
        debug_assert!(state.map.check(cp).is_ok());
        true
    } else {
        false
    }
}

/// Move one singleton into or out of the blob.
pub fn propose_blob(state: &mut SaemState, cp: &CompactPartition) -> bool {
    let Some((zeros, ones)) = blob_candidates(&state.map, cp) else {
        return false;
    };
    let m0 = if zeros { state.map.members[0].len() } else { 0 };
    let m1 = if ones { state.map.members[1].len() } else { 0 };
    if m0 + m1 == 0 {
        return false;
    }
    state.blob_tried += 1;
    let u = state.rng.random_range(0..m0 + m1);
    let a = if u < m0 {
        state.map.members[0][u]
    } else {
        state.map.members[1][u - m0]
    };
    let delta = blob_delta(&state.map, cp, &state.theta, a);
    if state.accept(delta) {
        if state.map.psi[a] == 1 {
            state.map.relabel(a, 0);
            state.map.n0 += 1;
        } else {
            state.map.relabel(a, 1);
            state.map.n0 -= 1;
        }
        state.blob_accepted += 1;
        debug_assert!(state.map.check(cp).is_ok());
        true
    } else {
        false
    }
}

/// Relative frequencies implied by `map`, blob first, over `{0..K}`.
pub fn sufficient_stats(map: &LatentMap, cp: &CompactPartition, k: usize) -> Vec<f64> {
    let t = cp.total() as f64;
    let mut g = vec![0.0; k + 1];
    g[0] = map.n0 as f64 / t;
    for (a, &c) in map.psi.iter().enumerate().take(k) {
        g[a + 1] = class_count(cp, c) as f64 / t;
    }
    g
}

/// `mu <- (1 - gamma) mu + gamma g`, then advances `k`.
pub fn e_step_update(state: &mut SaemState, g: &[f64], gamma: f64) {
    for (m, gi) in state.mu.iter_mut().zip(g) {
        *m = (1.0 - gamma) * *m + gamma * gi;
    }
    state.k += 1;
}

/// `gamma_k = k^-exponent`.
pub fn gamma(k: u64, exponent: f64) -> f64 {
    (k as f64).powf(-exponent)
}

/// Blob keeps `mu_0`; the rest is the decreasing isotonic fit of `mu_1..K`,
/// or its bounded version with bound `c (1 - mu_0)`.
pub fn m_step(mu: &[f64], c: Option<f64>) -> Result<OrderedPmf> {
    if mu.is_empty() {
        return invalid("mu needs at least the blob coordinate");
    }
    let total: f64 = mu.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return invalid(format!("mu sums to {total}, not 1"));
    }
    let p0 = mu[0].clamp(0.0, 1.0);
    let tail = &mu[1..];
    let tail_mass: f64 = tail.iter().sum();
    let fitted = match c {
        _ if tail.is_empty() => Vec::new(),
        Some(c) if tail_mass > 0.0 => isobound(tail, c * (1.0 - p0))?.fitted,
        _ => isoreg_decreasing_unit(tail)?.fitted,
    };
    let fitted = fitted.into_iter().map(|v| v.max(0.0)).collect();
    OrderedPmf::new(fitted, p0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: u64,
    pub exchange_acceptance: f64,
    pub blob_acceptance: f64,
    pub theta0: f64,
    pub top: Vec<f64>,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str =
        "iteration,exchange_acceptance,blob_acceptance,theta0,theta1,theta2,theta3,theta4,theta5";

    pub fn csv(&self) -> String {
        let mut cols = vec![
            self.iteration.to_string(),
            self.exchange_acceptance.to_string(),
            self.blob_acceptance.to_string(),
            self.theta0.to_string(),
        ];
        cols.extend((0..5).map(|i| self.top.get(i).map_or(String::new(), f64::to_string)));
        cols.join(",")
    }
}

/// SA-EM output: the estimate over `{0..K}` plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SievedEstimate {
    pub estimate: OrderedPmf,
    #[serde(rename = "K")]
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    pub exchange_acceptance: f64,
    pub blob_acceptance: f64,
    /// Sup-norm change of `mu` over the last 100 iterations.
    pub mu_change_last_100: f64,
    pub trace: Vec<TraceRow>,
}

fn rate(accepted: u64, tried: u64) -> f64 {
    if tried == 0 {
        0.0
    } else {
        accepted as f64 / tried as f64
    }
}

fn trace_row(state: &SaemState, iteration: u64) -> TraceRow {
    TraceRow {
        iteration,
        exchange_acceptance: rate(state.exchange_accepted, state.exchange_tried),
        blob_acceptance: rate(state.blob_accepted, state.blob_tried),
        theta0: state.theta.deficit(),
        top: state.theta.mass().iter().take(5).copied().collect(),
    }
}

pub fn run_saem(p: &Partition, cfg: &SaemConfig) -> Result<SievedEstimate> {
    let cp = p.compact();
    let mut state = init_state(&cp, cfg)?;
    let k = state.map.len();
    let proposals = cfg.sweeps_per_iteration.unwrap_or(k).max(1);
    let trace_every = if cfg.trace_every == 0 {
        (cfg.max_iterations / 100).max(1)
    } else {
        cfg.trace_every
    };
    let mut trace = vec![trace_row(&state, 0)];
    let mut mu_snapshot = state.mu.clone();
    let snapshot_at = cfg.max_iterations.saturating_sub(100);

    for it in 0..cfg.max_iterations {
        if it == snapshot_at {
            mu_snapshot.clone_from(&state.mu);
        }
        for s in 0..proposals {
            let tried = (state.exchange_tried, state.blob_tried);
            if s % 2 == 0 {
                propose_exchange(&mut state, &cp);
                if state.exchange_tried == tried.0 {
                    propose_blob(&mut state, &cp);
                }
            } else {
                propose_blob(&mut state, &cp);
                if state.blob_tried == tried.1 {
                    propose_exchange(&mut state, &cp);
                }
            }
        }
        let g = sufficient_stats(&state.map, &cp, k);
        let step = gamma(state.k, cfg.gamma_exponent);
        e_step_update(&mut state, &g, step);
        state.theta = m_step(&state.mu, cfg.lower_bound_c)?;
        if (it + 1) % trace_every == 0 {
            trace.push(trace_row(&state, it as u64 + 1));
        }
    }

    let mu_change = state
        .mu
        .iter()
        .zip(&mu_snapshot)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SievedEstimate {
        estimate: state.theta.clone(),
        k,
        iterations: cfg.max_iterations,
        seed: cfg.seed,
        exchange_acceptance: rate(state.exchange_accepted, state.exchange_tried),
        blob_acceptance: rate(state.blob_accepted, state.blob_tried),
        mu_change_last_100: mu_change,
        trace,
    })
}
