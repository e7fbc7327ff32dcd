//! Flag/config-file merging and small parsers for the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Every setting any command reads. Flags fill it first, then a config file
/// overrides whatever it sets.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub input: Option<String>,
    pub labels: Option<bool>,
    pub saem: Option<bool>,
    pub estimator: Option<String>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub c: Option<f64>,
    pub iterations: Option<usize>,
    pub k0: Option<u64>,
    pub gamma_exp: Option<f64>,
    pub grid: Option<f64>,
    pub posterior: Option<bool>,
    pub family: Option<String>,
    pub size: Option<usize>,
    pub n: Option<NSpec>,
    pub reps: Option<usize>,
    pub theorem: Option<String>,
    pub delta: Option<f64>,
    pub points: Option<usize>,
    #[serde(rename = "C")]
    pub c_const: Option<f64>,
    pub beta: Option<f64>,
    pub nu: Option<f64>,
    pub sieve: Option<usize>,
    pub eps: Option<f64>,
}

/// Sample sizes as written by the user: `100`, `100,200`, `100..3200`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NSpec {
    Single(u64),
    List(Vec<u64>),
    Text(String),
}

impl fmt::Display for NSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Single(n) => write!(f, "{n}"),
            Self::List(v) => {
                let parts: Vec<String> = v.iter().map(u64::to_string).collect();
                f.write_str(&parts.join(","))
            }
            Self::Text(s) => f.write_str(s),
        }
    }
}

macro_rules! overlay {
    ($base:expr, $file:expr, $($field:ident),+ $(,)?) => {
        $( if $file.$field.is_some() { $base.$field = $file.$field.clone(); } )+
    };
}

impl Settings {
    /// Applies `path` on top of the flag values, if a path was given.
    pub fn with_file(mut self, path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let file: Settings = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .with_context(|| format!("bad JSON config {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("bad TOML config {}", path.display()))?
        };
        overlay!(
            self, file, seed, out, input, labels, saem, estimator, k, c, iterations, k0, gamma_exp,
            grid, posterior, family, size, n, reps, theorem, delta, points, c_const, beta, nu,
            sieve, eps,
        );
        Ok(self)
    }
}

fn parse_count(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s
        .parse()
        .with_context(|| format!("bad sample size {s:?}"))?;
    if !(v >= 1.0 && v.fract() == 0.0 && v < 1e18) {
        bail!("sample size {s:?} is not a positive integer");
    }
    Ok(v as u64)
}

fn parse_range(s: &str) -> Result<Option<(u64, u64)>> {
    let Some((a, b)) = s.split_once("..") else {
        return Ok(None);
    };
    let (a, b) = (parse_count(a)?, parse_count(b)?);
    if a == 0 || a > b {
        bail!("range {s:?} must satisfy 1 <= start <= end");
    }
    Ok(Some((a, b)))
}

fn parse_list(s: &str) -> Result<Vec<u64>> {
    s.split(',').map(parse_count).collect()
}

/// Ranges double from the start up to the end.
pub fn doubling_grid(spec: &NSpec) -> Result<Vec<u64>> {
    match spec {
        NSpec::Single(n) => Ok(vec![*n]),
        NSpec::List(v) => Ok(v.clone()),
        NSpec::Text(s) => match parse_range(s)? {
            Some((a, b)) => {
                let mut out = vec![a];
                while let Some(next) = out.last().unwrap().checked_mul(2).filter(|&v| v <= b) {
                    out.push(next);
                }
                Ok(out)
            }
            None => parse_list(s),
        },
    }
}

/// Ranges become `points` log-spaced integers, endpoints included.
pub fn log_grid(spec: &NSpec, points: usize) -> Result<Vec<u64>> {
    match spec {
        NSpec::Text(s) => match parse_range(s)? {
            Some((a, b)) => {
                let points = points.max(2);
                let (la, lb) = ((a as f64).ln(), (b as f64).ln());
                let mut out: Vec<u64> = (0..points)
                    .map(|i| {
                        (la + (lb - la) * i as f64 / (points - 1) as f64)
                            .exp()
                            .round() as u64
                    })
                    .map(|v| v.clamp(a, b))
                    .collect();
                out.dedup();
                Ok(out)
            }
            None => parse_list(s),
        },
        other => doubling_grid(other),
    }
}

/// A partition typed as `3,1,1,1`, or a label string `12231` / `1,2,2,3,1`.
pub fn parse_labels(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.contains(',') {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .with_context(|| format!("bad label {t:?}"))
            })
            .collect()
    } else {
        s.chars()
            .map(|ch| {
                ch.to_digit(10)
                    .map(|d| d as usize)
                    .with_context(|| format!("bad label {ch:?}; use commas for labels above 9"))
            })
            .collect()
    }
}
