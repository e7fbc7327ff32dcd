use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use npmle::baseline::{check_estimator, good_turing_unseen, naive_estimator};
use npmle::oracle::{exact_mle_extended, exact_psi_posterior, MLE_SAMPLE_CAP};
use npmle::partition::partition_from_labels;
use npmle::saem::{run_saem, SaemConfig, TraceRow};
use npmle::simulation::{
    consistency_experiment, default_sieve, dkw_check, make_theta, theorem1_bound,
    theorem1_crossover, theorem3_bound, EstimatorKind, ExperimentOptions, FamilyKind, ThetaFamily,
};
use npmle::{Error, OrderedPmf, Partition};

use crate::config::{doubling_grid, log_grid, parse_labels, NSpec, Settings};
use crate::{Command, Common, Experiment, SaemArgs};

const DEFAULT_SIZE: usize = 1000;

fn settings_from(common: &Common) -> Settings {
    Settings {
        seed: common.seed,
        out: common.out.clone(),
        ..Settings::default()
    }
}

fn add_saem(s: &mut Settings, a: &SaemArgs) {
    s.k = a.k;
    s.c = a.c;
    s.iterations = a.iterations;
    s.k0 = a.k0;
    s.gamma_exp = a.gamma_exp;
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Estimate {
            input,
            labels,
            saem,
            estimator,
            saem_args,
            common,
        } => {
            let mut s = settings_from(&common);
            s.input = Some(input);
            s.labels = Some(labels);
            s.saem = Some(saem);
            s.estimator = estimator;
            add_saem(&mut s, &saem_args);
            estimate(&s.with_file(common.config.as_deref())?)
        }
        Command::Oracle {
            input,
            labels,
            grid,
            posterior,
            k,
            common,
        } => {
            let mut s = settings_from(&common);
            s.input = Some(input);
            s.labels = Some(labels);
            s.grid = grid;
            s.posterior = Some(posterior);
            s.k = k;
            oracle(&s.with_file(common.config.as_deref())?)
        }
        Command::Simulate(e) => {
            let s = experiment_settings(&e)?;
            experiment(&s, false)
        }
        Command::Rates(e) => {
            let s = experiment_settings(&e)?;
            experiment(&s, true)
        }
        Command::Bound {
            theorem,
            delta,
            family,
            size,
            n,
            points,
            c_const,
            beta,
            nu,
            sieve,
            eps,
            reps,
            common,
        } => {
            let mut s = settings_from(&common);
            s.theorem = theorem;
            s.delta = delta;
            s.family = family;
            s.size = size;
            s.n = n.map(NSpec::Text);
            s.points = points;
            s.c_const = c_const;
            s.beta = beta;
            s.nu = nu;
            s.sieve = sieve;
            s.eps = eps;
            s.reps = reps;
            bound(&s.with_file(common.config.as_deref())?)
        }
    }
}

fn experiment_settings(e: &Experiment) -> Result<Settings> {
    let mut s = settings_from(&e.common);
    s.family = e.family.clone();
    s.size = e.size;
    s.estimator = e.estimator.clone();
    s.n = e.n.clone().map(NSpec::Text);
    s.reps = e.reps;
    add_saem(&mut s, &e.saem_args);
    s.with_file(e.common.config.as_deref())
}

fn out_dir(s: &Settings) -> Result<PathBuf> {
    let dir = s.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn read_partition(s: &Settings) -> Result<Partition> {
    let input = s
        .input
        .as_deref()
        .ok_or_else(|| anyhow!("no input partition given"))?;
    // A path to a file holding the partition is accepted as well.
    let text = match fs::read_to_string(input) {
        Ok(t) if Path::new(input).is_file() => t.trim().to_string(),
        _ => input.trim().to_string(),
    };
    if s.labels.unwrap_or(false) {
        Ok(partition_from_labels(&parse_labels(&text)?)?)
    } else {
        text.parse::<Partition>()
            .with_context(|| format!("invalid partition {text:?}"))
    }
}

fn saem_config(s: &Settings, seed: u64) -> SaemConfig {
    let d = SaemConfig::default();
    SaemConfig {
        k: s.k,
        k0: s.k0.unwrap_or(d.k0),
        gamma_exponent: s.gamma_exp.unwrap_or(d.gamma_exponent),
        max_iterations: s.iterations.unwrap_or(d.max_iterations),
        seed,
        lower_bound_c: s.c,
        ..d
    }
}

/// Raised for names the user can fix by picking a listed option.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: Error) -> anyhow::Error {
    match e {
        Error::InvalidInput(msg) => UsageError(msg).into(),
        other => other.into(),
    }
}

fn estimate(s: &Settings) -> Result<()> {
    let p = read_partition(s)?;
    let seed = s.seed.unwrap_or(0);
    let mut wanted: Vec<String> = match &s.estimator {
        Some(list) => list.split(',').map(|t| t.trim().to_string()).collect(),
        None => vec!["naive".into(), "good_turing".into(), "check".into()],
    };
    if s.saem.unwrap_or(false) && !wanted.iter().any(|w| w == "saem") {
        wanted.push("saem".into());
    }
    let mut report = serde_json::Map::new();
    report.insert("seed".into(), json!(seed));
    report.insert("partition".into(), json!(p.to_string()));
    report.insert("n".into(), json!(p.n()));
    let mut warnings = Vec::new();
    let dir = out_dir(s)?;
    for name in &wanted {
        match name.parse::<EstimatorKind>().map_err(usage)? {
            EstimatorKind::Naive => {
                report.insert("naive".into(), json!(naive_estimator(&p)));
            }
            EstimatorKind::GoodTuring => {
                report.insert("good_turing".into(), json!(good_turing_unseen(&p)));
            }
            EstimatorKind::Check => {
                report.insert("check".into(), json!(check_estimator(&p).into_pmf()));
            }
            EstimatorKind::Saem => match run_saem(&p, &saem_config(s, seed)) {
                Ok(fit) => {
                    let mut csv = String::from(TraceRow::CSV_HEADER);
                    csv.push('\n');
                    for row in &fit.trace {
                        csv.push_str(&row.csv());
                        csv.push('\n');
                    }
                    write(&dir.join("saem_trace.csv"), &csv)?;
                    report.insert("saem".into(), json!(fit));
                }
                Err(e @ (Error::UnsupportedSample(_) | Error::InfeasibleModel(_))) => {
                    eprintln!("warning: SA-EM skipped: {e}");
                    warnings.push(format!("SA-EM skipped: {e}"));
                }
                Err(e) => return Err(e.into()),
            },
        }
    }
    report.insert("warnings".into(), json!(warnings));
    write_json(&dir.join("estimate.json"), &report)
}

fn oracle(s: &Settings) -> Result<()> {
    let p = read_partition(s)?;
    if p.n() > MLE_SAMPLE_CAP {
        bail!(
            "the exact oracle is limited to n <= {MLE_SAMPLE_CAP}, got n = {}",
            p.n()
        );
    }
    let grid = s.grid.unwrap_or(0.01);
    let fit = exact_mle_extended(&p, grid)?;
    let dir = out_dir(s)?;
    let mut report = json!({
        "seed": s.seed.unwrap_or(0),
        "partition": p.to_string(),
        "estimate": fit.estimate,
        "log_likelihood": fit.log_likelihood,
        "grid": fit.grid,
    });
    if s.posterior.unwrap_or(false) {
        let k = s.k.unwrap_or(p.n() as usize);
        let mut mass = fit.estimate.mass().to_vec();
        mass.resize(k.max(mass.len()), 0.0);
        mass.truncate(k);
        let used: f64 = mass.iter().sum();
        let theta = OrderedPmf::new(mass, 1.0 - used)?;
        let post = exact_psi_posterior(&theta, &p.compact())?;
        let mut csv = String::from("psi,probability\n");
        for (psi, pr) in post.states.iter().zip(&post.probabilities) {
            let cells: Vec<String> = psi.iter().map(usize::to_string).collect();
            csv.push_str(&format!("{},{pr}\n", cells.join(" ")));
        }
        write(&dir.join("psi_posterior.csv"), &csv)?;
        report["posterior_states"] = json!(post.states.len());
    }
    write_json(&dir.join("oracle.json"), &report)
}

fn family(s: &Settings) -> Result<ThetaFamily> {
    let spec = s
        .family
        .as_deref()
        .ok_or_else(|| UsageError("--family is required".into()))?;
    let kind: FamilyKind = spec.parse().map_err(usage)?;
    Ok(make_theta(kind, s.size.unwrap_or(DEFAULT_SIZE))?)
}

fn experiment(s: &Settings, rates: bool) -> Result<()> {
    let fam = family(s)?;
    let estimator: EstimatorKind = s
        .estimator
        .as_deref()
        .unwrap_or("naive")
        .parse()
        .map_err(usage)?;
    let spec =
        s.n.clone()
            .ok_or_else(|| UsageError("--n is required".into()))?;
    let grid = doubling_grid(&spec)?;
    if rates && grid.len() < 2 {
        return Err(
            UsageError("rates needs at least two sample sizes, e.g. --n 100..3200".into()).into(),
        );
    }
    let reps = s.reps.unwrap_or(if rates { 50 } else { 30 });
    let seed = s.seed.unwrap_or(0);
    let opts = ExperimentOptions {
        saem: SaemConfig {
            max_iterations: s
                .iterations
                .unwrap_or(ExperimentOptions::default().saem.max_iterations),
            ..saem_config(s, seed)
        },
    };
    let report = consistency_experiment(&fam, estimator, &grid, reps, seed, &opts)?;
    let dir = out_dir(s)?;
    let stem = report.artifact_stem();
    write(&dir.join(format!("{stem}.csv")), &report.to_csv())?;
    write_json(&dir.join(format!("{stem}.json")), &report)?;
    for p in &report.points {
        println!(
            "n = {:>8}  mean L1 = {:.5} (se {:.5})  mean sup = {:.5}  skipped = {}",
            p.n, p.mean_l1, p.se_l1, p.mean_sup, p.skipped
        );
    }
    if let Some(slope) = report.slope {
        println!(
            "log-log slope = {slope:.4} (se {:.4})",
            report.slope_se.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

fn bound(s: &Settings) -> Result<()> {
    let fam = family(s)?;
    let theta = &fam.realized;
    let theorem = s.theorem.as_deref().unwrap_or("1");
    let delta = s.delta.unwrap_or(1.0);
    let spec = s.n.clone().unwrap_or(NSpec::Text("1..1e6".into()));
    let grid = log_grid(&spec, s.points.unwrap_or(60))?;
    let seed = s.seed.unwrap_or(0);
    let dir = out_dir(s)?;
    let family_tag = fam.kind.to_string().replace([':', ','], "-");
    let mut csv = String::new();
    match theorem {
        "1" => {
            csv.push_str("n,bound,log_bound,informative\n");
            for &n in &grid {
                let b = theorem1_bound(n as f64, delta, theta)?;
                csv.push_str(&format!(
                    "{n},{},{},{}\n",
                    b.value, b.log_value, b.informative
                ));
            }
            println!(
                "bound first below 1 at n = {}",
                theorem1_crossover(delta, theta)?
            );
        }
        "3" => {
            csv.push_str("n,sieve,bound,log_bound,informative,tail_beyond_sieve\n");
            let (c, beta, nu) = (
                s.c_const.unwrap_or(1.0),
                s.beta.unwrap_or(1.0),
                s.nu.unwrap_or(0.5),
            );
            for &n in &grid {
                let k = s.sieve.unwrap_or_else(|| default_sieve(n));
                let b = theorem3_bound(n as f64, delta, theta, k, c, beta, nu)?;
                csv.push_str(&format!(
                    "{n},{k},{},{},{},{}\n",
                    b.bound.value, b.bound.log_value, b.bound.informative, b.tail_beyond_k
                ));
            }
        }
        "dkw" => {
            csv.push_str("n,bound,empirical,sigma\n");
            let eps = s.eps.unwrap_or(0.1);
            let reps = s.reps.unwrap_or(1000);
            for &n in &grid {
                let d = dkw_check(theta, n, eps, reps, seed)?;
                csv.push_str(&format!("{n},{},{},{}\n", d.bound, d.empirical, d.sigma));
            }
        }
        other => {
            return Err(UsageError(format!(
                "unknown theorem {other:?}; expected one of 1, 3, dkw"
            ))
            .into())
        }
    }
    write(
        &dir.join(format!("bound_{theorem}_{family_tag}_seed{seed}.csv")),
        &csv,
    )
}
