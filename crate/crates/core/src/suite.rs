//! Runs experiment suites and writes metrics, traces and a run manifest.
//!
//! Outputs in the suite's output directory:
//!
//! - `metrics.csv`: one row per experiment, seed-aggregated (mean and
//!   population std). Lags are in steps for discrete experiments and in
//!   seconds for continuous ones.
//! - `traces/<k>-<name>-seed<seed>.csv`: one file per trial when traces are on.
//! - `manifest.json`: code version, seeds and the fully resolved suite, which
//!   `load_manifest` turns back into the same suite.
//!
//! Every file is written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    parse_config_str, write_config, ExperimentConfig, PolicyMode, ScenarioSpec, SuiteConfig,
    N_CONTEXTS,
};
use crate::error::{Error, Result};
use crate::harness::{
    aggregate, compute_metrics, run_continuous_trial, run_finite_trial, Aggregate,
    ContinuousPolicy, FilterConfig, TrialMetrics, TrialTrace,
};
use crate::policy::{value_iteration, AbstractPolicy, DEFAULT_TOL};
use crate::rng::{stream, Stream};
use crate::scenarios::discrete::build_discrete_scenario;
use crate::schedule::make_schedule;

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACES_DIR: &str = "traces";

pub const METRICS_HEADER: [&str; 10] = [
    "pattern",
    "model",
    "accuracy_mean",
    "accuracy_std",
    "avg_lag_mean",
    "avg_lag_std",
    "max_lag_mean",
    "max_lag_std",
    "normalized_reward_mean",
    "normalized_reward_std",
];

/// One finished trial.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub experiment: usize,
    pub seed: u64,
    pub trace: TrialTrace,
    pub metrics: TrialMetrics,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub name: String,
    pub model: String,
    /// Lags already scaled to the reporting unit.
    pub aggregate: Aggregate,
    pub trials: Vec<TrialResult>,
}

/// Runs one seed of one experiment.
pub fn run_trial(exp: &ExperimentConfig, experiment: usize, seed: u64) -> Result<TrialResult> {
    let schedule = make_schedule(
        &exp.pattern,
        N_CONTEXTS,
        exp.horizon,
        &mut stream(seed, Stream::Schedule),
    )?;
    let filter = FilterConfig {
        model: exp.model.build(N_CONTEXTS)?,
        epsilon: exp.epsilon,
        prior: exp.prior_belief()?,
    };
    let trace = match &exp.scenario {
        ScenarioSpec::Discrete { world, sigma } => {
            let sc = build_discrete_scenario(world, *sigma)?;
            let policies = sc
                .abstractions
                .iter()
                .map(|ab| match exp.policy {
                    PolicyMode::Abstract => {
                        Ok(value_iteration(ab.quotient(), ab.index(), exp.gamma, DEFAULT_TOL)?.policy)
                    }
                    _ => AbstractPolicy::random(ab.index(), ab.quotient().n_actions()),
                })
                .collect::<Result<Vec<_>>>()?;
            run_finite_trial(
                &sc.catalog,
                &sc.abstractions,
                &policies,
                sc.sigma,
                &schedule,
                &filter,
                seed,
            )?
        }
        ScenarioSpec::Continuous(world) => {
            let policy = match exp.policy {
                PolicyMode::Random => ContinuousPolicy::Random,
                _ => ContinuousPolicy::Pursuit,
            };
            run_continuous_trial(world, policy, &schedule, &filter, seed, None)?
        }
    };
    let metrics = compute_metrics(&trace, &schedule)?;
    Ok(TrialResult {
        experiment,
        seed,
        trace,
        metrics,
    })
}

/// Runs all trials of a suite on `threads` workers (0 = rayon default).
/// Results come back in experiment then seed order regardless of threads.
pub fn run_experiments(suite: &SuiteConfig, threads: usize) -> Result<Vec<ExperimentResult>> {
    let jobs: Vec<(usize, u64)> = suite
        .experiments
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let mut results: Vec<TrialResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, seed)| run_trial(&suite.experiments[i], i, seed))
            .collect::<Result<_>>()
    })?;

    let mut out = Vec::with_capacity(suite.experiments.len());
    for (i, exp) in suite.experiments.iter().enumerate().rev() {
        let split = results.iter().position(|r| r.experiment == i).unwrap_or(results.len());
        let trials = results.split_off(split);
        let scale = exp.lag_unit_seconds().unwrap_or(1.0);
        let scaled: Vec<TrialMetrics> = trials
            .iter()
            .map(|t| TrialMetrics {
                avg_lag: t.metrics.avg_lag * scale,
                max_lag: t.metrics.max_lag * scale,
                ..t.metrics
            })
            .collect();
        out.push(ExperimentResult {
            name: exp.name.clone(),
            model: exp.model_label.clone(),
            aggregate: aggregate(&scaled)?,
            trials,
        });
    }
    out.reverse();
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Parameter(format!("csv: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Parameter(format!("csv: {e}")))
}

pub fn metrics_csv(results: &[ExperimentResult]) -> Result<Vec<u8>> {
    let header: Vec<String> = METRICS_HEADER.iter().map(|s| s.to_string()).collect();
    csv_bytes(
        &header,
        results.iter().map(|r| {
            let a = &r.aggregate;
            let mut row = vec![r.name.clone(), r.model.clone()];
            for s in [a.accuracy, a.avg_lag, a.max_lag, a.normalized_reward] {
                row.push(s.mean.to_string());
                row.push(s.std.to_string());
            }
            row
        }),
    )
}

/// Columns `t,true_ctx,ml,belief_0..,state,obs,action,reward`.
pub fn trace_csv(trace: &TrialTrace) -> Result<Vec<u8>> {
    let mut header: Vec<String> = ["t", "true_ctx", "ml"].iter().map(|s| s.to_string()).collect();
    header.extend((0..trace.n_abstractions).map(|i| format!("belief_{i}")));
    header.extend(["state", "obs", "action", "reward"].iter().map(|s| s.to_string()));
    csv_bytes(
        &header,
        trace.rows.iter().map(|r| {
            let mut row = vec![r.t.to_string(), r.true_ctx.to_string(), r.ml.to_string()];
            row.extend(r.belief.iter().map(|p| p.to_string()));
            row.extend([
                r.state.to_string(),
                r.obs.to_string(),
                r.action.to_string(),
                r.reward.to_string(),
            ]);
            row
        }),
    )
}

fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

pub fn trace_file_name(experiment: usize, name: &str, seed: u64) -> String {
    format!("{experiment:02}-{}-seed{seed}.csv", slug(name))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub lag_units: Vec<String>,
    pub seeds: Vec<Vec<u64>>,
    pub outputs: Vec<String>,
    /// The resolved suite as TOML.
    pub config: String,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub out_dir: PathBuf,
    pub results: Vec<ExperimentResult>,
    pub written: Vec<PathBuf>,
}

/// Runs the suite and writes every output under `out_dir`.
pub fn run_suite(suite: &SuiteConfig, out_dir: &Path, threads: usize) -> Result<SuiteReport> {
    let results = run_experiments(suite, threads)?;
    let mut written = Vec::new();
    let mut outputs = vec![METRICS_FILE.to_string()];

    if suite.traces {
        for (k, r) in results.iter().enumerate() {
            for t in &r.trials {
                let rel = format!("{TRACES_DIR}/{}", trace_file_name(k, &r.name, t.seed));
                let path = out_dir.join(&rel);
                write_atomic(&path, &trace_csv(&t.trace)?)?;
                written.push(path);
                outputs.push(rel);
            }
        }
    }

    let metrics_path = out_dir.join(METRICS_FILE);
    write_atomic(&metrics_path, &metrics_csv(&results)?)?;
    written.push(metrics_path);

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        lag_units: suite
            .experiments
            .iter()
            .map(|e| if e.lag_unit_seconds().is_some() { "seconds" } else { "steps" }.to_string())
            .collect(),
        seeds: suite.experiments.iter().map(|e| e.seeds.clone()).collect(),
        outputs,
        config: write_config(suite)?,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::Parameter(format!("manifest: {e}")))?;
    json.push(b'\n');
    write_atomic(&manifest_path, &json)?;
    written.push(manifest_path);

    Ok(SuiteReport {
        out_dir: out_dir.to_path_buf(),
        results,
        written,
    })
}

/// Recovers the suite recorded in a run manifest.
pub fn load_manifest(path: &Path) -> Result<SuiteConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_str(&manifest.config, path.parent().unwrap_or(Path::new(".")))
}

/// Reads the `true_ctx`, `ml` and `reward` columns of a trace file.
pub fn read_trace_columns(path: &Path) -> Result<(Vec<usize>, Vec<usize>, Vec<f64>)> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(format!("missing column {name}")))
    };
    let (ct, cm, cr) = (col("true_ctx")?, col("ml")?, col("reward")?);
    let (mut truth, mut ml, mut reward) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(e.to_string()))?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let bad = |c: usize| parse_err(format!("row {}: bad value {:?}", line + 1, field(c)));
        truth.push(field(ct).parse().map_err(|_| bad(ct))?);
        ml.push(field(cm).parse().map_err(|_| bad(cm))?);
        reward.push(field(cr).parse().map_err(|_| bad(cr))?);
    }
    Ok((truth, ml, reward))
}
