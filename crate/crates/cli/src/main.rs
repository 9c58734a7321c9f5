use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use oas_core::bisim::{build_abstraction, coarsest_bisimulation};
use oas_core::config::{parse_config, SuiteConfig, DEFAULT_OUT_DIR};
use oas_core::harness::metrics_from_sequences;
use oas_core::mdp::{Mdp, RawMdp};
use oas_core::suite::{load_manifest, read_trace_columns, run_suite};

#[derive(Parser)]
#[command(name = "oas", version, about = "Attention switching experiments over MDP context catalogs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite file, or re-run the suite recorded in a manifest.json.
    Run {
        config: PathBuf,
        /// Comma-separated seeds replacing every experiment's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory; overrides the suite's out_dir.
        #[arg(long, env = "OAS_OUT_DIR")]
        out_dir: Option<PathBuf>,
        /// Write one trace file per trial.
        #[arg(long)]
        traces: Option<Toggle>,
        /// Worker threads (0 uses every core).
        #[arg(long, default_value_t = 0)]
        parallel: usize,
    },
    /// Parse and check a suite file without running it.
    Validate { config: PathBuf },
    /// Print the coarsest bisimulation partition and quotient of an MDP file
    /// (TOML or JSON with `transitions[a][s][s']` and `rewards[s][a]`).
    Quotient { mdp: PathBuf },
    /// Recompute metrics from a trace file.
    TraceStats {
        trace: PathBuf,
        /// Seconds per step, to report lags in seconds.
        #[arg(long)]
        step_seconds: Option<f64>,
    },
}

fn load_suite(path: &Path) -> Result<SuiteConfig> {
    let is_manifest = path.extension().is_some_and(|e| e == "json");
    let suite = if is_manifest {
        load_manifest(path)
    } else {
        parse_config(path)
    };
    suite.with_context(|| format!("loading {}", path.display()))
}

fn run(
    config: &Path,
    seeds: Option<Vec<u64>>,
    out_dir: Option<PathBuf>,
    traces: Option<Toggle>,
    parallel: usize,
) -> Result<()> {
    let mut suite = load_suite(config)?;
    if let Some(seeds) = seeds {
        if seeds.is_empty() {
            bail!("--seeds needs at least one seed");
        }
        for e in &mut suite.experiments {
            e.seeds = seeds.clone();
        }
    }
    if let Some(t) = traces {
        suite.traces = matches!(t, Toggle::On);
    }
    let out_dir = out_dir
        .or_else(|| suite.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let report = run_suite(&suite, &out_dir, parallel).context("running suite")?;
    for r in &report.results {
        let a = &r.aggregate;
        println!(
            "{:<28} {:<10} accuracy {}  avg_lag {}  max_lag {}  reward {}",
            r.name, r.model, a.accuracy, a.avg_lag, a.max_lag, a.normalized_reward
        );
    }
    println!("wrote {} files to {}", report.written.len(), out_dir.display());
    Ok(())
}

fn validate(config: &Path) -> Result<()> {
    let suite = load_suite(config)?;
    for e in &suite.experiments {
        println!(
            "{}: {:?} {} T={} model={} seeds={:?}",
            e.name,
            e.scenario.kind(),
            e.pattern.label(),
            e.horizon,
            e.model_label,
            e.seeds
        );
    }
    println!("ok: {} experiment(s)", suite.experiments.len());
    Ok(())
}

fn quotient(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let raw: RawMdp = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    let mdp = Mdp::try_from(raw)?;
    let partition = coarsest_bisimulation(&mdp);
    let ab = build_abstraction(&mdp, &partition, 0)?;
    let name = |s: usize| {
        mdp.state_labels()
            .map(|l| l[s].clone())
            .unwrap_or_else(|| s.to_string())
    };
    println!("{} states -> {} blocks", mdp.n_states(), partition.n_blocks());
    for (z, block) in partition.blocks().iter().enumerate() {
        let names: Vec<String> = block.iter().map(|&s| name(s)).collect();
        println!("z{z} = {{{}}}", names.join(", "));
    }
    let q = ab.quotient();
    for a in 0..q.n_actions() {
        println!("action {a}:");
        for z in 0..q.n_states() {
            let row: Vec<String> = q.row(z, a).iter().map(|p| format!("{p:.6}")).collect();
            println!("  z{z}: P = [{}]  R = {}", row.join(", "), q.reward(z, a));
        }
    }
    Ok(())
}

fn trace_stats(path: &Path, step_seconds: Option<f64>) -> Result<()> {
    let (truth, ml, reward) = read_trace_columns(path)?;
    let m = metrics_from_sequences(&truth, &ml, &reward)?;
    let (scale, unit) = match step_seconds {
        Some(s) => (s, "s"),
        None => (1.0, "steps"),
    };
    println!("steps              {}", truth.len());
    println!("switches           {}", m.switches);
    println!("accuracy           {:.4}", m.accuracy);
    println!("avg_lag            {:.4} {unit}", m.avg_lag * scale);
    println!("max_lag            {:.4} {unit}", m.max_lag * scale);
    println!("normalized_reward  {:.4}", m.normalized_reward);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seeds,
            out_dir,
            traces,
            parallel,
        } => run(&config, seeds, out_dir, traces, parallel),
        Command::Validate { config } => validate(&config),
        Command::Quotient { mdp } => quotient(&mdp),
        Command::TraceStats {
            trace,
            step_seconds,
        } => trace_stats(&trace, step_seconds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
