//! Command-line runner: execute single runs, fan out sweeps, check the
//! simulator's conserved quantities, and evaluate the convergence-rate
//! bound. Outputs are CSV series and versioned JSON reports.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 divergence,
//! 3 invariant failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gossipgrad::analysis::{
    heterogeneity_independence_test, mt_rate_bound, verify_invariants,
    verify_invariants_with, IndependenceReport, RateBound, RateBoundInputs,
};
use gossipgrad::engine::{
    apply_axis, run, sweep_with_repeats, RoundMetrics, RunConfig, RunResult, RunStatus,
    SweepAxis,
};
use gossipgrad::problem::Objective;
use gossipgrad::topology::{spectral_gap, MixingMatrix};
use gossipgrad::{Result, SimError};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "gossipgrad",
    version,
    about = "Deterministic simulator for decentralized stochastic optimization over gossip topologies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run; write metrics.csv and summary.json to the output directory.
    Run(RunArgs),
    /// Fan a base config out along one axis; write one directory per (value, seed).
    Sweep(SweepArgs),
    /// Check mixing-matrix structure and conserved quantities on a config.
    Verify(VerifyArgs),
    /// Evaluate the convergence-rate bound, from a config or raw parameters.
    Bound(BoundArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: $GOSSIPGRAD_OUT, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured metrics cadence.
    #[arg(long)]
    cadence: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Axis to vary: zeta2 | beta | eta | sigma2 | n | topology | variant.
    #[arg(long)]
    axis: String,
    /// Comma-separated axis values, e.g. "0,25,50".
    #[arg(long)]
    values: String,
    /// Independent repeats per value, each with a derived seed.
    #[arg(long, default_value_t = 3)]
    repeats: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default: $GOSSIPGRAD_OUT, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Rounds for the dynamic checks.
    #[arg(long, default_value_t = 200)]
    rounds: u64,
    /// Test hook: add this amount to one mixing weight before checking.
    #[arg(long, hide = true)]
    tamper_mixing: Option<f64>,
}

#[derive(Args)]
struct BoundArgs {
    /// Derive smoothness, gap, noise, and momentum from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Round budget R (required without --config; overrides it otherwise).
    #[arg(long)]
    rounds: Option<u64>,
    /// Initial suboptimality f(x_bar_0) - f*.
    #[arg(long, conflicts_with = "config")]
    r0: Option<f64>,
    /// Gradient noise level.
    #[arg(long, conflicts_with = "config")]
    sigma2: Option<f64>,
    /// Smoothness constant L.
    #[arg(long, conflicts_with = "config")]
    smoothness: Option<f64>,
    /// Spectral gap p in (0, 1].
    #[arg(long, conflicts_with = "config")]
    gap: Option<f64>,
    /// Momentum beta in [0, 1).
    #[arg(long, conflicts_with = "config")]
    beta: Option<f64>,
    /// Node count N.
    #[arg(long, conflicts_with = "config")]
    nodes: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = e.print();
                return ExitCode::from(1);
            }
            // --help / --version land here.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Bound(args) => cmd_bound(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                SimError::Diverged { .. } => 2,
                _ => 1,
            })
        }
    }
}

fn out_root(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("GOSSIPGRAD_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunSummary<'a> {
    schema_version: u32,
    /// The config as executed (resolved values, e.g. pinned beta).
    config: &'a RunConfig,
    status: String,
    spectral_gap: f64,
    smoothness: f64,
    weights_fell_back: bool,
    rounds_recorded: usize,
    final_metrics: Option<&'a RoundMetrics>,
    distance_to_minimizer: Option<f64>,
}

fn write_run_outputs(dir: &Path, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = String::with_capacity(64 * (result.metrics.len() + 1));
    csv.push_str(RoundMetrics::CSV_HEADER);
    csv.push('\n');
    for m in &result.metrics {
        csv.push_str(&m.to_csv_row());
        csv.push('\n');
    }
    std::fs::write(dir.join("metrics.csv"), csv)?;

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        config: &result.config,
        status: result.status.to_string(),
        spectral_gap: result.spectral_gap,
        smoothness: result.smoothness,
        weights_fell_back: result.weights_fell_back,
        rounds_recorded: result.metrics.len(),
        final_metrics: result.metrics.last(),
        distance_to_minimizer: result.distance_to_minimizer,
    };
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| SimError::Parse(e.to_string()))?;
    json.push('\n');
    std::fs::write(dir.join("summary.json"), json)?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<u8> {
    let mut config = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(cadence) = args.cadence {
        config.run.cadence = cadence;
    }
    config.validate()?;
    let result = run(&config)?;
    let out = out_root(&args.out);
    write_run_outputs(&out, &result)?;
    println!(
        "{}: {} rounds recorded -> {}",
        result.status,
        result.metrics.len(),
        out.display()
    );
    Ok(match result.status {
        RunStatus::Completed => 0,
        RunStatus::Diverged { .. } => 2,
    })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepRunEntry {
    value: String,
    seed: u64,
    dir: String,
    status: String,
    /// Mean ||grad f(x_bar)||^2 over the final tenth of recorded rounds.
    tail_mean_grad_norm_sq: f64,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    schema_version: u32,
    axis: String,
    values: Vec<String>,
    repeats: u64,
    runs: Vec<SweepRunEntry>,
    /// Present when the axis is the heterogeneity level and the verdict's
    /// preconditions hold.
    independence: Option<IndependenceReport>,
    note: Option<String>,
    base_config: &'a RunConfig,
}

fn tail_mean(result: &RunResult) -> f64 {
    let len = result.metrics.len();
    if len == 0 {
        return f64::NAN;
    }
    let window = (len / 10).max(1);
    result.metrics[len - window..]
        .iter()
        .map(|m| m.grad_norm_sq)
        .sum::<f64>()
        / window as f64
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8> {
    let config = RunConfig::from_path(&args.config)?;
    let axis: SweepAxis = args.axis.parse()?;
    let values: Vec<String> = args
        .values
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if values.is_empty() {
        return Err(SimError::Config("no sweep values given".into()));
    }
    if let Some(workers) = args.workers {
        if workers == 0 {
            return Err(SimError::Config("workers must be at least 1".into()));
        }
        // Ignore the error when a pool already exists (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    let grouped = sweep_with_repeats(&config, axis, &values, args.repeats)?;
    let out = out_root(&args.out);
    let mut entries = Vec::new();
    let mut canon_values = Vec::with_capacity(values.len());
    let mut any_diverged = false;
    for (value, results) in values.iter().zip(&grouped) {
        let (_, canon) = apply_axis(&config, axis, value)?;
        canon_values.push(canon.clone());
        for result in results {
            let rel = format!("{axis}={canon}/seed-{}", result.config.run.seed);
            let dir = out.join(&rel);
            write_run_outputs(&dir, result)?;
            any_diverged |= result.status != RunStatus::Completed;
            entries.push(SweepRunEntry {
                value: canon.clone(),
                seed: result.config.run.seed,
                dir: rel,
                status: result.status.to_string(),
                tail_mean_grad_norm_sq: tail_mean(result),
            });
        }
    }

    let (independence, note) = if axis == SweepAxis::Zeta2 {
        let levels: Vec<(f64, &[RunResult])> = canon_values
            .iter()
            .zip(&grouped)
            .map(|(canon, results)| (canon.parse().unwrap_or(f64::NAN), results.as_slice()))
            .collect();
        match heterogeneity_independence_test(&levels) {
            Ok(report) => (Some(report), None),
            Err(e) => (None, Some(format!("independence verdict unavailable: {e}"))),
        }
    } else {
        (None, None)
    };

    let report = SweepReport {
        schema_version: SCHEMA_VERSION,
        axis: axis.to_string(),
        values: canon_values,
        repeats: args.repeats,
        runs: entries,
        independence,
        note,
        base_config: &config,
    };
    let mut json =
        serde_json::to_string_pretty(&report).map_err(|e| SimError::Parse(e.to_string()))?;
    json.push('\n');
    std::fs::write(out.join("sweep_report.json"), json)?;
    println!(
        "{} runs ({} values x {} repeats) -> {}",
        report.runs.len(),
        report.values.len(),
        args.repeats,
        out.display()
    );
    if let Some(ind) = &report.independence {
        println!(
            "independence verdict: {} (max/min ratio {:.3}, threshold {})",
            if ind.pass { "PASS" } else { "FAIL" },
            ind.max_min_ratio,
            ind.threshold
        );
    }
    Ok(if any_diverged { 2 } else { 0 })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let config = RunConfig::from_path(&args.config)?;
    let report = match args.tamper_mixing {
        Some(delta) => {
            let (graph, w) = config.build_network()?;
            let mut entries = w.entries().to_vec();
            entries[0] += delta;
            let damaged = MixingMatrix::from_raw(w.node_count(), entries, w.scheme())?;
            verify_invariants_with(&config, &graph, &damaged, args.rounds)?
        }
        None => verify_invariants(&config, args.rounds)?,
    };
    for check in &report.checks {
        println!(
            "[{}] {}: {} (residual {:.3e}, tolerance {:.3e})",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.detail,
            check.residual,
            check.tolerance
        );
    }
    if report.pass {
        println!("all {} checks passed", report.checks.len());
        Ok(0)
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        eprintln!("invariant failure: {}", failed.join(", "));
        Ok(3)
    }
}

// ---------------------------------------------------------------------------
// bound
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct BoundReport {
    schema_version: u32,
    inputs: RateBoundInputs,
    bound: RateBound,
}

fn cmd_bound(args: &BoundArgs) -> Result<u8> {
    let inputs = match &args.config {
        Some(path) => {
            let config = RunConfig::from_path(path)?;
            let problem = config.build_problem()?;
            let (_, w) = config.build_network()?;
            let gap = spectral_gap(&w)?;
            let spec = config.algorithm_spec()?;
            let x0 = config.run.x0.resolve(config.problem.d)?;
            let x_star = problem.global_minimizer()?;
            let r0 = problem.global_value(&x0) - problem.global_value(&x_star);
            RateBoundInputs {
                r0: r0.max(0.0),
                sigma2: config.problem.sigma2,
                smoothness: problem.smoothness(),
                gap,
                beta: spec.beta,
                nodes: config.topology.n as u64,
                rounds: args.rounds.unwrap_or(config.run.rounds),
            }
        }
        None => {
            let need = |name: &str, v: Option<f64>| {
                v.ok_or_else(|| {
                    SimError::Config(format!("--{name} is required without --config"))
                })
            };
            RateBoundInputs {
                r0: need("r0", args.r0)?,
                sigma2: need("sigma2", args.sigma2)?,
                smoothness: need("smoothness", args.smoothness)?,
                gap: need("gap", args.gap)?,
                beta: need("beta", args.beta)?,
                nodes: args.nodes.ok_or_else(|| {
                    SimError::Config("--nodes is required without --config".into())
                })?,
                rounds: args.rounds.ok_or_else(|| {
                    SimError::Config("--rounds is required without --config".into())
                })?,
            }
        }
    };
    let bound = mt_rate_bound(&inputs)?;
    let report = BoundReport {
        schema_version: SCHEMA_VERSION,
        inputs,
        bound,
    };
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| SimError::Parse(e.to_string()))?;
    println!("{json}");
    Ok(0)
}
