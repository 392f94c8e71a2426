use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use mimo_duality::bench::{aggregate, emit_csv, emit_plots, parse_spec, run_trial, verify, ExperimentSpec};
use mimo_duality::linalg::CMat;
use mimo_duality::model::{realize_channel, DesignMode, RngStream};
use mimo_duality::problem::Problem;

#[derive(Parser)]
#[command(name = "mimo-duality", version, about = "Robust sum-MSE transceiver design for downlink multiuser MIMO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo SNR sweep and write the averaged results as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory for gnuplot data files and script.
        #[arg(long)]
        plots: Option<PathBuf>,
        /// Overrides the seed of the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to the available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Design a transceiver for one channel realization and print it as JSON.
    Solve {
        #[arg(long)]
        problem: Problem,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long, default_value = "robust")]
        mode: DesignMode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Optional experiment configuration supplying dimensions and limits.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check duality conservation, power feasibility, fixed points and
    /// convergence on random instances.
    Verify {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_spec(path: Option<&PathBuf>) -> Result<ExperimentSpec> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_spec(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(ExperimentSpec::default()),
    }
}

fn run(config: PathBuf, out: PathBuf, plots: Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>) -> Result<()> {
    let mut spec = load_spec(Some(&config))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let records = mimo_duality::bench::run_experiment(&spec, jobs)?;
    let rows = aggregate(&records);
    emit_csv(&rows, &out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    if let Some(dir) = plots {
        let files = emit_plots(&rows, &dir).with_context(|| format!("writing plots to {}", dir.display()))?;
        eprintln!("wrote {} plot files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn matrices(ms: &[CMat]) -> Value {
    Value::Array(
        ms.iter()
            .map(|m| {
                let part = |f: fn(&mimo_duality::linalg::C64) -> f64| -> Vec<Vec<f64>> {
                    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| f(&m[(r, c)])).collect()).collect()
                };
                json!({ "re": part(|z| z.re), "im": part(|z| z.im) })
            })
            .collect(),
    )
}

fn solve(problem: Problem, snr_db: f64, mode: DesignMode, seed: u64, config: Option<PathBuf>) -> Result<()> {
    if problem.is_power_min() {
        bail!("solve supports p1 to p4");
    }
    let mut spec = load_spec(config.as_ref())?;
    spec.seed = seed;
    spec.snr_grid_db = vec![snr_db];
    let channel = realize_channel(&spec.config_at(snr_db, spec.p_max)?, RngStream::new(seed).child(0).child(0))?;
    let p_sum = spec.limits_for(problem).budget();
    let (record, res) = run_trial(&spec, 0, 0, problem, mode, &channel, p_sum)?;
    let tx = &res.transceiver;
    let dump = json!({
        "problem": problem.name(),
        "design_mode": mode.name(),
        "snr_db": snr_db,
        "seed": seed,
        "sum_amse": record.sum_amse,
        "aser": record.aser,
        "total_power": record.total_power,
        "max_violation": record.max_violation,
        "iterations": res.iterations,
        "converged": res.converged,
        "amse_trace": res.amse_trace,
        "power": {
            "per_antenna": res.power_usage.per_antenna,
            "per_user": res.power_usage.per_user,
            "per_symbol": res.power_usage.per_symbol,
        },
        "b": matrices(&tx.b),
        "w": matrices(&tx.w),
    });
    println!("{}", serde_json::to_string_pretty(&dump)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, plots, seed, jobs } => run(config, out, plots, seed, jobs),
        Command::Solve { problem, snr_db, mode, seed, config } => solve(problem, snr_db, mode, seed, config),
        Command::Verify { instances, seed } => {
            let outcomes = verify::run_suite(instances.max(1), seed);
            let failed = outcomes.iter().filter(|c| !c.passed).count();
            for c in &outcomes {
                println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
            return if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
