use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tiercache::harness::{
    cmd_analytic, cmd_optimize, cmd_simulate, exit_code, run_validation, write_atomic,
    ExperimentConfig, Method, Output, Resolved, Scenario, ValidationSettings, VALIDATION_FAILURE,
};
use tiercache::{Error, Result};

/// Analytic model, optimizers and simulator for tiered cache networks.
#[derive(Parser)]
#[command(name = "tiercache", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Independent replications.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// ttl_tradeoff, load_aggregation, optimal_validation or custom.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Optimizer: square_root, top_b, quadratic_breakpoint, quadratic_dual,
    /// bang_bang, heuristic or grid.
    #[arg(long, global = true)]
    method: Option<String>,
    /// Extra progress output; `simulate` also writes an event trace.
    #[arg(long, global = true)]
    verbose: bool,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, env = "TIERCACHE_WORKERS", hide = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate closed-form quantities over the configured grids.
    Analytic,
    /// Solve the placement/TTL allocation problem.
    Optimize,
    /// Run the discrete-event simulator.
    Simulate,
    /// Compare the simulator and optimizers against their oracles.
    Validate {
        /// Largest accepted |z| for statistical checks.
        #[arg(long, default_value_t = 3.0)]
        z_threshold: f64,
        /// Multiplier on every simulated sample size.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

fn load_config(c: &Common) -> Result<Resolved> {
    let mut doc = match &c.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?)?,
        None if c.scenario.is_none() => {
            return Err(Error::Config("give --config or --scenario".into()))
        }
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &c.scenario {
        doc.experiment.scenario = Scenario::parse(name)?;
    }
    doc.resolve()
}

fn write_output(dir: &Path, out: &Output, verbose: bool) -> Result<()> {
    for (name, bytes) in &out.files {
        let path = dir.join(name);
        write_atomic(&path, bytes)?;
        if verbose {
            eprintln!("wrote {}", path.display());
        }
    }
    for line in &out.summary {
        println!("{line}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    let c = &cli.common;
    if let Some(n) = c.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let method = c.method.as_deref().map(Method::parse).transpose()?;
    let out = match cli.command {
        Command::Analytic => cmd_analytic(&load_config(c)?)?,
        Command::Optimize => cmd_optimize(&load_config(c)?, method)?,
        Command::Simulate => cmd_simulate(&load_config(c)?, c.seed, c.reps, c.verbose)?,
        Command::Validate { z_threshold, scale } => {
            if !(z_threshold >= 0.0) || !(scale > 0.0) {
                return Err(Error::Config("z-threshold must be >= 0 and scale > 0".into()));
            }
            let mut settings = ValidationSettings {
                z_threshold,
                scale,
                ..Default::default()
            };
            settings.seed = c.seed.unwrap_or(settings.seed);
            settings.replications = c.reps.unwrap_or(settings.replications);
            let report = run_validation(&settings)?;
            let mut out = Output::default();
            out.files.push(("validate.csv".into(), report.table().to_csv()?));
            let failed = report.failed_checks();
            let mut checks: Vec<&str> = Vec::new();
            for r in &report.rows {
                if !checks.contains(&r.check.as_str()) {
                    checks.push(&r.check);
                }
            }
            for n in checks {
                let status = if failed.iter().any(|f| f == n) { "FAIL" } else { "pass" };
                out.summary.push(format!("{status} {n}"));
            }
            write_output(&c.out, &out, c.verbose)?;
            return Ok(if failed.is_empty() { 0 } else { VALIDATION_FAILURE });
        }
    };
    write_output(&c.out, &out, c.verbose)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
