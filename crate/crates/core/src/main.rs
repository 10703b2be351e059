use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use brw_extremes::config::{ExperimentConfig, Models};
use brw_extremes::experiments::{self, Outcome};
use brw_extremes::Error;

const EXIT_INVALID_CONFIG: u8 = 2;
const EXIT_TOO_MANY_ABORTS: u8 = 3;
const EXIT_IO: u8 = 4;

/// Extremes of multi-type branching random walks.
#[derive(Debug, Parser)]
#[command(name = "brwx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "BRWX_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check the model and report its spectral data.
    Validate,
    /// Run replicas; per-replica CSV and a summary.
    Simulate,
    /// Sample the limit process; kappa, CDF grid and self-checks.
    Limit,
    /// Rightmost particle against the limiting distribution.
    Maxdist,
    /// One-large-jump diagnostics over the n grid.
    Onejump,
    /// Cut and prune gaps on explicit trees.
    Convergence,
    /// Superposition property of the limit.
    Superpose,
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

/// Artifacts, plus a rejection message when `validate` refuses the model
/// (the report is still written).
fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<(Outcome, Option<String>), Failure> {
    if let Command::Validate = command {
        let report = experiments::validate(cfg);
        let rejection = (!report.accepted).then(|| {
            let mut problems = report.branching.problems.clone();
            problems.extend(report.displacement_problem.clone());
            format!("model rejected: {}", problems.join("; "))
        });
        return Ok((experiments::render_validate(cfg, &report), rejection));
    }
    cfg.validate_run()?;
    let models: Models = cfg.models()?;
    let outcome = match command {
        Command::Validate => unreachable!(),
        Command::Simulate => experiments::render_simulate(cfg, &experiments::simulate(cfg, &models)?),
        Command::Limit => {
            let params = experiments::limit_params(cfg, &models)?;
            experiments::render_limit(cfg, &experiments::limit(cfg, &models, &params)?)
        }
        Command::Maxdist => {
            let params = experiments::limit_params(cfg, &models)?;
            experiments::render_maxdist(cfg, &experiments::maxdist(cfg, &models, &params)?)
        }
        Command::Onejump => experiments::render_onejump(cfg, &experiments::onejump(cfg, &models)?),
        Command::Convergence => experiments::render_convergence(cfg, &experiments::convergence(cfg, &models)?),
        Command::Superpose => experiments::render_superpose(cfg, &experiments::superpose(cfg, &models)?),
    };
    Ok((outcome, None))
}

fn write_artifacts(dir: &Path, outcome: &Outcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in &outcome.artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config is required");
        return ExitCode::from(EXIT_INVALID_CONFIG);
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(cfg) => cfg,
        Err(Error::Io(e)) => {
            eprintln!("error: reading {}: {e}", path.display());
            return ExitCode::from(EXIT_IO);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
    }
    let out = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("brwx-out"));

    let (outcome, rejection) = match run_command(cli.command, &cfg) {
        Ok(done) => done,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_INVALID_CONFIG);
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_IO);
        }
    };
    if let Err(e) = write_artifacts(&out, &outcome) {
        eprintln!("error: writing artifacts to {}: {e}", out.display());
        return ExitCode::from(EXIT_IO);
    }
    for a in &outcome.artifacts {
        println!("{}", out.join(&a.name).display());
    }
    if let Some(msg) = rejection {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_INVALID_CONFIG);
    }
    if outcome.too_many_aborts {
        eprintln!("error: population-cap aborts exceed the tolerated fraction");
        return ExitCode::from(EXIT_TOO_MANY_ABORTS);
    }
    ExitCode::SUCCESS
}
