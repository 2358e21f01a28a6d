//! Command-line front end: `iterate`, `verify`, `report` and `sample`.

mod config;
mod error;
mod report;
mod run;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kemetric::StepOptions;

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "kemetric", version, about = "Bergman-kernel iteration towards Kähler–Einstein metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this value.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one chain per ε and write states, reports and a manifest.
    Iterate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in property suite and write a pass/fail CSV.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Run a single named check.
        #[arg(long)]
        only: Option<String>,
        /// Add this ridge to every Gram diagonal (fault injection).
        #[arg(long, default_value_t = 0.0)]
        inject_ridge: f64,
    },
    /// Emit convergence series for a finished or partial run directory.
    Report {
        /// Run directory written by `iterate`.
        dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Write a sample set on its own.
    Sample {
        #[command(flatten)]
        common: Common,
    },
}

/// Configuration used by `verify` when none is given.
const DEFAULT_VERIFY_CONFIG: &str = r#"{
    "variety": { "polynomial": "x^4+y^4+z^4" },
    "m0": 1,
    "m_max": 5,
    "weight": { "kind": "polynomial_zero", "Q": { "polynomial": "x" }, "epsilon": 1.0 },
    "sampling": { "n_points": 4000 }
}"#;

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn load(common: &Common, fallback: Option<&str>) -> Result<(config::Resolved, PathBuf), CliError> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(text)) => serde_json::from_str(text).expect("built-in configuration parses"),
        (None, None) => return Err(CliError::Config("--config is required".into())),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    let dir = cfg.out_dir();
    Ok((cfg.resolve()?, dir))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Iterate { common } => {
            set_threads(common.threads)?;
            let (r, dir) = load(&common, None)?;
            run::cmd_iterate(&r, &dir, StepOptions::default())
        }
        Command::Verify { common, only, inject_ridge } => {
            set_threads(common.threads)?;
            let (r, dir) = load(&common, Some(DEFAULT_VERIFY_CONFIG))?;
            let rows = verify::cmd_verify(&r, &dir, only.as_deref(), StepOptions { fault_ridge: inject_ridge })?;
            let failed: Vec<&str> = rows.iter().filter(|r| r.status == verify::Status::Fail).map(|r| r.check).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Numerical(format!("checks failed: {}", failed.join(", "))))
            }
        }
        Command::Report { dir, threads } => {
            set_threads(threads)?;
            report::cmd_report(&dir)
        }
        Command::Sample { common } => {
            set_threads(common.threads)?;
            let (r, dir) = load(&common, None)?;
            run::cmd_sample(&r, &dir)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors are validation failures (exit 1), not clap's default 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
