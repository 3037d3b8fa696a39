//! The `prepsy` command line: `run`, `verify` and `describe`.
//!
//! Exit status is 0 on success, 1 when a run or check fails an invariant,
//! and 2 for unusable input (bad experiment file, unreadable paths).

pub mod experiment;
pub mod output;
pub mod run;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use experiment::{parse_experiment, parse_experiment_str, ExperimentFile};
pub use run::{run_experiment, RunManifest};
pub use verify::{verify, VerifyReport};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PREPSY_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Run(#[from] crate::Error),
    #[error("{0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Io(_) => 2,
            CliError::Run(_) | CliError::Invariant(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "prepsy", version, about = "Prepare-probe spectroscopy of system-environment correlations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment file and write its artifacts.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to $PREPSY_WORKERS, then to all cores.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Re-check a finished run directory.
    Verify { dir: PathBuf },
    /// Print the experiment with all defaults filled in.
    Describe { file: PathBuf },
}

/// Executes a parsed command line and returns the exit status.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { file, out, workers } => {
            let exp = parse_experiment(&file)?;
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = workers {
                if n == 0 {
                    return Err(CliError::Config { path: file, message: "--workers must be at least 1".into() });
                }
                pool = pool.num_threads(n);
            }
            let pool = pool.build().map_err(|e| CliError::Io(format!("cannot start workers: {e}")))?;
            let manifest = pool.install(|| run_experiment(&exp, &out))?;
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            print_summary(&manifest);
            println!("wrote {} files to {}", manifest.files.len() + 1, out.display());
            Ok(0)
        }
        Command::Verify { dir } => {
            let report = verify(&dir)?;
            println!("{report}");
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::Describe { file } => {
            print!("{}", parse_experiment(&file)?.to_toml());
            Ok(0)
        }
    }
}

fn print_summary(m: &RunManifest) {
    for d in &m.differences {
        let peak = d
            .strongest_positive_peak
            .map(|p| format!(", strongest peak ({:.6}, {:.6})", p.f1, p.f2))
            .unwrap_or_default();
        println!("{}: ℱ = {:.6e}, {} peaks{peak}", d.label, d.total_intensity, d.peak_count);
    }
    if let Some(c) = &m.calibration {
        println!("calibration: slope {:.6e}, measured |c| = {:.6}", c.slope, c.measured);
    }
    if let Some(s) = &m.sweep {
        for p in &s.points {
            println!("{} = {}: ℱ = {:.6e}", s.parameter, p.value, p.intensity);
        }
        if let (Some(a), Some(r)) = (s.slope, s.relative_residual) {
            println!("fit ℱ = {a:.6e}·|c|, max residual {:.3}% of max ℱ", 100.0 * r);
        }
    }
    for n in &m.notes {
        println!("{n}");
    }
}
