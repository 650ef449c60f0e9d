//! Command-line front end: design, verify and condition checks.
//!
//! Exit status is 0 on success, 2 when a quantitative check fails
//! (inconclusive conditions, excessive ray loss, verify above tolerance)
//! and 1 on any other error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metalens::config::{DesignConfig, Mode};
use metalens::pipeline::{build_problem, condition_report, design_report, design_to_dir, verify_dir, PipelineError};

#[derive(Parser)]
#[command(name = "metalens", version, about = "Metalens phase design by optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a single metasurface and write its phase to --out.
    DesignSingle(DesignArgs),
    /// Design a doublet and write both phases to --out.
    DesignDouble(DesignArgs),
    /// Trace rays through the design stored in --out and compare with the target.
    Verify {
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed recorded in the design.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate the twist and C3 bounds for a configuration.
    CheckConditions {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the full transport plan as plan.csv.
    #[arg(long)]
    dump_plan: bool,
}

enum Failure {
    Quantitative(String),
    Error(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_quantitative() {
            Failure::Quantitative(e.to_string())
        } else {
            Failure::Error(e.to_string())
        }
    }
}

fn load(path: &Path) -> Result<DesignConfig, Failure> {
    DesignConfig::load(path).map_err(|e| Failure::Error(e.to_string()))
}

fn design(args: &DesignArgs, mode: Mode) -> Result<(), Failure> {
    let mut config = load(&args.config)?;
    if config.mode != mode {
        return Err(Failure::Error(format!(
            "{}: config describes a {} design; use design-{}",
            args.config.display(),
            config.mode,
            config.mode
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let result = design_to_dir(&config, &args.out, args.dump_plan)?;
    print!("{}", design_report(&config, &result));
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::DesignSingle(args) => design(&args, Mode::Single),
        Command::DesignDouble(args) => design(&args, Mode::Double),
        Command::Verify { out, seed } => {
            let outcome = verify_dir(&out, seed)?;
            let line = outcome.report.line(outcome.l1_tol);
            println!("{line}");
            if outcome.pass {
                Ok(())
            } else {
                Err(Failure::Quantitative(format!("verify failed: {line}")))
            }
        }
        Command::CheckConditions { config } => {
            let config = load(&config)?;
            let problem = build_problem(&config)?;
            let report = condition_report(&config, &problem)?;
            println!("{report}");
            if report.pass() {
                Ok(())
            } else {
                Err(Failure::Quantitative("conditions inconclusive".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Quantitative(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
