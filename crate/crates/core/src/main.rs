use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};

use khk::cli::{resolve_config, run, Command, ExperimentConfig, Overrides};
use khk::SystemKind;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    /// Iterate the map and write orbit.csv.
    Simulate,
    /// Run the property suite and write verify.json; exits 1 on any failure.
    Verify,
    /// Scan Wronskian bases for HK null spaces and write hkscan.json.
    HkScan,
    /// Run the property suite and write a readable report.txt.
    Report,
}

#[derive(Debug, Parser)]
#[command(name = "khk", version, about = "Kahan discretizations of quadratic vector fields")]
struct Args {
    #[arg(value_enum)]
    command: CommandArg,
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// System kind, e.g. first_clebsch; uses reference parameters unless the
    /// config already names this kind.
    #[arg(long)]
    system: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Highest Wronskian order for hk-scan.
    #[arg(long)]
    order: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match try_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> Result<bool> {
    let args = Args::parse();
    let config = args
        .config
        .as_deref()
        .map(ExperimentConfig::from_file)
        .transpose()
        .context("reading config")?;
    let overrides = Overrides {
        system: args.system.as_deref().map(SystemKind::from_name).transpose()?,
        eps: args.eps,
        steps: args.steps,
        seed: args.seed,
        hk_order: args.order,
    };
    let config = resolve_config(config, &overrides)?;
    let command = match args.command {
        CommandArg::Simulate => Command::Simulate,
        CommandArg::Verify => Command::Verify,
        CommandArg::HkScan => Command::HkScan,
        CommandArg::Report => Command::Report,
    };
    let outcome = run(&config, command, &args.out)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", outcome.artifact.display());
    if !outcome.passed {
        eprintln!("verification failed; see {}", outcome.artifact.display());
    }
    Ok(outcome.passed)
}
