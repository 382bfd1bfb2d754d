use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tcl4_cli::config::Reference;
use tcl4_cli::{init_workers, parse_config_with_defaults, run, Command};

#[derive(Parser)]
#[command(name = "tcl4", version, about = "TCL2/TCL4 spin-boson dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate one trajectory.
    Simulate(Args),
    /// Run a (theta, T) benchmark grid.
    Sweep(Args),
    /// Validate the generators against exact discrete-bath dynamics.
    Oracle(Args),
    /// Convergence of the FFT correlation function with grid length.
    BcfCheck(Args),
    /// Time the generator-series build.
    Bench(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `solver.order`.
    #[arg(long, value_parser = ["0", "2", "4"])]
    order: Option<String>,
    /// Reference trajectory CSV; overrides `reference.path`.
    #[arg(long)]
    reference: Option<PathBuf>,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
        Cmd::Oracle(a) => (Command::Oracle, a),
        Cmd::BcfCheck(a) => (Command::BcfCheck, a),
        Cmd::Bench(a) => (Command::Bench, a),
    };
    init_workers()?;
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let (mut cfg, defaults) = parse_config_with_defaults(&text).with_context(|| format!("in {}", args.config.display()))?;
    if let Some(o) = args.order {
        cfg.solver.order = o.parse()?;
    }
    if let Some(p) = args.reference {
        cfg.reference.get_or_insert_with(|| Reference { path: None, cells: Vec::new() }).path = Some(p);
    }
    cfg.validate()?;
    let outcome = run(command, &cfg, defaults, args.out.as_deref())?;
    for note in &outcome.manifest.notes {
        eprintln!("{note}");
    }
    println!("wrote {} files to {}", outcome.manifest.files.len(), outcome.dir.display());
    Ok(outcome.success())
}
