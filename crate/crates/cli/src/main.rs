//! `isaacs` — batch experiment runner for the parabolic Isaacs workbench.
//!
//! ```text
//! isaacs <command> --spec FILE --out DIR [--seed N] [--threads N]
//! ```
//!
//! Exit codes: 0 success, 2 validation failure, 3 solver non-convergence,
//! 4 numerical-contract violation (CFL bound or diagonal dominance).

mod artifacts;
mod commands;
mod spec;

use clap::{Args, Parser, Subcommand};
use spec::{CliResult, RawSpec};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "isaacs", version, about = "Parabolic Isaacs equation workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem description (flat sectioned key-value file).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for CSV artifacts and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// Override the random seed from the problem description file.
    #[arg(long)]
    seed: Option<u64>,
    /// Internal thread-pool size (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One cutoff solve at the configured level and side.
    Solve(Common),
    /// Climb the cutoff ladder from both sides to bracket the solution.
    Extremal(Common),
    /// Gap curve between the two extremal solutions plus a decay-rate fit.
    Uniqueness(Common),
    /// Operator-smoothing stability ladder across kernel scales.
    Stability(Common),
    /// Structure, barrier, mollifier, penalty-slack and viscosity audits.
    Verify(Common),
    /// Cartesian cutoff-level by smoothing-scale experiment grid.
    Sweep(Common),
}

fn main() {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Solve(c) => ("solve", c),
        Command::Extremal(c) => ("extremal", c),
        Command::Uniqueness(c) => ("uniqueness", c),
        Command::Stability(c) => ("stability", c),
        Command::Verify(c) => ("verify", c),
        Command::Sweep(c) => ("sweep", c),
    };
    std::process::exit(run(name, common));
}

fn run(name: &str, common: &Common) -> i32 {
    if let Some(threads) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return 2;
        }
    }
    let outcome: CliResult<i32> = (|| {
        let raw = RawSpec::parse(&common.spec)?;
        let problem = spec::resolve(&raw, common.seed)?;
        let out = artifacts::prepare_out_dir(&common.out)?;
        commands::run(name, &problem, &out)
    })();
    match outcome {
        Ok(0) => {
            println!("ok: artifacts in {}", common.out.display());
            0
        }
        Ok(3) => {
            eprintln!(
                "not converged: partial artifacts in {}",
                common.out.display()
            );
            3
        }
        Ok(4) => {
            eprintln!(
                "numerical contract violated: details in {}",
                common.out.display()
            );
            4
        }
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
