use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mre_cli::commands;
use mre_cli::{Context, Result, RunConfig};
use mre_core::Method;

#[derive(Parser)]
#[command(
    name = "mre",
    version,
    about = "Elasticity reconstruction from synthetic MR elastography data"
)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding inputs and outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh and ground-truth modulus field.
    Phantom,
    /// Solve the forward problem and add measurement noise.
    Simulate,
    /// Reconstruct the modulus from the simulated measurement.
    Reconstruct {
        /// proposed, baseline-tv, baseline-ws or nodal; overrides the config.
        #[arg(long, value_parser = parse_method)]
        method: Option<Method>,
    },
    /// Score the reconstruction against the ground truth.
    Evaluate,
    /// Run the noise-level sweep.
    Sweep,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: mre_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let ctx = Context {
        config,
        out: cli.out,
        jobs,
    };
    match cli.command {
        Command::Phantom => {
            let info = commands::phantom(&ctx)?;
            println!("phantom: {} nodes, {} elements", info.nodes, info.elements);
        }
        Command::Simulate => {
            let info = commands::simulate(&ctx)?;
            println!("simulate: realized noise level {:.4}", info.realized_delta);
        }
        Command::Reconstruct { method } => {
            let method = method.unwrap_or(ctx.config.method);
            let info = commands::reconstruct(&ctx, method)?;
            match (info.rms, info.converged) {
                (Some(rms), Some(conv)) => {
                    println!("reconstruct ({method}): rms {rms:.4}, converged {conv}")
                }
                _ => println!("reconstruct ({method}): done"),
            }
        }
        Command::Evaluate => {
            let m = commands::evaluate(&ctx)?;
            println!("evaluate: rms {:.4}, cnr {:?}", m.rms, m.cnr);
        }
        Command::Sweep => {
            let out = commands::sweep(&ctx)?;
            let failed = out.rows.iter().filter(|r| r.status != "ok").count();
            println!("sweep: {} runs, {failed} failed", out.rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
