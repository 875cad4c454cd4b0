use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oversketch::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "osn", about = "Straggler-resilient Newton experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and write its CSV trace.
    Run {
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two finished CSV traces.
    Compare { a: PathBuf, b: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = match ExperimentConfig::from_path(&config) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            match harness::run_experiment(&cfg, seed, out.as_deref()) {
                Ok(summary) => {
                    println!(
                        "{:?} after {} iterations: f = {:.6e}, |grad| = {:.6e}, vt = {:.3}, trace = {}",
                        summary.termination,
                        summary.iterations,
                        summary.final_f,
                        summary.final_grad_norm,
                        summary.total_vt,
                        summary.csv_path.display()
                    );
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Compare { a, b } => match harness::compare_runs(&a, &b) {
            Ok(table) => {
                print!("{table}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
