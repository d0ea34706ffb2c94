use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use greeneq_cli::{run_file, thread_cap_from_env, Pipeline};

#[derive(Parser)]
#[command(name = "greeneq", version, about = "Green-energy equilibrium experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a JSON config file.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the pipeline selector.
        #[arg(long)]
        pipeline: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out, pipeline } => {
            if let Err(e) = thread_cap_from_env() {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            let pipeline = match pipeline {
                None => None,
                Some(name) => match Pipeline::parse(&name) {
                    Some(p) => Some(p),
                    None => {
                        eprintln!("error: unknown pipeline \"{name}\"");
                        return ExitCode::from(1);
                    }
                },
            };
            match run_file(&config, seed, out.as_deref(), pipeline) {
                Ok(artifacts) => {
                    for path in &artifacts.outputs {
                        println!("wrote {}", path.display());
                    }
                    let failed: Vec<&str> = artifacts
                        .reports
                        .iter()
                        .filter(|r| !r.pass)
                        .map(|r| r.name.as_str())
                        .collect();
                    if failed.is_empty() {
                        println!("all {} verification checks passed", artifacts.reports.len());
                        ExitCode::from(0)
                    } else {
                        eprintln!("verification failures: {}", failed.join(", "));
                        ExitCode::from(2)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
