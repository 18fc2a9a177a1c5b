use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use signsel_cli::{run, Command, RunConfig};

/// Signed-feature selection experiments.
#[derive(Parser)]
#[command(name = "signsel", version)]
struct Args {
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output folder (default: the configured one, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = RunConfig::load(&args.config)
        .map_err(anyhow::Error::from)
        .and_then(|mut cfg| {
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            let out = args
                .out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            run(args.command, &cfg, &out)
        });
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
