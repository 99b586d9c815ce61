use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use backforth_cli::commands;

#[derive(Parser)]
#[command(name = "backforth", version, about = "Order-isomorphic entire interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and verify a construction from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Refuse configs that carry a seed.
        #[arg(long)]
        seedless: bool,
    },
    /// Re-check a trace and compare it with a fresh rebuild.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        /// Report path; defaults to the report name of the recorded config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the recorded series on a uniform grid.
    ExportSamples {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seedless } => commands::run(&config, &out, seedless),
        Command::Verify { trace, out } => commands::verify(&trace, out.as_deref()),
        Command::ExportSamples {
            trace,
            out,
            window,
            count,
        } => commands::export_samples(&trace, &out, window, count),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
