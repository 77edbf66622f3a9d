//! `mcdsvdd`: benchmark, train, score and synthesize datasets.
//!
//! Exit status: 0 on success, 1 on failure, 2 when a benchmark completed
//! only some of its cells.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcdsvdd::DetectorKind;

#[derive(Parser)]
#[command(
    name = "mcdsvdd",
    version,
    about = "Multi-class Deep SVDD anomaly detection benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the leave-one-subclass-out benchmark and write the results table.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated detector names.
        #[arg(long, value_delimiter = ',')]
        detectors: Option<Vec<DetectorKind>>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Fit one detector with a subclass held out and save its model card.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        detector: DetectorKind,
        #[arg(long)]
        top_class: String,
        #[arg(long)]
        outlier: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Score a feature table with a saved model card.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a dataset from a synthetic mixture spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bench {
            config,
            seed,
            detectors,
            jobs,
            output_dir,
        } => commands::bench(&config, seed, detectors, jobs, output_dir),
        Command::Train {
            config,
            detector,
            top_class,
            outlier,
            seed,
            output_dir,
        } => commands::train(&config, detector, &top_class, &outlier, seed, output_dir).map(|_| 0),
        Command::Score { model, input, output } => commands::score(&model, &input, &output).map(|_| 0),
        Command::Synth { spec, seed, output } => commands::synth(&spec, seed, &output).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            let record = serde_json::json!({ "level": "error", "message": e.to_string(), "causes": chain });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
