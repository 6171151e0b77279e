//! `agf`: train, evaluate, attack and benchmark anchor graph transformers.

mod args;
mod commands;
mod run_dir;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "agf", version, about = "Anchor graph transformer for graph classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-validate a model and write results, manifest and checkpoints.
    Train(commands::TrainArgs),
    /// Re-score the checkpoints of a finished training run.
    Eval(commands::EvalArgs),
    /// Accuracy of anchor and full-attention models under edge insertions.
    Attack(commands::AttackArgs),
    /// Time anchor attention against full attention on synthetic graphs.
    Bench(commands::BenchArgs),
    /// Louvain anchor statistics for every graph of a dataset.
    Anchors(commands::AnchorsArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Attack(a) => commands::attack(a),
        Command::Bench(a) => commands::bench(a),
        Command::Anchors(a) => commands::anchors(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
