//! `cosmot`: train cosine-margin embeddings, run the tracker, and score
//! tracking output on the shared plain-text formats.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or malformed input,
//! 3 degenerate data at runtime.

mod commands;
mod config;
mod fail;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cosmot", version, about = "Cosine-margin embedding and tracking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check analytical loss gradients against finite differences
    Gradcheck(commands::gradcheck::Args),
    /// Fit a linear projection on labeled detections
    Train(commands::train::Args),
    /// Associate a detection stream into tracks
    Track(commands::track::Args),
    /// Score hypothesis tracks against ground truth
    Eval(commands::eval::Args),
    /// Train/track/evaluate a loss x matcher grid on synthetic scenarios
    Sweep(commands::sweep::Args),
    /// Generate a synthetic detection stream with ground truth
    Synth(commands::synth::Args),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Track(args) => commands::track::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Synth(args) => commands::synth::run(args),
    };
    if let Err(failure) = outcome {
        eprintln!("error: {}", failure.message);
        std::process::exit(failure.code);
    }
}
