//! `relage` — pairwise relation regression for scalar age estimation.
//!
//! Subcommands: `generate` synthetic datasets, `train` the pair network(s),
//! `evaluate` checkpoints on the held-out fold, `estimate` ages from
//! relation-prediction CSVs, and `compare` evaluation reports.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "relage",
    version,
    about = "Pairwise relation regression for age estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset: manifest, rasters, fold assignment.
    Generate(commands::generate::GenerateArgs),
    /// Train the relation network(s) on a generated manifest.
    Train(commands::train::TrainArgs),
    /// Evaluate checkpoints on their held-out fold (all strategies).
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Standalone recovery: turn relation-prediction CSVs into age estimates.
    Estimate(commands::estimate::EstimateArgs),
    /// Compare evaluation reports: paired t-tests and per-cohort ranks.
    Compare(commands::compare::CompareArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are validation failures (exit 1); --help and
            // --version exit cleanly.
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Estimate(args) => commands::estimate::run(args),
        Command::Compare(args) => commands::compare::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(if e.is_validation() { 1 } else { 2 });
    }
}
