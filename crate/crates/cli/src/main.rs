mod data;
mod failure;
mod model;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Text-overlay hallucination metrics and a consistency-routed mixture of
/// experts at desk scale.
#[derive(Debug, Parser)]
#[command(name = "overlay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic samples file.
    Corpus(data::CorpusArgs),
    /// Check a samples file against the schema.
    Validate(data::ValidateArgs),
    /// Draw synthetic model responses for a samples file.
    Simulate(data::SimulateArgs),
    /// Score responses and print the robustness report.
    Eval(data::EvalArgs),
    /// Run one synthetic input through the model and summarize its routing.
    MoeDemo(model::DemoArgs),
    /// Train on synthetic conflict data and write a checkpoint.
    TrainToy(model::TrainArgs),
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck(model::GradcheckArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Corpus(a) => data::corpus(a),
        Command::Validate(a) => data::validate(a),
        Command::Simulate(a) => data::simulate(a),
        Command::Eval(a) => data::eval(a),
        Command::MoeDemo(a) => model::moe_demo(a),
        Command::TrainToy(a) => model::train_toy(a),
        Command::Gradcheck(a) => model::gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
