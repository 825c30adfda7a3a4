//! `vocabdiff`: subcommands over the vocabulary difficulty library.
//!
//! Exit codes: 0 on success, 1 for input errors (including usage errors),
//! 2 for internal failures. Every run writes a JSON manifest next to its
//! main output.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod failure;
mod output;
mod tables;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{input_paths, Cli, Command};
use commands::{data, evaluate, explain, prompt, train};
use failure::{CliResult, EXIT_USER};

fn name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Ingest(_) => "ingest",
        Command::Features(_) => "features",
        Command::TrainGbt(_) => "train-gbt",
        Command::TrainToy(_) => "train-toy",
        Command::Predict(_) => "predict",
        Command::Explain(_) => "explain",
        Command::Stack(_) => "stack",
        Command::Eval(_) => "eval",
        Command::SimulateOptimum(_) => "simulate-optimum",
        Command::RenderPrompt(_) => "render-prompt",
        Command::DerivePromptFeatures(_) => "derive-prompt-features",
    }
}

fn dispatch(cmd: &Command) -> CliResult<()> {
    output::require_inputs(input_paths(cmd))?;
    match cmd {
        Command::Ingest(a) => data::ingest(a),
        Command::Features(a) => data::features(a),
        Command::TrainGbt(a) => train::train_gbt(a),
        Command::TrainToy(a) => train::train_toy(a),
        Command::Predict(a) => train::predict(a),
        Command::Explain(a) => explain::explain(a),
        Command::Stack(a) => train::stack(a),
        Command::Eval(a) => evaluate::eval(a),
        Command::SimulateOptimum(a) => evaluate::simulate_optimum(a),
        Command::RenderPrompt(a) => prompt::render_prompt(a),
        Command::DerivePromptFeatures(a) => prompt::derive_prompt_features(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USER,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {:#}", name(&cli.command), f.error);
            ExitCode::from(f.code)
        }
    }
}
