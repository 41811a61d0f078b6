//! `marc` command-line tool: generate planted-rationale datasets, train the
//! built-in toy classifiers, produce rationales with the mask optimizer or
//! the attribution baselines, evaluate them, and render them.

mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use marc_core::Error;

use commands::{Cli, Command};

fn exit_code_for(err: &Error) -> u8 {
    match err {
        // bad request
        Error::InvalidArgument(_) => 1,
        // bad data, bad model, broken IO
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reserves exit code 2 for usage errors; this tool uses 1
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::GenerateData(args) => commands::cmd_generate_data(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Explain(args) => commands::cmd_explain(args),
        Command::Evaluate(args) => commands::cmd_evaluate(args),
        Command::Render(args) => commands::cmd_render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
