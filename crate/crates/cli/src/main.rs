//! `tidegym` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 numerical
//! divergence during a run.

mod cli;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use cli::{Cli, Command};
use commands::Ctx;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let ctx = Ctx {
        format: cli.format,
        workers: cli.workers,
    };
    let result = match &cli.command {
        Command::Bench(a) => commands::bench(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Rollout(a) => commands::rollout_cmd(&ctx, a),
        Command::DrCheck(a) => commands::dr_check(&ctx, a),
        Command::Ablation(a) => commands::ablation(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
