//! The `fogclear` command-line driver.

pub mod args;
pub mod commands;
pub mod config_file;
pub mod heatmap;
pub mod manifest;

use clap::Parser;
use fogclear_core::{Error, Result};

use crate::args::{Cli, Command};
use crate::commands::Finished;
use crate::manifest::{unix_now, Outputs};

/// Worker count from `FOGCLEAR_THREADS`; unset or 0 means one thread.
pub fn thread_count() -> usize {
    std::env::var("FOGCLEAR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// 0 on success, 1 for bad arguments or data, 2 for I/O and file-format
/// errors.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_io_or_format() {
        2
    } else {
        1
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let started = unix_now();
    let (seed, out_dir) = (cli.seed, cli.out_dir.as_path());
    let Finished { files, code } = match &cli.command {
        Command::Gen(a) => commands::gen(a, seed, out_dir)?,
        Command::TrainEd(a) => commands::train_ed(a, seed, out_dir)?,
        Command::TrainClf(a) => commands::train_clf(a, seed, out_dir)?,
        Command::EvalClf(a) => commands::eval_clf(a, seed, out_dir)?,
        Command::Render(a) => commands::render(a, out_dir)?,
        Command::Gradcheck(a) => commands::gradcheck(a, seed, out_dir)?,
        Command::BenchPolicies(a) => commands::bench_policies(a, seed, out_dir)?,
    };
    let mut outputs = Outputs::new();
    files.flush(&mut outputs)?;
    let config = serde_json::to_value(cli).expect("arguments serialize");
    outputs.finish(out_dir, cli.command.name(), seed, config, started)?;
    Ok(code)
}

/// Runs one command line (including the program name) and returns the
/// process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let argv = match config_file::expand_argv(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    // Fails only if a pool already exists (repeated calls in one process).
    let _ = rayon::ThreadPoolBuilder::new().num_threads(thread_count()).build_global();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
