//! `spikeopt` command-line front end.
//!
//! Exit status: 0 success, 2 infeasible target, 3 solver failure,
//! 4 invalid input.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use rayon::prelude::*;

use crate::commands::{prepare, run_one, CliError};
use crate::config::{Cli, RunConfig};

const THREADS_VAR: &str = "SPIKEOPT_THREADS";

fn threads() -> usize {
    std::env::var(THREADS_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0)
}

fn run(cfg: RunConfig) -> Result<(), CliError> {
    let prep = prepare(&cfg)?;
    let items = cfg.expand();
    if items.len() == 1 {
        let text = run_one(&items[0], &prep)?;
        print!("{text}");
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads())
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    let results: Vec<_> = pool.install(|| items.par_iter().map(|c| run_one(c, &prep)).collect());
    let mut stdout = std::io::stdout().lock();
    let mut worst: Option<CliError> = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(text) => {
                let _ = stdout.write_all(text.as_bytes());
            }
            Err(e) => {
                eprintln!("sweep item {i} (T = {}): {e}", items[i].t.unwrap_or(f64::NAN));
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    worst.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    let (kind, flags) = cli.command.split();
    let cfg = match RunConfig::resolve(kind, flags) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(4);
        }
    };
    match run(cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
