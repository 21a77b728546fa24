//! `uxnet`: command-line front end for the 3D UX-Net stack.
//!
//! Subcommands: `synth` (dataset generation), `train`, `eval`, `infer`,
//! `analyze` (cost tables), and `gradcheck` (finite-difference audit).
//! All of them read one strict JSON config (`--config`), overridden by
//! flags; `--print-config` shows the merged result.
//!
//! Exit codes are a stable contract: 0 success, 1 usage or configuration
//! error, 2 runtime failure. `UXNET_THREADS` caps worker parallelism.

mod args;
mod commands;
mod config;

use clap::Parser;

/// Failures split by exit code: usage/config errors exit 1, runtime
/// failures exit 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let parsed = match args::Cli::try_parse() {
        Ok(parsed) => parsed,
        Err(e) => {
            // --help and --version land here too; they are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    uxnet_core::threading::configure_from_env();
    match commands::dispatch(parsed) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
