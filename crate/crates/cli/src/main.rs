//! `mink`: command-line front end for the L_p Minkowski toolkit.

mod args;
mod commands;
mod config;
mod output;
mod selftest;
mod source;

use std::ffi::OsString;
use std::fmt;

use mink_core::MinkError;

/// A failure mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
    NotConverged(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NotConverged(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

impl From<MinkError> for CliError {
    fn from(e: MinkError) -> Self {
        match e {
            MinkError::Validation(m) => CliError::Validation(m),
            MinkError::Numeric(m) => CliError::Numeric(m),
            MinkError::NotCritical { .. }
            | MinkError::InvalidPath(_)
            | MinkError::DegenerateWulff(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn run(argv: Vec<OsString>) -> i32 {
    let inv = match config::resolve(argv) {
        Ok(inv) => inv,
        Err(config::Resolve::Exit(code)) => return code,
        Err(config::Resolve::Failed(e)) => {
            eprintln!("mink: {e}");
            return e.code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("mink: {e}");
        return e.code();
    }
    match commands::dispatch(&inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mink: {e}");
            e.code()
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("MINK_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("MINK_THREADS must be a positive integer, got {v:?}")))?;
    // A pool that already exists (repeated calls in tests) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn main() {
    std::process::exit(run(std::env::args_os().collect()));
}
