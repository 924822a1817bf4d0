//! Argument parsing with `--config` merging and the configuration hash.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::{Cli, Command};
use crate::CliError;

pub struct Invocation {
    pub command: Command,
    pub seed: u64,
    pub config_hash: String,
}

pub enum Resolve {
    /// Help or version output; carries the exit code.
    Exit(i32),
    Failed(CliError),
}

impl From<CliError> for Resolve {
    fn from(e: CliError) -> Self {
        Resolve::Failed(e)
    }
}

fn parse(argv: &[OsString]) -> Result<ArgMatches, Resolve> {
    Cli::command().try_get_matches_from(argv).map_err(|e| {
        let code = if e.use_stderr() { 2 } else { 0 };
        let _ = e.print();
        Resolve::Exit(code)
    })
}

/// Subcommand names from the root down, with the deepest matches and command.
fn deepest<'a>(mut cmd: &'a clap::Command, mut m: &'a ArgMatches) -> (Vec<String>, &'a clap::Command, &'a ArgMatches) {
    let mut names = Vec::new();
    while let Some((name, sub)) = m.subcommand() {
        names.push(name.to_string());
        cmd = cmd.find_subcommand(name).expect("matched subcommand exists");
        m = sub;
    }
    (names, cmd, m)
}

/// Renders a JSON config value as command-line arguments for `--key`.
fn config_args(key: &str, value: &Value) -> Result<Vec<String>, CliError> {
    Ok(match value {
        Value::Null | Value::Bool(false) => vec![],
        Value::Bool(true) => vec![format!("--{key}")],
        Value::Number(x) => vec![format!("--{key}={x}")],
        Value::String(s) => vec![format!("--{key}={s}")],
        Value::Array(items) => {
            let parts: Result<Vec<String>, CliError> = items
                .iter()
                .map(|v| match v {
                    Value::Number(x) => Ok(x.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(CliError::Validation(format!("config key {key:?}: list items must be scalars"))),
                })
                .collect();
            vec![format!("--{key}={}", parts?.join(","))]
        }
        Value::Object(_) => vec![format!("--{key}={value}")],
    })
}

pub fn resolve(argv: Vec<OsString>) -> Result<Invocation, Resolve> {
    // Required flags may come from the config, so the first pass is lenient.
    let first = Cli::command().ignore_errors(true).try_get_matches_from(&argv).ok();
    let config = first.as_ref().and_then(|m| m.get_one::<PathBuf>("config").cloned());
    let matches = match config {
        None => parse(&argv)?,
        Some(path) => {
            let first = first.expect("config path implies matches");
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("config {} is not valid JSON: {e}", path.display())))?;
            let Value::Object(obj) = value else {
                return Err(CliError::Validation("config must be a JSON object".into()).into());
            };
            let root = Cli::command();
            let (names, cmd, sub) = deepest(&root, &first);
            let mut extra: Vec<String> = Vec::new();
            for (raw_key, v) in &obj {
                let key = raw_key.replace('_', "-");
                match key.as_str() {
                    "command" => {
                        let want = names.join(" ");
                        if v.as_str() != Some(want.as_str()) && v.as_str() != names.last().map(|s| s.as_str()) {
                            return Err(CliError::Validation(format!(
                                "config is for command {v}, but {want:?} was invoked"
                            ))
                            .into());
                        }
                    }
                    "config" => return Err(CliError::Validation("config files cannot nest".into()).into()),
                    "seed" => {
                        if first.value_source("seed") != Some(ValueSource::CommandLine) {
                            extra.extend(config_args(&key, v)?);
                        }
                    }
                    _ => {
                        let arg = cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())).ok_or_else(|| {
                            CliError::Validation(format!("unknown config key {raw_key:?} for {}", names.join(" ")))
                        })?;
                        if sub.value_source(arg.get_id().as_str()) != Some(ValueSource::CommandLine) {
                            extra.extend(config_args(&key, v)?);
                        }
                    }
                }
            }
            let mut merged = argv.clone();
            merged.extend(extra.into_iter().map(OsString::from));
            parse(&merged)?
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Resolve::Failed(CliError::Validation(e.to_string())))?;
    let config_hash = hash_command(&cli.command)?;
    Ok(Invocation {
        command: cli.command,
        seed: cli.seed,
        config_hash,
    })
}

/// SHA-256 of the resolved command configuration; output paths are excluded.
pub fn hash_command(cmd: &Command) -> Result<String, CliError> {
    let canonical = serde_json::to_string(cmd)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
