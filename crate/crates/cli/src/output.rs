//! Report writers. JSON documents and CSV files both carry the tool version,
//! configuration hash and seed.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: &str, seed: u64) -> Self {
        Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            seed,
        }
    }
}

fn sink(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    command: &'a str,
    report: &'a T,
}

pub fn write_json<T: Serialize>(out: Option<&Path>, prov: &Provenance, command: &str, report: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(&Envelope {
        provenance: prov,
        command,
        report,
    })?;
    text.push('\n');
    sink(out, text.as_bytes())
}

pub enum Cell {
    Str(String),
    Float(f64),
    Int(i64),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Str(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

/// Seventeen significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn render(c: &Cell) -> String {
    match c {
        Cell::Str(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Str(s) => s.clone(),
        Cell::Float(v) => float(*v),
        Cell::Int(v) => v.to_string(),
        Cell::Empty => String::new(),
    }
}

/// A `#`-prefixed provenance line, the header, then one line per row.
pub fn write_csv(out: Option<&Path>, prov: &Provenance, header: &[&str], rows: &[Vec<Cell>]) -> CliResult<()> {
    let mut text = format!(
        "# tool_version={} config_hash={} seed={}\n{}\n",
        prov.tool_version,
        prov.config_hash,
        prov.seed,
        header.join(",")
    );
    for row in rows {
        let line: Vec<String> = row.iter().map(render).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    sink(out, text.as_bytes())
}
