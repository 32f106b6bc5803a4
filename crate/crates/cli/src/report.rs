use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

pub const TOOL: &str = "recon-eval";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// A failed run: exit code, the stage that failed, and the cause.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub stage: String,
    pub error: anyhow::Error,
}

pub type CmdResult<T> = Result<T, Failure>;

pub const EXIT_COMPUTE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;

pub fn input_failure(stage: impl Into<String>, error: impl Display) -> Failure {
    Failure {
        code: EXIT_INPUT,
        stage: stage.into(),
        error: anyhow::anyhow!("{error}"),
    }
}

pub trait Stage<T> {
    /// Tags an error with the stage that produced it.
    fn stage(self, stage: impl Into<String>) -> CmdResult<T>;
}

impl<T> Stage<T> for recon_eval::Result<T> {
    fn stage(self, stage: impl Into<String>) -> CmdResult<T> {
        self.map_err(|e| {
            let code = match e {
                recon_eval::Error::Io { .. } | recon_eval::Error::Parse(_) => EXIT_INPUT,
                _ => EXIT_COMPUTE,
            };
            Failure {
                code,
                stage: stage.into(),
                error: e.into(),
            }
        })
    }
}

impl<T> Stage<T> for Result<T, recon_eval::ParseError> {
    fn stage(self, stage: impl Into<String>) -> CmdResult<T> {
        self.map_err(|e| input_failure(stage, e))
    }
}

impl<T> Stage<T> for std::io::Result<T> {
    fn stage(self, stage: impl Into<String>) -> CmdResult<T> {
        self.map_err(|e| input_failure(stage, e))
    }
}

/// JSON number, with non-finite values spelled out as strings.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else if x.is_nan() {
        Value::from("nan")
    } else if x > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

pub fn path_value(p: &Path) -> Value {
    Value::from(p.display().to_string())
}

/// Rows for CSV output.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// What a subcommand produces before serialization.
pub struct Outcome {
    pub parameters: Map<String, Value>,
    pub metrics: Value,
    pub table: Table,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    parameters: &'a Map<String, Value>,
    metrics: &'a Value,
    timing_s: f64,
}

pub fn render(command: &str, outcome: &Outcome, format: Format, timing_s: f64) -> CmdResult<Vec<u8>> {
    match format {
        Format::Json => {
            let report = Report {
                tool: TOOL,
                version: env!("CARGO_PKG_VERSION"),
                command,
                parameters: &outcome.parameters,
                metrics: &outcome.metrics,
                timing_s,
            };
            let mut out = serde_json::to_vec_pretty(&report).map_err(|e| Failure {
                code: EXIT_COMPUTE,
                stage: "serializing report".into(),
                error: e.into(),
            })?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let fail = |e: csv::Error| Failure {
                code: EXIT_COMPUTE,
                stage: "writing CSV".into(),
                error: e.into(),
            };
            w.write_record(&outcome.table.headers).map_err(fail)?;
            for row in &outcome.table.rows {
                w.write_record(row).map_err(fail)?;
            }
            w.into_inner().map_err(|e| Failure {
                code: EXIT_COMPUTE,
                stage: "writing CSV".into(),
                error: anyhow::anyhow!("{e}"),
            })
        }
    }
}

pub fn emit(bytes: &[u8], out: Option<&PathBuf>) -> CmdResult<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).stage(format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).stage("writing stdout")
        }
    }
}

/// Shortest round-trip representation, `inf`/`-inf`/`NaN` for non-finite values.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}
