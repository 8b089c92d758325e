//! Experiment runner: reads a TOML config of sources, potentials, costs and
//! tasks, runs the tasks and assembles a JSON report.

pub mod config;
pub mod tasks;

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use rhobar_core::Error;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use config::ExperimentConfig;
use tasks::{Check, Row};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable overriding the enumeration cap of the config.
pub const CAP_ENV: &str = "RHOBAR_ENUM_CAP";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    pub fn from_core(task: &str, e: Error) -> Self {
        let code = match e {
            Error::Singular(_)
            | Error::Inversion(_)
            | Error::EmptySupergradient { .. }
            | Error::Numeric(_)
            | Error::ZeroResidualMass => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        };
        Self { code, message: format!("task `{task}`: {e}") }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Clone, Serialize)]
pub struct TaskReport {
    pub name: String,
    pub kind: String,
    pub inputs: Value,
    pub results: Value,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tasks: Vec<TaskReport>,
    pub provenance: Provenance,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    rows: Vec<(String, String, Row)>,
}

impl Report {
    pub fn all_checks_pass(&self) -> bool {
        self.tasks.iter().flat_map(|t| &t.checks).all(|c| c.pass)
    }

    pub fn failed_checks(&self) -> Vec<String> {
        self.tasks
            .iter()
            .flat_map(|t| t.checks.iter().filter(|c| !c.pass).map(move |c| format!("{}/{}", t.name, c.name)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat table with columns `task,kind,series,n,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,kind,series,n,value\n");
        for (task, kind, row) in &self.rows {
            out.push_str(&format!("{task},{kind},{},{},{:?}\n", row.series, row.n, row.value));
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub cap: Option<u64>,
}

/// Seed handed to task `index`.
fn task_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1))
}

fn toml_to_json(v: &toml::Value) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

pub fn run_text(text: &str, opts: &RunOptions) -> Result<Report, CliError> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::parse(text)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(cap) = opts.cap {
        cfg.caps.enumeration = cap;
    }
    let hash = hex::encode(Sha256::digest(text.as_bytes()));

    let work = || -> Vec<Result<tasks::TaskOutput, CliError>> {
        cfg.tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| tasks::run_task(&cfg, t, task_seed(cfg.seed, i)))
            .collect()
    };
    let outputs = match opts.jobs {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| CliError::io(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut reports = Vec::with_capacity(outputs.len());
    let mut rows = Vec::new();
    for (task, out) in cfg.tasks.iter().zip(outputs) {
        let out = out?;
        let kind = task.spec.kind().to_string();
        rows.extend(out.rows.into_iter().map(|r| (task.name.clone(), kind.clone(), r)));
        reports.push(TaskReport {
            name: task.name.clone(),
            kind,
            inputs: toml_to_json(&task.raw),
            results: out.results,
            checks: out.checks,
        });
    }
    Ok(Report {
        tasks: reports,
        provenance: Provenance { config_hash: hash, seed: cfg.seed, version: env!("CARGO_PKG_VERSION").to_string() },
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        rows,
    })
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
    run_text(&text, opts)
}

/// Reads the cap override from the environment.
pub fn cap_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .ok()
            .filter(|c| *c > 0)
            .map(Some)
            .ok_or_else(|| CliError::validation(format!("{CAP_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}
