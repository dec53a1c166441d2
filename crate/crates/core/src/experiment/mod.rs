//! Experiment configs, runners and CSV output.
//!
//! A run turns an [`ExperimentConfig`] into a [`RunRecord`]: named tables of
//! pre-formatted CSV rows plus a list of pass/fail checks. Tables depend only
//! on the config (including its seed), never on timing or worker count.

mod config;
mod pde;
mod stochastic;
mod verify;

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    BinConfig, CancellationConfig, ChaosStudyConfig, CombinatoricsConfig, ExpMomentConfig, Experiment,
    ExperimentConfig, GridConfig, SimulateConfig, VlasovRunConfig, WeakStrongConfig,
};
pub use pde::solve_alpha_for_entropy;

use crate::error::{Error, Result};
use crate::par;
use crate::particle_system::csv_err;

/// Fixed 17-significant-digit rendering used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV file: a fixed header and rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// Index of a column by header name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub tables: Vec<Table>,
    pub checks: Vec<CheckResult>,
    pub wall_time: f64,
}

/// What the runners hand back before the record is stamped.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<CheckResult>,
}

impl RunRecord {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }

    pub fn passed(&self) -> bool {
        self.failures() == 0
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Write `<name>.csv` per table, `checks.csv` and `run.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for t in &self.tables {
            fs::write(dir.join(format!("{}.csv", t.name)), t.to_csv()?)?;
        }
        let mut checks = Table::new("checks", &["check", "pass", "detail"]);
        for c in &self.checks {
            checks.push(vec![c.name.clone(), c.pass.to_string(), c.detail.clone()]);
        }
        fs::write(dir.join("checks.csv"), checks.to_csv()?)?;
        let summary = serde_json::json!({
            "kind": self.config.experiment.kind(),
            "config": self.config,
            "config_hash": self.config_hash,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
            "checks": self.checks,
            "failures": self.failures(),
            "wall_time_seconds": self.wall_time,
        });
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.into()))?;
        fs::write(dir.join("run.json"), text + "\n")?;
        Ok(())
    }
}

/// SHA-256 over `"blob <len>\0" + canonical JSON`, where the canonical form
/// has sorted keys, all defaults filled in, and no output path or thread
/// count.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut semantic = cfg.clone();
    semantic.output = None;
    semantic.threads = None;
    // serde_json's default map is ordered by key
    let value = serde_json::to_value(&semantic).map_err(|e| Error::Config(e.to_string()))?;
    let body = serde_json::to_string(&value).map_err(|e| Error::Config(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(body.as_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Validate and execute `cfg` on a pool of `cfg.threads` workers.
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let config_hash = config_hash(cfg)?;
    let start = Instant::now();
    let seed = cfg.seed;
    let outcome = par::with_threads(cfg.threads, || match &cfg.experiment {
        Experiment::Simulate(c) => stochastic::run_simulate(c, seed),
        Experiment::ChaosStudy(c) => stochastic::run_chaos_study(c, seed),
        Experiment::Expmoment(c) => stochastic::run_expmoment(c, seed),
        Experiment::CombinatoricsVerify(c) => verify::run_combinatorics_verify(c),
        Experiment::CancellationVerify(c) => verify::run_cancellation_verify(c, seed),
        Experiment::VlasovRun(c) => pde::run_vlasov(c),
        Experiment::Weakstrong(c) => pde::run_weakstrong(c),
    })?;
    Ok(RunRecord {
        config: cfg.clone(),
        config_hash,
        tables: outcome.tables,
        checks: outcome.checks,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
