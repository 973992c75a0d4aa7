//! Reports written to `report.json` and the CSV tables behind them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One named pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// A CSV table. Cells are JSON values; non-finite floats are stored as null
/// and written as `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub file: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            file: String::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Float cell: `{:.15e}` in CSV, `null` when not finite.
    pub fn num(x: f64) -> Value {
        serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
    }

    pub fn int(x: usize) -> Value {
        Value::from(x as u64)
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::String(s.into())
    }

    pub fn format_cell(v: &Value) -> String {
        match v {
            Value::Null => "NaN".into(),
            Value::Bool(b) => b.to_string(),
            Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
                (Some(u), _, _) if !n.is_f64() => u.to_string(),
                (_, Some(i), _) if !n.is_f64() => i.to_string(),
                (_, _, Some(f)) => format!("{f:.15e}"),
                _ => n.to_string(),
            },
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: String,
    /// Resolved configuration, defaults included.
    pub config: ExperimentConfig,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub summary: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    /// Set when the experiment aborted; partial tables are kept.
    pub error: Option<String>,
    pub wall_clock_s: f64,
    pub version: String,
}

impl ExperimentReport {
    pub fn new(name: String, config: ExperimentConfig, seed: u64) -> Self {
        Self {
            name,
            kind: config.kind().into(),
            config,
            seed,
            pass: false,
            checks: Vec::new(),
            summary: BTreeMap::new(),
            tables: Vec::new(),
            error: None,
            wall_clock_s: 0.0,
            version: VERSION.into(),
        }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, pass, detail));
    }

    pub fn set(&mut self, key: &str, v: Value) {
        self.summary.insert(key.into(), v);
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// A failed run never passes, and neither does one without checks.
    pub fn finish(&mut self) {
        self.pass = self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub version: String,
    pub seed: u64,
    pub pass: bool,
    pub experiments: Vec<ExperimentReport>,
}

impl SuiteReport {
    pub fn experiment(&self, name: &str) -> Option<&ExperimentReport> {
        self.experiments.iter().find(|e| e.name == name)
    }
}
