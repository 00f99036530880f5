use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::LabConfig;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    /// Measured values, keyed by name.
    pub values: BTreeMap<String, Value>,
    pub tolerances: BTreeMap<String, f64>,
    /// Names of the hard conditions that failed.
    #[serde(default)]
    pub failures: Vec<String>,
    /// CSV files written next to the report.
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub runtime_ms: f64,
}

impl CheckReport {
    pub fn new(name: &str) -> Self {
        CheckReport {
            name: name.to_string(),
            status: Status::Pass,
            verdict: None,
            values: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            failures: Vec::new(),
            files: Vec::new(),
            error: None,
            runtime_ms: 0.0,
        }
    }

    pub fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn tolerance(&mut self, key: &str, t: f64) {
        self.tolerances.insert(key.to_string(), t);
    }

    /// Records a hard condition; a false one fails the check.
    pub fn require(&mut self, name: &str, ok: bool) {
        if !ok {
            self.failures.push(name.to_string());
            self.status = Status::Fail;
        }
    }

    pub fn value_f64(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(Value::as_f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub artifact_version: String,
    pub model_label: String,
    pub seed: u64,
    pub config: LabConfig,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| c.status == Status::Fail).map(|c| c.name.as_str()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The report with timing fields zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> SuiteReport {
        let mut r = self.clone();
        for c in &mut r.checks {
            c.runtime_ms = 0.0;
        }
        r
    }
}
