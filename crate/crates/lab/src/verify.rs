use std::path::{Path, PathBuf};

use crate::checks::{applicable, run_check, Ctx};
use crate::config::{build_model, Check, ConfigError, LabConfig};
use crate::exec::Pool;
use crate::report::{SuiteReport, Status, ARTIFACT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Command-line overrides of config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub checks: Vec<Check>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut LabConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(p) = self.parallelism {
            cfg.parallelism = p;
        }
        if !self.checks.is_empty() {
            cfg.suite = self.checks.clone();
        }
    }
}

pub fn output_dir(cfg: &LabConfig) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("lab-out"))
}

/// Runs the configured suite and writes report.json plus the per-check
/// CSVs into the output directory.
pub fn run_verify(cfg: &LabConfig) -> Result<SuiteReport, VerifyError> {
    let checks = cfg.checks();
    for &c in &checks {
        if !applicable(c, cfg.model) {
            return Err(ConfigError::NotApplicable { check: c, model: cfg.model.as_str() }.into());
        }
    }
    let built = build_model(cfg).map_err(ConfigError::from)?;
    let pool = Pool::new(cfg.parallelism)?;
    let out = output_dir(cfg);
    std::fs::create_dir_all(&out).map_err(|source| VerifyError::Io { path: out.clone(), source })?;
    let ctx = Ctx { cfg, built: &built, pool: &pool, out: &out, seed: cfg.seed };
    let reports: Vec<_> = checks.iter().map(|&c| run_check(c, &ctx)).collect();
    let passed = reports.iter().all(|r| r.status != Status::Fail);
    let report = SuiteReport {
        artifact_version: ARTIFACT_VERSION.to_string(),
        model_label: cfg.label(),
        seed: cfg.seed,
        config: cfg.clone(),
        checks: reports,
        passed,
    };
    write_report(&report, &out)?;
    Ok(report)
}

pub fn write_report(report: &SuiteReport, out: &Path) -> Result<(), VerifyError> {
    let path = out.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("reports serialize");
    std::fs::write(&path, json + "\n").map_err(|source| VerifyError::Io { path, source })
}
