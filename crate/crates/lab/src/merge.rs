//! Merging several suite reports into one comparison table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::checks::RigidityCsvRow;
use crate::report::SuiteReport;

#[derive(Debug, thiserror::Error)]
pub enum MergeError {
    #[error("no reports to merge")]
    Empty,
    #[error("artifact version mismatch: {path} has {found}, expected {expected}")]
    VersionMismatch { path: PathBuf, found: String, expected: String },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid report {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MergedRow {
    pub model: String,
    pub check: String,
    pub status: String,
    pub verdict: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Merged {
    pub artifact_version: String,
    /// Labels in input order, suffixed `-2`, `-3`, … on repeats.
    pub models: Vec<String>,
    pub checks: Vec<MergedRow>,
    pub rigidity: Vec<RigidityCsvRow>,
}

/// Report files for the given paths; a directory stands for its report.json.
fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("report.json")
    } else {
        p.to_path_buf()
    }
}

pub fn unique_labels(labels: &[String]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let n = seen.entry(l.as_str()).or_insert(0);
            *n += 1;
            if *n == 1 {
                l.clone()
            } else {
                format!("{l}-{n}")
            }
        })
        .collect()
}

pub fn merge_reports(paths: &[PathBuf]) -> Result<Merged, MergeError> {
    if paths.is_empty() {
        return Err(MergeError::Empty);
    }
    let mut reports = Vec::new();
    for p in paths {
        let path = report_path(p);
        let s = std::fs::read_to_string(&path).map_err(|source| MergeError::Io { path: path.clone(), source })?;
        let r: SuiteReport = serde_json::from_str(&s).map_err(|source| MergeError::Parse { path: path.clone(), source })?;
        reports.push((path, r));
    }
    let expected = reports[0].1.artifact_version.clone();
    for (path, r) in &reports {
        if r.artifact_version != expected {
            return Err(MergeError::VersionMismatch {
                path: path.clone(),
                found: r.artifact_version.clone(),
                expected: expected.clone(),
            });
        }
    }
    let labels = unique_labels(&reports.iter().map(|(_, r)| r.model_label.clone()).collect::<Vec<_>>());
    let mut checks = Vec::new();
    let mut rigidity = Vec::new();
    for ((path, r), label) in reports.iter().zip(&labels) {
        for c in &r.checks {
            checks.push(MergedRow {
                model: label.clone(),
                check: c.name.clone(),
                status: serde_json::to_value(c.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                verdict: c.verdict.clone().unwrap_or_default(),
            });
            if c.files.iter().any(|f| f == "rigidity.csv") {
                let csv_path = path.parent().unwrap_or(Path::new(".")).join("rigidity.csv");
                let mut rd = csv::Reader::from_path(&csv_path)?;
                for row in rd.deserialize() {
                    let mut row: RigidityCsvRow = row?;
                    row.model = label.clone();
                    rigidity.push(row);
                }
            }
        }
    }
    rigidity.sort_by(|a, b| {
        (a.model.as_str(), a.period)
            .cmp(&(b.model.as_str(), b.period))
            .then(a.x.total_cmp(&b.x))
            .then(a.y.total_cmp(&b.y))
    });
    Ok(Merged { artifact_version: expected, models: labels, checks, rigidity })
}

/// Writes merged.json, merged_checks.csv and merged_rigidity.csv.
pub fn write_merged(m: &Merged, out: &Path) -> Result<(), MergeError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MergeError::Io { path, source }
    };
    std::fs::create_dir_all(out).map_err(io(out))?;
    let json = serde_json::to_string_pretty(m).expect("merged report serializes");
    let p = out.join("merged.json");
    std::fs::write(&p, json + "\n").map_err(io(&p))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(out.join("merged_checks.csv"))?;
    for row in &m.checks {
        w.serialize(row)?;
    }
    w.flush().map_err(io(out))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(out.join("merged_rigidity.csv"))?;
    for row in &m.rigidity {
        w.serialize(row)?;
    }
    w.flush().map_err(io(out))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_labels_are_suffixed() {
        let l: Vec<String> = ["g0", "g1", "g0", "g0"].iter().map(|s| s.to_string()).collect();
        assert_eq!(unique_labels(&l), ["g0", "g1", "g0-2", "g0-3"]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(merge_reports(&[]), Err(MergeError::Empty)));
    }
}
