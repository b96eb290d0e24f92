//! File writers shared by the commands: suite reports as JSON and CSV,
//! plot-ready trajectory dumps, and bare matrix CSV artifacts. All output
//! is byte-deterministic for a fixed config.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use dropout_dynamics::{replica_trajectory, BoundReport, EnsembleConfig, LinearModel, Matrix};
use serde::{Deserialize, Serialize};

use crate::config::ReportFormat;

/// One suite's outcome: its evaluated inequalities plus free-form notes
/// about hypotheses that did not apply to the configured instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub rows: Vec<BoundReport>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn new(suite: &str, rows: Vec<BoundReport>, notes: Vec<String>) -> SuiteReport {
        let passed = rows.iter().all(|r| r.satisfied);
        SuiteReport {
            suite: suite.to_string(),
            rows,
            notes,
            passed,
        }
    }
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("cannot create directory '{}'", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write '{}'", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    write_text(path, &text)
}

/// Suite report files: `report_<suite>.json` and/or `.csv` per format.
pub fn write_suite_report(
    dir: &Path,
    report: &SuiteReport,
    format: ReportFormat,
) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format.wants_json() {
        let path = dir.join(format!("report_{}.json", report.suite));
        write_json(&path, report)?;
        written.push(path);
    }
    if format.wants_csv() {
        let path = dir.join(format!("report_{}.csv", report.suite));
        write_text(&path, &rows_to_csv(&report.suite, &report.rows))?;
        written.push(path);
    }
    Ok(written)
}

pub fn rows_to_csv(suite: &str, rows: &[BoundReport]) -> String {
    let mut out = String::from("suite,check,theoretical,observed,margin,status\n");
    out.push_str(&csv_body(suite, rows));
    out
}

/// The data rows of the bound table, without the header line.
pub fn csv_body(suite: &str, rows: &[BoundReport]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            suite,
            escape_csv(&row.name),
            row.theoretical,
            row.observed,
            row.margin,
            if row.satisfied { "pass" } else { "fail" }
        ));
    }
    out
}

fn escape_csv(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Bare matrix artifact: one row per line, comma-separated, no header.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> anyhow::Result<()> {
    write_text(path, &m.to_csv())
}

/// How many ensemble members the trajectory dump includes.
const TRAJECTORY_DUMP_REPLICAS: usize = 8;

/// Long-format trajectory dump for the first few replicas of an ensemble:
/// `replica,k,coord,value,rp_value` with one row per recorded coordinate.
/// The rows come from the exact ensemble members, so they reconcile with
/// the aggregated moments bit for bit.
pub fn trajectory_csv(model: &LinearModel, cfg: &EnsembleConfig) -> anyhow::Result<String> {
    let mut out = String::from("replica,k,coord,value,rp_value\n");
    let dumped = cfg.replicas.min(TRAJECTORY_DUMP_REPLICAS);
    for replica in 0..dumped {
        let (traj, _anchor) = replica_trajectory(model, cfg, replica)?;
        for (ci, &k) in traj.checkpoints.iter().enumerate() {
            let iterate = &traj.iterates[ci];
            let rp = &traj.rp_averages[ci];
            for coord in 0..iterate.len() {
                out.push_str(&format!(
                    "{replica},{k},{coord},{},{}\n",
                    iterate[coord], rp[coord]
                ));
            }
        }
    }
    Ok(out)
}
