//! Run summaries from a journal: best-so-far curve, per-trial table and
//! headline numbers.

use std::path::Path;

use modecal_core::hyperband::TrialStatus;
use serde::{Deserialize, Serialize};

use crate::journal::{read_journal, JournalContents, JournalError, ResultRecord};

pub const CURVE_FILE: &str = "curve.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// run-clock minutes
    pub time: f64,
    pub trial: u64,
    pub best_l1: f64,
}

/// Headline numbers. L1 figures cover completed trials at the largest
/// budget in the run; `full_budget_trials` counts every finished trial at
/// that budget, pruned ones included.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub high_l1: f64,
    pub low_l1: f64,
    pub elapsed_minutes: f64,
    pub full_budget: u64,
    pub full_budget_trials: usize,
    pub trials: usize,
    pub completed: usize,
    pub pruned: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub curve: Vec<CurvePoint>,
    pub summary: Summary,
}

pub fn build_report(journal: &JournalContents) -> Report {
    let results = &journal.results;
    let full_budget = results.iter().map(|r| r.budget).max().unwrap_or(0);
    let mut curve = Vec::new();
    let mut best = f64::INFINITY;
    let mut ordered: Vec<&ResultRecord> = results.iter().collect();
    ordered.sort_by(|a, b| a.t_finish.total_cmp(&b.t_finish));
    for r in ordered {
        if r.budget != full_budget || r.status != TrialStatus::Completed {
            continue;
        }
        if let Some(loss) = r.loss {
            best = best.min(loss);
            curve.push(CurvePoint {
                time: r.t_finish,
                trial: r.trial,
                best_l1: best,
            });
        }
    }
    let losses: Vec<f64> = results
        .iter()
        .filter(|r| r.budget == full_budget && r.status == TrialStatus::Completed)
        .filter_map(|r| r.loss)
        .collect();
    let count = |s| results.iter().filter(|r| r.status == s).count();
    let summary = Summary {
        high_l1: losses.iter().copied().fold(0.0, f64::max),
        low_l1: losses.iter().copied().min_by(f64::total_cmp).unwrap_or(0.0),
        elapsed_minutes: results.iter().map(|r| r.t_finish).fold(0.0, f64::max),
        full_budget,
        full_budget_trials: results.iter().filter(|r| r.budget == full_budget).count(),
        trials: results.len(),
        completed: count(TrialStatus::Completed),
        pruned: count(TrialStatus::Pruned),
        failed: count(TrialStatus::Failed),
    };
    Report { curve, summary }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("writing report: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing report: {0}")]
    Json(#[from] serde_json::Error),
}

/// Reads the journal in `dir` and writes the curve, trial table and
/// summary next to it.
pub fn write_report(dir: &Path) -> Result<Report, ReportError> {
    let journal = read_journal(dir)?;
    let report = build_report(&journal);

    let mut w = csv::Writer::from_path(dir.join(CURVE_FILE))?;
    w.write_record(["t_finish", "trial", "best_l1"])?;
    for p in &report.curve {
        w.write_record([p.time.to_string(), p.trial.to_string(), p.best_l1.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(TRIALS_FILE))?;
    w.write_record([
        "trial", "config", "budget", "status", "loss", "iterations_run", "t_submit", "t_start", "t_finish", "worker",
    ])?;
    for r in &journal.results {
        let status = serde_json::to_value(r.status)?;
        w.write_record([
            r.trial.to_string(),
            r.config.0.to_string(),
            r.budget.to_string(),
            status.as_str().unwrap_or_default().to_string(),
            r.loss.map(|l| l.to_string()).unwrap_or_default(),
            r.iterations_run.to_string(),
            r.t_submit.to_string(),
            r.t_start.to_string(),
            r.t_finish.to_string(),
            r.worker.clone(),
        ])?;
    }
    w.flush()?;

    std::fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&report.summary)?)?;
    Ok(report)
}
