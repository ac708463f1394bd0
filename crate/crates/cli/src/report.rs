//! Experiment report types: JSON for the full per-example record, CSV for
//! grid summaries. Wall time lives outside the per-example records so
//! reruns compare bitwise.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalRecord {
    pub utterance: String,
    pub gold_intent: String,
    pub generated: String,
    pub resolved_intent: String,
    pub similarity: f32,
    pub margin: f32,
    pub correct: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfusionCell {
    pub gold: String,
    pub predicted: String,
    pub count: u32,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub accuracy: f64,
    pub n_correct: usize,
    pub n_total: usize,
    pub per_example: Vec<EvalRecord>,
    pub confusion: Vec<ConfusionCell>,
    pub wall_ms: u64,
}

impl ExperimentReport {
    /// Accuracy recomputed from records must equal the aggregate exactly.
    pub fn consistent(&self) -> bool {
        let correct = self.per_example.iter().filter(|r| r.correct).count();
        correct == self.n_correct
            && self.per_example.len() == self.n_total
            && self.accuracy == correct as f64 / self.n_total as f64
    }
}

pub fn confusion_from_records(records: &[EvalRecord]) -> Vec<ConfusionCell> {
    let mut counts: BTreeMap<(String, String), u32> = BTreeMap::new();
    for r in records {
        *counts
            .entry((r.gold_intent.clone(), r.resolved_intent.clone()))
            .or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|((gold, predicted), count)| ConfusionCell {
            gold,
            predicted,
            count,
        })
        .collect()
}

pub fn save_report(path: &Path, report: &ExperimentReport) -> Result<(), CliError> {
    fs::write(
        path,
        serde_json::to_string_pretty(report).expect("serializable"),
    )
    .map_err(CliError::from)
}

pub fn load_report(path: &Path) -> Result<ExperimentReport, CliError> {
    let raw = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| CliError::validation(e.to_string()))
}

/// One grid condition (a holdout x k x seed cell, or a per-intent-k cell).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRow {
    pub condition: String,
    pub k: usize,
    pub seed: u64,
    pub train_size: usize,
    pub accuracy: f64,
}

pub fn save_grid_csv(path: &Path, rows: &[GridRow]) -> Result<(), CliError> {
    let mut buf = String::from("condition,k,seed,train_size,accuracy\n");
    for r in rows {
        buf.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            r.condition, r.k, r.seed, r.train_size, r.accuracy
        ));
    }
    fs::write(path, buf).map_err(CliError::from)
}
