//! Report files: report.json, report.csv, Markdown table, stages.csv,
//! scaling.csv and roc.csv.

use std::path::Path;

use hesvm_core::inference::{InferenceReport, Stage};
use hesvm_core::metrics::{MetricsReport, RocCurve};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMap {
    pub enc: f64,
    pub kernel: f64,
    pub thresh: f64,
    pub dec: f64,
}

impl From<[f64; 4]> for StageMap {
    fn from(v: [f64; 4]) -> Self {
        Self { enc: v[0], kernel: v[1], thresh: v[2], dec: v[3] }
    }
}

impl StageMap {
    pub fn to_array(self) -> [f64; 4] {
        [self.enc, self.kernel, self.thresh, self.dec]
    }
}

/// `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub theta: f64,
    pub stage_ms: StageMap,
    pub noise_bits: StageMap,
    pub encrypted: bool,
    pub total_ms: f64,
    /// Scores with the RBF polynomial substituted (plaintext runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approx_labels: Option<Vec<u8>>,
}

impl ReportJson {
    pub fn new(r: &InferenceReport, encrypted: bool) -> Self {
        Self {
            scores: r.scores.clone(),
            labels: r.labels.clone(),
            theta: r.threshold.theta,
            stage_ms: r.stage_ms.into(),
            noise_bits: r.noise_bits.into(),
            encrypted,
            total_ms: r.total_ms,
            approx_scores: None,
            approx_labels: None,
        }
    }
}

fn writer(path: &Path) -> AppResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| AppError::Other(format!("{}: {e}", path.display())))
}

fn done(mut w: csv::Writer<std::fs::File>, path: &Path) -> AppResult<()> {
    w.flush().map_err(AppError::io(path.display().to_string()))
}

pub fn write_stages(path: &Path, stage_ms: &[f64; 4], noise_bits: &[f64; 4]) -> AppResult<()> {
    let mut w = writer(path)?;
    w.write_record(["stage", "ms", "noise_bits"])?;
    for s in Stage::ALL {
        w.write_record([
            s.name().to_owned(),
            format!("{:.6}", stage_ms[s as usize]),
            format!("{:.3}", noise_bits[s as usize]),
        ])?;
    }
    done(w, path)
}

pub fn write_scaling(path: &Path, points: &[(usize, f64)]) -> AppResult<()> {
    let mut w = writer(path)?;
    w.write_record(["batch_size", "total_ms"])?;
    for (b, ms) in points {
        w.write_record([b.to_string(), format!("{ms:.6}")])?;
    }
    done(w, path)
}

pub fn write_roc(path: &Path, roc: &RocCurve) -> AppResult<()> {
    let mut w = writer(path)?;
    w.write_record(["fpr", "tpr"])?;
    for (f, t) in &roc.points {
        w.write_record([format!("{f:.6}"), format!("{t:.6}")])?;
    }
    done(w, path)
}

/// One line of the model comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRow {
    pub model: String,
    pub encrypted: bool,
    pub metrics: MetricsReport,
    /// Mean milliseconds per sample.
    pub time_ms: f64,
}

pub fn write_report_csv(path: &Path, rows: &[ModelRow]) -> AppResult<()> {
    let mut w = writer(path)?;
    w.write_record(["model", "encrypted", "accuracy", "precision", "recall", "f1", "time_ms", "undefined"])?;
    for r in rows {
        let m = &r.metrics;
        let undefined: Vec<&str> =
            [("precision", m.undefined.precision), ("recall", m.undefined.recall), ("f1", m.undefined.f1)]
                .into_iter()
                .filter(|&(_, u)| u)
                .map(|(n, _)| n)
                .collect();
        w.write_record([
            r.model.clone(),
            r.encrypted.to_string(),
            format!("{:.6}", m.accuracy),
            format!("{:.6}", m.precision),
            format!("{:.6}", m.recall),
            format!("{:.6}", m.f1),
            format!("{:.3}", r.time_ms),
            undefined.join(";"),
        ])?;
    }
    done(w, path)
}

pub fn markdown_table(rows: &[ModelRow]) -> String {
    let mut s =
        String::from("| Model | Encrypted | Acc | Pre | Rec | F1 | Time(ms) |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let m = &r.metrics;
        s.push_str(&format!(
            "| {} | {} | {:.2}% | {:.2}% | {:.2}% | {:.2}% | {:.3} |\n",
            r.model,
            if r.encrypted { "Yes" } else { "No" },
            100.0 * m.accuracy,
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1,
            r.time_ms
        ));
    }
    s
}
