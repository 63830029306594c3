//! Classification metrics over the positive class, reported as
//! percentages, and the per-system comparison report.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::corpus::LABEL_POS;
use crate::error::{Error, Result};

/// Accuracy, precision, recall, and F1 in percent, with the confusion
/// counts they came from. A metric whose denominator was zero is forced
/// to 0 and named in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub degenerate: Vec<String>,
}

impl Metrics {
    pub fn is_degenerate(&self, name: &str) -> bool {
        self.degenerate.iter().any(|d| d == name)
    }
}

/// Counts the confusion matrix with label 1 as the target class and
/// converts to percentages. Zero-denominator metrics become 0, flagged.
pub fn compute_metrics(predictions: &[usize], gold: &[usize]) -> Result<Metrics> {
    if predictions.len() != gold.len() {
        return Err(Error::Metrics(format!(
            "{} predictions against {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Metrics("no predictions to score".into()));
    }
    if let Some(&l) = predictions.iter().chain(gold).find(|&&l| l > 1) {
        return Err(Error::Metrics(format!("label {l} outside the binary range")));
    }

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    let mut tn = 0usize;
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p == LABEL_POS, g == LABEL_POS) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }

    let mut degenerate = Vec::new();
    let mut ratio = |num: usize, denom: usize, name: &str| -> f64 {
        if denom == 0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            100.0 * num as f64 / denom as f64
        }
    };
    let accuracy = ratio(tp + tn, predictions.len(), "accuracy");
    let precision = ratio(tp, tp + fp, "precision");
    let recall = ratio(tp, tp + fneg, "recall");
    let f1 = if precision + recall == 0.0 {
        degenerate.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        true_pos: tp,
        false_pos: fp,
        false_neg: fneg,
        true_neg: tn,
        degenerate,
    })
}

/// One comparison row: a system's metrics plus its wall-clock cost for
/// model generation and testing combined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemRow {
    pub system: String,
    pub metrics: Metrics,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<SystemRow>,
}

pub const REPORT_COLUMNS: [&str; 7] =
    ["System", "Accuracy", "Precision", "Recall", "F1-score", "Seconds", "Flags"];

impl MetricsReport {
    /// Aligned plain-text table, systems in insertion order.
    pub fn render_text(&self) -> String {
        let mut cells: Vec<Vec<String>> = vec![REPORT_COLUMNS.iter().map(|c| c.to_string()).collect()];
        for row in &self.rows {
            cells.push(vec![
                row.system.clone(),
                format!("{:.2}", row.metrics.accuracy),
                format!("{:.2}", row.metrics.precision),
                format!("{:.2}", row.metrics.recall),
                format!("{:.2}", row.metrics.f1),
                format!("{:.2}", row.seconds),
                row.metrics.degenerate.join(","),
            ]);
        }
        let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
            .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:<w$}"))
                .collect();
            writeln!(out, "{}", line.join("  ").trim_end()).expect("string write");
        }
        out
    }

    /// Tab-separated dump with full-precision values; `parse_tsv` restores
    /// it field-for-field.
    pub fn to_tsv(&self) -> String {
        let mut out = REPORT_COLUMNS.join("\t");
        out.push('\n');
        for row in &self.rows {
            let m = &row.metrics;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.system,
                m.accuracy,
                m.precision,
                m.recall,
                m.f1,
                row.seconds,
                m.degenerate.join(",")
            )
            .expect("string write");
        }
        out
    }

    /// Restores the metric fields of a TSV dump. The confusion counts are
    /// not serialized, so they come back as zeros.
    pub fn parse_tsv(text: &str) -> Result<MetricsReport> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Metrics("empty report file".into()))?;
        if header != REPORT_COLUMNS.join("\t") {
            return Err(Error::Metrics(format!("unexpected report header `{header}`")));
        }
        let mut report = MetricsReport::default();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != REPORT_COLUMNS.len() {
                return Err(Error::Metrics(format!("report row {} is malformed", i + 2)));
            }
            let num = |at: usize| -> Result<f64> {
                fields[at]
                    .parse()
                    .map_err(|_| Error::Metrics(format!("row {}: unreadable `{}`", i + 2, fields[at])))
            };
            report.rows.push(SystemRow {
                system: fields[0].to_string(),
                metrics: Metrics {
                    accuracy: num(1)?,
                    precision: num(2)?,
                    recall: num(3)?,
                    f1: num(4)?,
                    true_pos: 0,
                    false_pos: 0,
                    false_neg: 0,
                    true_neg: 0,
                    degenerate: if fields[6].is_empty() {
                        Vec::new()
                    } else {
                        fields[6].split(',').map(str::to_string).collect()
                    },
                },
                seconds: num(5)?,
            });
        }
        Ok(report)
    }

    pub fn save(&self, text_path: &Path, tsv_path: &Path) -> Result<()> {
        std::fs::write(text_path, self.render_text()).map_err(|e| Error::io(text_path, e))?;
        std::fs::write(tsv_path, self.to_tsv()).map_err(|e| Error::io(tsv_path, e))
    }
}
