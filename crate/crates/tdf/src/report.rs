//! Run manifests, per-run metrics documents and the cross-mode comparison
//! table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tdf_core::metrics::Comparison;
use tdf_core::pipeline::{IterationTally, ItemOutcome};
use tdf_core::{EvalRecord, FilterConfig, FilterMode, FilterReport, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestInputs {
    pub config: Option<String>,
    pub test: String,
    pub kb: Option<String>,
    pub tree: Option<String>,
    pub distractors: Option<String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatorEcho {
    /// `null` when the in-process mocks answered.
    pub endpoint: Option<String>,
    pub embedder: String,
    pub conf_accuracy: Option<f64>,
    pub nli_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub input: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub deferred_final: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub id: String,
    pub verdict: Verdict,
    pub iteration: usize,
    pub y1: Option<u8>,
    pub c1: Option<f64>,
    pub y2: Option<i8>,
    pub c2: Option<f64>,
    pub matched_id: Option<String>,
    pub similarity: Option<f64>,
}

impl From<&ItemOutcome> for OutcomeRow {
    fn from(o: &ItemOutcome) -> Self {
        Self {
            id: o.id.clone(),
            verdict: o.verdict,
            iteration: o.iteration,
            y1: o.eval.map(|e| e.y1),
            c1: o.eval.map(|e| e.c1),
            y2: o.eval.map(|e| e.y2),
            c2: o.eval.map(|e| e.c2),
            matched_id: o.matched_id.clone(),
            similarity: o.similarity,
        }
    }
}

impl OutcomeRow {
    fn to_outcome(&self) -> Result<ItemOutcome> {
        let eval = match (self.y1, self.c1, self.y2, self.c2) {
            (Some(y1), Some(c1), Some(y2), Some(c2)) => Some(EvalRecord::new(y1, c1, y2, c2)?),
            (None, None, None, None) => None,
            _ => anyhow::bail!("outcome {:?} has a partial feature record", self.id),
        };
        Ok(ItemOutcome {
            id: self.id.clone(),
            verdict: self.verdict,
            iteration: self.iteration,
            eval,
            matched_id: self.matched_id.clone(),
            similarity: self.similarity,
            path: None,
        })
    }
}

/// Everything needed to audit or re-score one filtering run. Field order is
/// fixed so two runs diff cleanly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: FilterMode,
    pub inputs: ManifestInputs,
    pub config: FilterConfig,
    pub evaluator: EvaluatorEcho,
    pub totals: Totals,
    pub kb_size_by_iteration: Vec<usize>,
    pub iterations: Vec<IterationTally>,
    pub outcomes: Vec<OutcomeRow>,
}

impl Manifest {
    pub fn new(report: &FilterReport, inputs: ManifestInputs, evaluator: EvaluatorEcho) -> Self {
        let (accepted, rejected, deferred_final) = report.totals();
        Self {
            mode: report.config.mode,
            inputs,
            config: report.config.clone(),
            evaluator,
            totals: Totals { input: report.outcomes.len(), accepted, rejected, deferred_final },
            kb_size_by_iteration: report.kb_size_by_iteration.clone(),
            iterations: report.iterations.clone(),
            outcomes: report.outcomes.iter().map(OutcomeRow::from).collect(),
        }
    }

    /// The report this manifest records, without decision paths.
    pub fn to_report(&self) -> Result<FilterReport> {
        Ok(FilterReport {
            config: self.config.clone(),
            iterations: self.iterations.clone(),
            outcomes: self.outcomes.iter().map(OutcomeRow::to_outcome).collect::<Result<_>>()?,
            kb_size_by_iteration: self.kb_size_by_iteration.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
    }
}

fn signed(v: f64) -> String {
    format!("{v:+.4}")
}

/// Fixed-width text rendering of a comparison.
pub fn comparison_table(comparison: &Comparison) -> String {
    let header = ["mode", "accuracy", "precision", "recall", "f1", "scored", "deferred", "d_accuracy", "d_f1"];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for row in &comparison.rows {
        let m = &row.metrics;
        let flag = |v: f64, degenerate: bool| if degenerate { format!("{v:.4}*") } else { format!("{v:.4}") };
        rows.push(vec![
            row.mode.to_string(),
            format!("{:.4}", m.accuracy),
            flag(m.precision, m.degenerate.precision),
            flag(m.recall, m.degenerate.recall),
            flag(m.f1, m.degenerate.f1),
            row.matrix.total().to_string(),
            row.deferred.to_string(),
            row.delta_vs_basic.map_or("-".into(), |d| signed(d.accuracy)),
            row.delta_vs_basic.map_or("-".into(), |d| signed(d.f1)),
        ]);
    }
    let widths: Vec<usize> = (0..header.len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| if c == 0 { format!("{cell:<w$}", w = widths[c]) } else { format!("{cell:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    if comparison.rows.iter().any(|r| r.metrics.degenerate.any()) {
        out.push_str("* zero denominator, reported as 0\n");
    }
    out
}
