//! Confusion-matrix metrics and cross-mode comparison tables.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::KnowledgeItem;
use crate::pipeline::{FilterMode, FilterReport, ItemOutcome, Verdict};

/// Prediction 1 means accepted; gold 1 means correct knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Matrix over scored items plus the number of deferred items left out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub matrix: ConfusionMatrix,
    pub deferred: usize,
}

pub fn confusion(outcomes: &[ItemOutcome], items: &[KnowledgeItem]) -> Result<Confusion> {
    let gold: BTreeMap<&str, Option<u8>> = items.iter().map(|i| (i.id(), i.gold_flag())).collect();
    let mut matrix = ConfusionMatrix::default();
    let mut deferred = 0;
    for outcome in outcomes {
        let flag = *gold
            .get(outcome.id.as_str())
            .ok_or_else(|| Error::Consistency(alloc::format!("outcome for unknown item {:?}", outcome.id)))?;
        if outcome.verdict == Verdict::DeferredFinal {
            deferred += 1;
            continue;
        }
        let flag = flag.ok_or_else(|| Error::Validation(alloc::format!("item {:?} has no gold flag", outcome.id)))?;
        match (outcome.verdict, flag) {
            (Verdict::Accepted, 1) => matrix.tp += 1,
            (Verdict::Accepted, _) => matrix.fp += 1,
            (_, 1) => matrix.fn_ += 1,
            _ => matrix.tn += 1,
        }
    }
    Ok(Confusion { matrix, deferred })
}

/// Which ratios had a zero denominator and were reported as 0.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Degenerate {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Size("confusion matrix is empty".into()));
    }
    let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let accuracy = (cm.tp + cm.tn) as f64 / total as f64;
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(Metrics {
        accuracy,
        precision: precision.unwrap_or(0.0),
        recall: recall.unwrap_or(0.0),
        f1: f1.unwrap_or(0.0),
        degenerate: Degenerate {
            precision: precision.is_none(),
            recall: recall.is_none(),
            f1: f1.is_none(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: FilterMode,
    pub matrix: ConfusionMatrix,
    pub metrics: Metrics,
    pub deferred: usize,
    /// Difference from the basic row, when one is present.
    pub delta_vs_basic: Option<MetricDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// One row per mode in the order basic, fake, self_nli.
pub fn compare_modes(reports: &[FilterReport], items: &[KnowledgeItem]) -> Result<Comparison> {
    let Some(first) = reports.first() else {
        return Err(Error::Size("nothing to compare".into()));
    };
    let id_set = |r: &FilterReport| r.outcomes.iter().map(|o| o.id.clone()).collect::<BTreeSet<String>>();
    let reference = id_set(first);
    let mut by_mode = BTreeMap::new();
    for report in reports {
        if id_set(report) != reference {
            return Err(Error::Consistency("reports cover different item sets".into()));
        }
        if by_mode.insert(report.config.mode, report).is_some() {
            return Err(Error::Consistency(alloc::format!("mode {} appears twice", report.config.mode)));
        }
    }
    let mut rows = Vec::new();
    for (mode, report) in by_mode {
        let c = confusion(&report.outcomes, items)?;
        rows.push(ComparisonRow {
            mode,
            matrix: c.matrix,
            metrics: metrics(&c.matrix)?,
            deferred: c.deferred,
            delta_vs_basic: None,
        });
    }
    if let Some(base) = rows.iter().find(|r| r.mode == FilterMode::Basic).map(|r| r.metrics) {
        for row in &mut rows {
            row.delta_vs_basic = Some(MetricDelta {
                accuracy: row.metrics.accuracy - base.accuracy,
                precision: row.metrics.precision - base.precision,
                recall: row.metrics.recall - base.recall,
                f1: row.metrics.f1 - base.f1,
            });
        }
    }
    Ok(Comparison { rows })
}
