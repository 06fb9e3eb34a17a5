//! Ordinal classification scores and inter-annotator agreement.

mod agreement;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::agreement::{
    exact_agreement, icc3, icc3_values, krippendorff_alpha, krippendorff_alpha_values,
    off_by_one_agreement, AlphaMetric, RatingsMatrix,
};
use crate::data::{MstLabel, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} true labels vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("need at least {need} {what}, got {got}")]
    TooFew {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("no subject was rated by two raters")]
    NoOverlap,
    #[error("{0} is undefined for these ratings")]
    Undefined(&'static str),
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: MstLabel, predicted: MstLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: MstLabel, predicted: MstLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|row| row.iter().sum())
    }

    /// Each row divided by its sum; rows without support stay zero.
    pub fn row_normalized(&self) -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
        self.counts.map(|row| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                [0.0; NUM_CLASSES]
            } else {
                row.map(|c| c as f64 / sum as f64)
            }
        })
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    /// CSV with a `true\pred` header row and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in 1..=NUM_CLASSES {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&(i + 1).to_string());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(truth: &[MstLabel], predicted: &[MstLabel]) -> Result<ConfusionMatrix, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (t, p) in truth.iter().zip(predicted) {
        cm.add(*t, *p);
    }
    Ok(cm)
}

/// How per-class off-by-one recall is averaged into wOOAcc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OoaccAveraging {
    /// Unweighted mean over classes with support.
    #[default]
    Macro,
    /// Weighted by class support; coincides with plain OOAcc.
    Support,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub confusion: ConfusionMatrix,
    pub total: u64,
    pub acc: f64,
    pub bacc: f64,
    pub ooacc: f64,
    pub wooacc: f64,
    pub ooacc_averaging: OoaccAveraging,
    pub support: [u64; NUM_CLASSES],
    /// `None` for classes that never occur as the true label.
    pub per_class_recall: [Option<f64>; NUM_CLASSES],
    pub per_class_ooacc: [Option<f64>; NUM_CLASSES],
}

pub fn scores(cm: &ConfusionMatrix) -> Result<EvaluationReport, MetricsError> {
    scores_with(cm, OoaccAveraging::Macro)
}

pub fn scores_with(cm: &ConfusionMatrix, averaging: OoaccAveraging) -> Result<EvaluationReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let support = cm.support();
    let mut exact = 0u64;
    let mut near = 0u64;
    let mut per_class_recall = [None; NUM_CLASSES];
    let mut per_class_ooacc = [None; NUM_CLASSES];
    for (i, row) in cm.counts.iter().enumerate() {
        let hits = row[i];
        let near_hits: u64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| i.abs_diff(*j) <= 1)
            .map(|(_, c)| c)
            .sum();
        exact += hits;
        near += near_hits;
        if support[i] > 0 {
            per_class_recall[i] = Some(hits as f64 / support[i] as f64);
            per_class_ooacc[i] = Some(near_hits as f64 / support[i] as f64);
        }
    }
    let macro_mean = |values: &[Option<f64>; NUM_CLASSES]| {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        present.iter().sum::<f64>() / present.len() as f64
    };
    let ooacc = near as f64 / total as f64;
    let wooacc = match averaging {
        OoaccAveraging::Macro => macro_mean(&per_class_ooacc),
        OoaccAveraging::Support => ooacc,
    };
    Ok(EvaluationReport {
        confusion: *cm,
        total,
        acc: exact as f64 / total as f64,
        bacc: macro_mean(&per_class_recall),
        ooacc,
        wooacc,
        ooacc_averaging: averaging,
        support,
        per_class_recall,
        per_class_ooacc,
    })
}

/// Confusion plus scores in one call.
pub fn evaluate(truth: &[MstLabel], predicted: &[MstLabel]) -> Result<EvaluationReport, MetricsError> {
    scores(&confusion(truth, predicted)?)
}
