//! Cross-entropy losses, plain and ordinal.
//!
//! The ordinal variants scale cross-entropy by `1 + (ŷ − y)² / C`, where `ŷ` is the argmax of
//! the current logits and `C = 10`. The multiplier is treated as a constant during
//! differentiation.

use serde::{Deserialize, Serialize};

use super::{argmax, ClassifierError};
use crate::data::{MstLabel, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LossKind {
    #[default]
    Ce,
    WeightedCe,
    OrdinalCe,
    WeightedOrdinalCe,
}

impl LossKind {
    pub fn is_weighted(self) -> bool {
        matches!(self, LossKind::WeightedCe | LossKind::WeightedOrdinalCe)
    }

    pub fn is_ordinal(self) -> bool {
        matches!(self, LossKind::OrdinalCe | LossKind::WeightedOrdinalCe)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Per-class weights for the weighted kinds; all ones when absent.
    pub class_weights: Option<[f64; NUM_CLASSES]>,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            class_weights: None,
        }
    }

    fn weight(&self, target: MstLabel) -> f64 {
        match (self.kind.is_weighted(), self.class_weights) {
            (true, Some(w)) => w[target.index()],
            _ => 1.0,
        }
    }
}

/// `1 + (predicted − target)² / 10`.
pub fn ordinal_multiplier(predicted: MstLabel, target: MstLabel) -> f64 {
    let d = predicted.distance(target) as f64;
    1.0 + d * d / NUM_CLASSES as f64
}

pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.map(|z| (z - max).exp());
    let sum: f64 = exp.iter().sum();
    exp.map(|e| e / sum)
}

/// Loss value and its gradient with respect to the logits.
pub fn loss(
    logits: &[f64; NUM_CLASSES],
    target: MstLabel,
    cfg: &LossConfig,
) -> Result<(f64, [f64; NUM_CLASSES]), ClassifierError> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(ClassifierError::NonFiniteInput("logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    let ce = log_sum - logits[target.index()];
    let multiplier = if cfg.kind.is_ordinal() {
        ordinal_multiplier(argmax(logits), target)
    } else {
        1.0
    };
    let scale = multiplier * cfg.weight(target);
    let mut grad = softmax(logits);
    grad[target.index()] -= 1.0;
    Ok((scale * ce, grad.map(|g| scale * g)))
}

/// Inverse class frequency, normalized so the classes present average to 1. Absent classes
/// get weight 1.
pub fn inverse_frequency_weights(labels: &[MstLabel]) -> [f64; NUM_CLASSES] {
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let raw: Vec<(usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .map(|(i, c)| (i, 1.0 / *c as f64))
        .collect();
    let mean = raw.iter().map(|(_, w)| w).sum::<f64>() / raw.len().max(1) as f64;
    let mut weights = [1.0; NUM_CLASSES];
    for (i, w) in raw {
        weights[i] = w / mean;
    }
    weights
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(v: i64) -> MstLabel {
        MstLabel::new(v).unwrap()
    }

    #[test]
    fn multiplier_values() {
        assert_eq!(ordinal_multiplier(label(4), label(4)), 1.0);
        assert!((ordinal_multiplier(label(2), label(5)) - 1.9).abs() < 1e-15);
        assert!((ordinal_multiplier(label(1), label(10)) - 9.1).abs() < 1e-15);
        let mut last = 0.0;
        for d in 0..10 {
            let m = ordinal_multiplier(label(1), label(1 + d));
            assert!(m >= last);
            last = m;
        }
    }

    #[test]
    fn ordinal_equals_ce_when_correct() {
        let mut logits = [0.0; 10];
        logits[3] = 2.5;
        logits[7] = 1.0;
        let ce = loss(&logits, label(4), &LossConfig::new(LossKind::Ce)).unwrap();
        let ord = loss(&logits, label(4), &LossConfig::new(LossKind::OrdinalCe)).unwrap();
        assert_eq!(ce, ord);
    }

    #[test]
    fn ordinal_scales_by_distance() {
        let mut logits = [0.0; 10];
        logits[1] = 3.0;
        let ce = loss(&logits, label(5), &LossConfig::new(LossKind::Ce)).unwrap().0;
        let ord = loss(&logits, label(5), &LossConfig::new(LossKind::OrdinalCe)).unwrap().0;
        assert!((ord - 1.9 * ce).abs() < 1e-12);
    }

    #[test]
    fn weighted_scales_by_target_weight() {
        let logits = [0.3, -0.1, 0.0, 0.9, 0.1, 0.2, -0.5, 0.4, 0.0, 0.1];
        let mut weights = [1.0; 10];
        weights[6] = 2.5;
        let cfg = LossConfig { kind: LossKind::WeightedCe, class_weights: Some(weights) };
        let base = loss(&logits, label(7), &LossConfig::new(LossKind::Ce)).unwrap();
        let weighted = loss(&logits, label(7), &cfg).unwrap();
        assert!((weighted.0 - 2.5 * base.0).abs() < 1e-12);
        // Weights are ignored by the unweighted kinds.
        let plain = LossConfig { kind: LossKind::Ce, class_weights: Some(weights) };
        assert_eq!(loss(&logits, label(7), &plain).unwrap(), base);
    }

    #[test]
    fn non_finite_logits_rejected() {
        let mut logits = [0.0; 10];
        logits[2] = f64::NAN;
        assert!(loss(&logits, label(1), &LossConfig::default()).is_err());
    }

    #[test]
    fn inverse_frequency() {
        let labels: Vec<MstLabel> = [1, 1, 1, 2].iter().map(|&v| label(v)).collect();
        let w = inverse_frequency_weights(&labels);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 1.5).abs() < 1e-12);
        assert_eq!(w[5], 1.0);
    }

    #[test]
    fn softmax_is_stable() {
        let mut logits = [0.0; 10];
        logits[0] = 1000.0;
        let p = softmax(&logits);
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }
}
