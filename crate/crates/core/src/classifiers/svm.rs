use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gradient::{self, EpochPlan, GradientModel};
use super::loss::inverse_frequency_weights;
use super::optim::OptimizerKind;
use super::{ClassifierError, Dataset, Standardizer, TrainingMetadata};
use crate::data::{MstLabel, NUM_CLASSES};

fn default_c() -> f64 {
    1.0
}
fn default_epochs() -> usize {
    50
}
fn default_svm_lr() -> f64 {
    0.01
}
fn default_patience() -> usize {
    5
}
fn default_batch() -> usize {
    32
}
fn default_sgd() -> OptimizerKind {
    OptimizerKind::sgd()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_svm_lr")]
    pub lr: f64,
    #[serde(default = "default_sgd")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Scale each sample's hinge loss by the inverse frequency of its class.
    #[serde(default)]
    pub class_weighted: bool,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: default_c(),
            epochs: default_epochs(),
            lr: default_svm_lr(),
            optimizer: default_sgd(),
            patience: default_patience(),
            batch_size: default_batch(),
            class_weighted: false,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ClassifierError::InvalidSpec("C must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 {
            return Err(ClassifierError::InvalidSpec("lr and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One-vs-rest linear SVM: class `c` scores `w_c · x + b_c` on standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub dims: usize,
    /// Row-major `10 × dims` weights followed by 10 biases.
    pub params: Vec<f64>,
    pub standardizer: Standardizer,
}

struct Hinge {
    dims: usize,
    lambda: f64,
    weights: [f64; NUM_CLASSES],
}

impl GradientModel for Hinge {
    fn batch(
        &self,
        params: &[f64],
        x: &[Vec<f64>],
        y: &[MstLabel],
        rows: &[usize],
        grads: &mut [f64],
    ) -> Result<f64, ClassifierError> {
        let d = self.dims;
        let inv = 1.0 / rows.len() as f64;
        let mut loss = 0.0;
        for &i in rows {
            let scores = self.scores(params, &x[i]);
            let w = self.weights[y[i].index()];
            for (c, score) in scores.iter().enumerate() {
                let sign = if c == y[i].index() { 1.0 } else { -1.0 };
                let margin = sign * score;
                if margin < 1.0 {
                    loss += w * (1.0 - margin) * inv;
                    let g = -w * sign * inv;
                    for (gw, xv) in grads[c * d..(c + 1) * d].iter_mut().zip(&x[i]) {
                        *gw += g * xv;
                    }
                    grads[NUM_CLASSES * d + c] += g;
                }
            }
        }
        let weights = &params[..NUM_CLASSES * d];
        loss += 0.5 * self.lambda * weights.iter().map(|v| v * v).sum::<f64>();
        for (g, w) in grads[..NUM_CLASSES * d].iter_mut().zip(weights) {
            *g += self.lambda * w;
        }
        Ok(loss)
    }

    fn scores(&self, params: &[f64], x: &[f64]) -> [f64; NUM_CLASSES] {
        linear_scores(self.dims, params, x)
    }
}

fn linear_scores(d: usize, params: &[f64], x: &[f64]) -> [f64; NUM_CLASSES] {
    std::array::from_fn(|c| {
        let w = &params[c * d..(c + 1) * d];
        w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + params[NUM_CLASSES * d + c]
    })
}

impl SvmModel {
    pub(crate) fn fit<R: Rng>(
        p: &SvmParams,
        data: &Dataset,
        val: Option<&Dataset>,
        rng: &mut R,
        metadata: &mut TrainingMetadata,
    ) -> Result<Self, ClassifierError> {
        let standardizer = Standardizer::fit(&data.x);
        let x: Vec<Vec<f64>> = data.x.iter().map(|r| standardizer.apply(r)).collect();
        let vx: Option<Vec<Vec<f64>>> = val.map(|v| v.x.iter().map(|r| standardizer.apply(r)).collect());
        let dims = data.dims();
        let hinge = Hinge {
            dims,
            lambda: 1.0 / (p.c * data.len() as f64),
            weights: if p.class_weighted {
                inverse_frequency_weights(&data.y)
            } else {
                [1.0; NUM_CLASSES]
            },
        };
        let mut params = vec![0.0; (dims + 1) * NUM_CLASSES];
        let plan = EpochPlan {
            epochs: p.epochs,
            batch_size: p.batch_size,
            lr: p.lr,
            patience: p.patience,
            optimizer: p.optimizer,
        };
        let val_pair = vx.as_deref().zip(val.map(|v| v.y.as_slice()));
        gradient::fit(&hinge, &mut params, &x, &data.y, val_pair, &plan, rng, metadata)?;
        Ok(Self {
            dims,
            params,
            standardizer,
        })
    }

    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        linear_scores(self.dims, &self.params, &self.standardizer.apply(x))
    }
}
