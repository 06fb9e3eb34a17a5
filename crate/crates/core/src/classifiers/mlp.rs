use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gradient::{self, EpochPlan, GradientModel};
use super::loss::{self, inverse_frequency_weights, LossConfig, LossKind};
use super::optim::OptimizerKind;
use super::{ClassifierError, Dataset, Standardizer, TrainingMetadata};
use crate::data::{MstLabel, NUM_CLASSES};

fn default_hidden() -> Vec<usize> {
    vec![256, 128]
}
fn default_lr() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    50
}
fn default_patience() -> usize {
    5
}
fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub loss: LossKind,
    /// Explicit class weights for the weighted losses; inverse frequency when absent.
    #[serde(default)]
    pub class_weights: Option<[f64; NUM_CLASSES]>,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            lr: default_lr(),
            loss: LossKind::Ce,
            class_weights: None,
            optimizer: OptimizerKind::default(),
            epochs: default_epochs(),
            patience: default_patience(),
            batch_size: default_batch(),
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.hidden.contains(&0) {
            return Err(ClassifierError::InvalidSpec("hidden layer sizes must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 {
            return Err(ClassifierError::InvalidSpec("lr and batch_size must be positive".into()));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(ClassifierError::InvalidSpec("class weights must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Fully connected ReLU network ending in ten logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Input width, hidden widths, then 10.
    pub sizes: Vec<usize>,
    /// Per layer: row-major `out × in` weights, then `out` biases.
    pub params: Vec<f64>,
    pub standardizer: Standardizer,
    pub loss: LossConfig,
}

struct Net<'a> {
    sizes: &'a [usize],
    loss: LossConfig,
}

impl Net<'_> {
    fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Pre-activations of each layer; the last one is the logits.
    fn forward(&self, params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(self.sizes.len() - 1);
        let mut offset = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[offset..offset + n_in * n_out];
            let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let z: Vec<f64> = {
                let input: &[f64] = if l == 0 { x } else { &layers[l - 1] };
                (0..n_out)
                    .map(|o| {
                        let row = &weights[o * n_in..(o + 1) * n_in];
                        let s: f64 = if l == 0 {
                            row.iter().zip(input).map(|(a, b)| a * b).sum()
                        } else {
                            row.iter().zip(input).map(|(a, b)| a * b.max(0.0)).sum()
                        };
                        s + biases[o]
                    })
                    .collect()
            };
            layers.push(z);
        }
        layers
    }

    fn logits(&self, params: &[f64], x: &[f64]) -> [f64; NUM_CLASSES] {
        let layers = self.forward(params, x);
        let last = layers.last().expect("network has an output layer");
        std::array::from_fn(|i| last[i])
    }
}

impl GradientModel for Net<'_> {
    fn batch(
        &self,
        params: &[f64],
        x: &[Vec<f64>],
        y: &[MstLabel],
        rows: &[usize],
        grads: &mut [f64],
    ) -> Result<f64, ClassifierError> {
        let inv = 1.0 / rows.len() as f64;
        let n_layers = self.sizes.len() - 1;
        let offsets: Vec<usize> = self
            .sizes
            .windows(2)
            .scan(0, |acc, w| {
                let at = *acc;
                *acc += w[0] * w[1] + w[1];
                Some(at)
            })
            .collect();
        let mut total = 0.0;
        for &i in rows {
            let z = self.forward(params, &x[i]);
            let logits: [f64; NUM_CLASSES] = std::array::from_fn(|k| z[n_layers - 1][k]);
            let (value, grad_logits) = loss::loss(&logits, y[i], &self.loss)?;
            total += value * inv;
            let mut delta: Vec<f64> = grad_logits.iter().map(|g| g * inv).collect();
            for l in (0..n_layers).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let w_at = offsets[l];
                let b_at = w_at + n_in * n_out;
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let g_row = &mut grads[w_at + o * n_in..w_at + (o + 1) * n_in];
                    if l == 0 {
                        for (g, a) in g_row.iter_mut().zip(&x[i]) {
                            *g += d * a;
                        }
                    } else {
                        for (g, a) in g_row.iter_mut().zip(&z[l - 1]) {
                            *g += d * a.max(0.0);
                        }
                    }
                    grads[b_at + o] += d;
                }
                if l > 0 {
                    let prev = &z[l - 1];
                    let mut next = vec![0.0; n_in];
                    for o in 0..n_out {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &params[w_at + o * n_in..w_at + (o + 1) * n_in];
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += d * w;
                        }
                    }
                    for (n, p) in next.iter_mut().zip(prev) {
                        if *p <= 0.0 {
                            *n = 0.0;
                        }
                    }
                    delta = next;
                }
            }
        }
        Ok(total)
    }

    fn scores(&self, params: &[f64], x: &[f64]) -> [f64; NUM_CLASSES] {
        self.logits(params, x)
    }
}

impl MlpModel {
    pub(crate) fn fit<R: Rng>(
        p: &MlpParams,
        data: &Dataset,
        val: Option<&Dataset>,
        rng: &mut R,
        metadata: &mut TrainingMetadata,
    ) -> Result<Self, ClassifierError> {
        let standardizer = Standardizer::fit(&data.x);
        let x: Vec<Vec<f64>> = data.x.iter().map(|r| standardizer.apply(r)).collect();
        let vx: Option<Vec<Vec<f64>>> = val.map(|v| v.x.iter().map(|r| standardizer.apply(r)).collect());
        let mut sizes = vec![data.dims()];
        sizes.extend(&p.hidden);
        sizes.push(NUM_CLASSES);
        let loss = LossConfig {
            kind: p.loss,
            class_weights: p.loss.is_weighted().then(|| p.class_weights.unwrap_or_else(|| inverse_frequency_weights(&data.y))),
        };
        let net = Net { sizes: &sizes, loss };
        let mut params = init_params(&sizes, rng);
        debug_assert_eq!(params.len(), net.n_params());
        let plan = EpochPlan {
            epochs: p.epochs,
            batch_size: p.batch_size,
            lr: p.lr,
            patience: p.patience,
            optimizer: p.optimizer,
        };
        let val_pair = vx.as_deref().zip(val.map(|v| v.y.as_slice()));
        gradient::fit(&net, &mut params, &x, &data.y, val_pair, &plan, rng, metadata)?;
        Ok(Self {
            sizes,
            params,
            standardizer,
            loss,
        })
    }

    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        let net = Net {
            sizes: &self.sizes,
            loss: self.loss,
        };
        net.logits(&self.params, &self.standardizer.apply(x))
    }
}

/// He-normal weights, zero biases.
fn init_params<R: Rng>(sizes: &[usize], rng: &mut R) -> Vec<f64> {
    let mut params = Vec::new();
    for w in sizes.windows(2) {
        let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
        params.extend((0..w[0] * w[1]).map(|_| normal.sample(rng)));
        params.extend(std::iter::repeat_n(0.0, w[1]));
    }
    params
}
