//! From-scratch classifiers over feature vectors: KNN, CART trees, random forests, a
//! one-vs-rest linear SVM and an MLP, plus losses, optimizers, search and persistence.

mod dataset;
mod gradient;
mod io;
mod knn;
pub mod loss;
mod mlp;
pub mod optim;
mod search;
mod svm;
mod tree;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::dataset::Dataset;
pub use self::io::{ingest_embeddings, load_model, save_model, MODEL_FILE_VERSION};
pub use self::knn::KnnModel;
pub use self::loss::{LossConfig, LossKind};
pub use self::mlp::{MlpModel, MlpParams};
pub use self::optim::{Optimizer, OptimizerKind, PlateauScheduler};
pub use self::search::{
    grid_search, kfold_cv, CvReport, FoldResult, GridResult, GridRow, MetricSummary, Objective,
};
pub use self::svm::{SvmModel, SvmParams};
pub use self::tree::{ForestModel, ForestParams, MaxFeatures, TreeModel, TreeParams};
use crate::data::{MstLabel, NUM_CLASSES};
use crate::descriptors::{FeatureLayout, FeatureVector};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("need at least {need} training samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("training labels contain a single class ({0})")]
    SingleClass(MstLabel),
    #[error("feature layout mismatch: model expects {expected}, got {got}")]
    LayoutMismatch { expected: String, got: String },
    #[error("row {row} has {got} features, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("{0} and labels differ in length")]
    LengthMismatch(&'static str),
    #[error("non-finite value in {0}")]
    NonFiniteInput(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch} (lr {lr}, last finite loss {last_loss})")]
    Diverged {
        epoch: usize,
        batch: usize,
        lr: f64,
        last_loss: f64,
    },
    #[error("invalid hyperparameters: {0}")]
    InvalidSpec(String),
    #[error("empty grid")]
    EmptyGrid,
    #[error("every spec in the grid failed to train: {0}")]
    AllFailed(String),
    #[error("cross-validation needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("unsupported model file version {0} (expected {MODEL_FILE_VERSION})")]
    UnsupportedVersion(i64),
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

pub const MIN_TRAINING_SAMPLES: usize = 10;

pub fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum Family {
    #[serde(rename = "KNN")]
    Knn { k: usize },
    #[serde(rename = "DT")]
    DecisionTree(TreeParams),
    #[serde(rename = "RF")]
    RandomForest(ForestParams),
    #[serde(rename = "SVM")]
    Svm(SvmParams),
    #[serde(rename = "MLP")]
    Mlp(MlpParams),
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Knn { .. } => "KNN",
            Family::DecisionTree(_) => "DT",
            Family::RandomForest(_) => "RF",
            Family::Svm(_) => "SVM",
            Family::Mlp(_) => "MLP",
        }
    }
}

impl ModelSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self { family, seed }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidSpec(m.to_string()));
        match &self.family {
            Family::Knn { k } if *k == 0 => bad("k must be at least 1"),
            Family::Knn { .. } => Ok(()),
            Family::DecisionTree(p) => p.validate(),
            Family::RandomForest(p) => p.validate(),
            Family::Svm(p) => p.validate(),
            Family::Mlp(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    Knn(KnnModel),
    Tree(TreeModel),
    Forest(ForestModel),
    Svm(SvmModel),
    Mlp(MlpModel),
}

impl Params {
    pub fn scores(&self, x: &[f64]) -> [f64; NUM_CLASSES] {
        match self {
            Params::Knn(m) => m.scores(x),
            Params::Tree(m) => m.scores(x),
            Params::Forest(m) => m.scores(x),
            Params::Svm(m) => m.scores(x),
            Params::Mlp(m) => m.scores(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub dataset: String,
    pub n_train: usize,
    /// Learning rate used at each epoch (gradient-trained families only).
    #[serde(default)]
    pub lr_history: Vec<f64>,
    /// Validation bAcc measured after each epoch.
    #[serde(default)]
    pub val_history: Vec<f64>,
    #[serde(default)]
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub classes: Vec<u8>,
    pub params: Params,
    pub layout_hash: String,
    pub layout: FeatureLayout,
    pub metadata: TrainingMetadata,
}

/// Anything that maps a feature vector of a known layout to ten class scores.
pub trait Classifier: Send + Sync {
    fn layout_hash(&self) -> &str;
    fn scores(&self, values: &[f64]) -> [f64; NUM_CLASSES];
}

impl Classifier for Model {
    fn layout_hash(&self) -> &str {
        &self.layout_hash
    }

    fn scores(&self, values: &[f64]) -> [f64; NUM_CLASSES] {
        self.params.scores(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: MstLabel,
    pub scores: [f64; NUM_CLASSES],
}

/// Index of the largest score as a label. Ties go to the lower class; NaN never wins.
pub fn argmax(scores: &[f64; NUM_CLASSES]) -> MstLabel {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if scores[i] > scores[best] || (scores[best].is_nan() && !scores[i].is_nan()) {
            best = i;
        }
    }
    MstLabel::from_index(best)
}

pub fn predict(model: &dyn Classifier, x: &FeatureVector) -> Result<Prediction, ClassifierError> {
    let got = x.layout.hash();
    if got != model.layout_hash() {
        return Err(ClassifierError::LayoutMismatch {
            expected: model.layout_hash().to_string(),
            got,
        });
    }
    Ok(predict_values(model, &x.values))
}

/// Prediction without the layout check, for callers that already validated a whole batch.
pub fn predict_values(model: &dyn Classifier, values: &[f64]) -> Prediction {
    let scores = model.scores(values);
    Prediction {
        label: argmax(&scores),
        scores,
    }
}

pub fn predict_dataset(model: &dyn Classifier, data: &Dataset) -> Result<Vec<MstLabel>, ClassifierError> {
    let got = data.layout.hash();
    if got != model.layout_hash() {
        return Err(ClassifierError::LayoutMismatch {
            expected: model.layout_hash().to_string(),
            got,
        });
    }
    Ok(data.x.iter().map(|x| predict_values(model, x).label).collect())
}

/// Per-feature affine standardization fitted on training data. Constant features pass
/// through centered but unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

pub fn train(spec: &ModelSpec, train_set: &Dataset, val: Option<&Dataset>) -> Result<Model, ClassifierError> {
    spec.validate()?;
    train_set.check_trainable()?;
    if let Some(v) = val {
        if v.layout.hash() != train_set.layout.hash() {
            return Err(ClassifierError::LayoutMismatch {
                expected: train_set.layout.hash(),
                got: v.layout.hash(),
            });
        }
        v.check_finite()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut metadata = TrainingMetadata {
        dataset: train_set.name.clone(),
        n_train: train_set.len(),
        ..Default::default()
    };
    let params = match &spec.family {
        Family::Knn { k } => Params::Knn(KnnModel::fit(*k, train_set)),
        Family::DecisionTree(p) => Params::Tree(TreeModel::fit(p, train_set, &mut rng)),
        Family::RandomForest(p) => Params::Forest(ForestModel::fit(p, train_set, &mut rng)),
        Family::Svm(p) => Params::Svm(SvmModel::fit(p, train_set, val, &mut rng, &mut metadata)?),
        Family::Mlp(p) => Params::Mlp(MlpModel::fit(p, train_set, val, &mut rng, &mut metadata)?),
    };
    Ok(Model {
        spec: spec.clone(),
        classes: (1..=NUM_CLASSES as u8).collect(),
        params,
        layout_hash: train_set.layout.hash(),
        layout: (*train_set.layout).clone(),
        metadata,
    })
}

/// Convenience wrapper taking parallel vectors.
pub fn train_vectors(
    spec: &ModelSpec,
    x: &[FeatureVector],
    y: &[MstLabel],
    val: Option<(&[FeatureVector], &[MstLabel])>,
) -> Result<Model, ClassifierError> {
    let train_set = Dataset::from_vectors(x, y)?;
    let val_set = val.map(|(vx, vy)| Dataset::from_vectors(vx, vy)).transpose()?;
    train(spec, &train_set, val_set.as_ref())
}

fn layout_of(vectors: &[FeatureVector]) -> Result<Arc<FeatureLayout>, ClassifierError> {
    let first = vectors
        .first()
        .ok_or(ClassifierError::TooFewSamples { need: 1, got: 0 })?;
    let hash = first.layout.hash();
    for v in vectors {
        if v.layout.hash() != hash {
            return Err(ClassifierError::LayoutMismatch {
                expected: hash,
                got: v.layout.hash(),
            });
        }
    }
    Ok(first.layout.clone())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Gaussian blobs in `dims` dimensions, one per listed class, centered `spread` apart.
    pub fn blobs(classes: &[u8], per_class: usize, dims: usize, spread: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let centers: Vec<Vec<f64>> = classes
            .iter()
            .map(|_| (0..dims).map(|_| rng.random_range(-spread..spread)).collect())
            .collect();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, center) in classes.iter().zip(&centers) {
            for _ in 0..per_class {
                x.push(center.iter().map(|m| m + noise.sample(&mut rng)).collect());
                y.push(MstLabel::new(*c as i64).unwrap());
            }
        }
        Dataset::new("blobs", Arc::new(FeatureLayout::embedding(dims)), x, y).unwrap()
    }

    pub fn accuracy(model: &Model, data: &Dataset) -> f64 {
        let pred = predict_dataset(model, data).unwrap();
        pred.iter().zip(&data.y).filter(|(a, b)| a == b).count() as f64 / data.len() as f64
    }
}
