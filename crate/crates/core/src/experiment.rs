//! End-to-end experiments over a manifest, and a synthetic face-like dataset generator for
//! exercising them without real data.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::MST_PALETTE;
use crate::classifiers::{
    grid_search, kfold_cv, predict_dataset, train, ClassifierError, CvReport, Dataset, Family, ForestParams,
    GridResult, ModelSpec, Objective,
};
use crate::data::{DatasetManifest, Image, ImageRecord, MstLabel, NUM_CLASSES};
use crate::descriptors::{DescriptorError, FeatureTable};
use crate::metrics::{self, EvaluationReport, MetricsError};
use crate::pipeline::{extract_table, ExtractConfig, ImageSource, MemorySource, Skipped};
use crate::splits::{kfold_by_individual, split_by_individuals, Fractions, SplitError, SplitPlan};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Extraction(#[from] DescriptorError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("partition {0:?} is missing from the plan")]
    MissingPartition(String),
}

/// Parameters of the synthetic generator. Every individual gets a skin tone drawn around its
/// class color plus a private two-color "fingerprint" (background and clothing) that carries
/// identity but no class information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub individuals_per_class: usize,
    pub images_per_individual: usize,
    pub width: u32,
    pub height: u32,
    /// Per-channel std of an individual's skin offset from the class color.
    pub skin_spread: f64,
    /// Per-image brightness shift std.
    pub image_jitter: f64,
    /// Per-pixel noise std.
    pub pixel_noise: f64,
    /// Include the identity fingerprint regions.
    pub fingerprint: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            individuals_per_class: 20,
            images_per_individual: 3,
            width: 16,
            height: 16,
            skin_spread: 5.0,
            image_jitter: 3.0,
            pixel_noise: 6.0,
            fingerprint: true,
            seed: 0,
        }
    }
}

fn hex_rgb(hex: &str) -> [f64; 3] {
    let v = u32::from_str_radix(hex.trim_start_matches('#'), 16).expect("palette entries are hex");
    [(v >> 16) as f64, ((v >> 8) & 0xff) as f64, (v & 0xff) as f64]
}

/// Class colors evenly spaced between the lightest and darkest swatch.
pub fn synthetic_class_color(label: MstLabel) -> [f64; 3] {
    let light = hex_rgb(MST_PALETTE[0]);
    let dark = hex_rgb(MST_PALETTE[NUM_CLASSES - 1]);
    let t = label.index() as f64 / (NUM_CLASSES - 1) as f64;
    std::array::from_fn(|k| light[k] + t * (dark[k] - light[k]))
}

pub fn synthetic_dataset(cfg: &SyntheticConfig) -> (DatasetManifest, MemorySource) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut source = MemorySource::default();
    let mut records = Vec::new();
    for label in MstLabel::all() {
        let base = synthetic_class_color(label);
        for i in 0..cfg.individuals_per_class {
            let individual_id = format!("mst{:02}-p{i:03}", label.value());
            let skin: [f64; 3] = std::array::from_fn(|k| base[k] + cfg.skin_spread * unit.sample(&mut rng));
            let backdrop: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
            let clothing: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..255.0));
            for j in 0..cfg.images_per_individual {
                let image_id = format!("{individual_id}-{j}");
                let shift = cfg.image_jitter * unit.sample(&mut rng);
                let (w, h) = (cfg.width as f64, cfg.height as f64);
                let image = Image::from_fn(cfg.width, cfg.height, |x, y| {
                    let (fx, fy) = ((x as f64 + 0.5) / w - 0.5, (y as f64 + 0.5) / h - 0.45);
                    let face = fx * fx / 0.09 + fy * fy / 0.14 <= 1.0;
                    let color = if !cfg.fingerprint || face {
                        skin.map(|v| v + shift)
                    } else if y as f64 >= 0.8 * h {
                        clothing
                    } else {
                        backdrop
                    };
                    color.map(|v| (v + cfg.pixel_noise * unit.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)
                });
                source.images.insert(image_id.clone(), image);
                records.push(ImageRecord {
                    path: PathBuf::from(format!("{image_id}.png")),
                    image_id,
                    individual_id: individual_id.clone(),
                    source_dataset: "synthetic".into(),
                    label: Some(label),
                });
            }
        }
    }
    let manifest = DatasetManifest::from_records("synthetic", records).expect("generated records are consistent");
    (manifest, source)
}

/// Train on partition `train`, report on partition `test`.
pub fn train_and_evaluate(
    spec: &ModelSpec,
    table: &FeatureTable,
    plan: &SplitPlan,
    train_name: &str,
    test_name: &str,
) -> Result<EvaluationReport, ExperimentError> {
    let part = |name: &str| {
        plan.partition(name)
            .ok_or_else(|| ExperimentError::MissingPartition(name.to_string()))
    };
    let train_set = Dataset::from_table(table, Some(part(train_name)?)).named(train_name);
    let test = Dataset::from_table(table, Some(part(test_name)?));
    let model = train(spec, &train_set, None)?;
    Ok(metrics::evaluate(&test.y, &predict_dataset(&model, &test)?)?)
}

pub fn default_grid(seed: u64) -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for n_trees in [50, 100] {
        grid.push(ModelSpec::new(
            Family::RandomForest(ForestParams {
                n_trees,
                ..Default::default()
            }),
            seed,
        ));
    }
    for k in [1, 3, 5, 9] {
        grid.push(ModelSpec::new(Family::Knn { k }, seed));
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub extract: ExtractConfig,
    /// Outer split of individuals into train and test.
    pub fractions: Fractions,
    /// Share of training individuals held out for hyperparameter tuning.
    pub tuning_fraction: f64,
    pub folds: usize,
    pub grid: Vec<ModelSpec>,
    pub objective: Objective,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            extract: ExtractConfig::default(),
            fractions: Fractions {
                train: 0.8,
                val: 0.0,
                test: 0.2,
            },
            tuning_fraction: 0.2,
            folds: 5,
            grid: default_grid(0),
            objective: Objective::Bacc,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub layout_hash: String,
    pub n_images: usize,
    pub skipped: Vec<Skipped>,
    pub split: SplitPlan,
    pub grid: GridResult,
    pub cv: CvReport,
    pub test: EvaluationReport,
}

/// Extract, split by individual, tune on an inner holdout, cross-validate the winner and
/// score it on the untouched test individuals.
pub fn run_experiment(
    manifest: &DatasetManifest,
    source: &dyn ImageSource,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, ExperimentError> {
    let (table, skipped) = extract_table(manifest, source, &cfg.extract)?;
    let split = split_by_individuals(manifest, cfg.fractions, cfg.seed)?;
    let train_ids = split.partition("train").cloned().unwrap_or_default();
    let train_manifest = manifest.restrict(&train_ids);

    let inner = split_by_individuals(
        &train_manifest,
        Fractions::new(1.0 - cfg.tuning_fraction, cfg.tuning_fraction, 0.0)?,
        cfg.seed.wrapping_add(1),
    )?;
    let tune_train = Dataset::from_table(&table, inner.partition("train")).named("tune-train");
    let tune_val = Dataset::from_table(&table, inner.partition("val")).named("tune-val");
    let grid = grid_search(&cfg.grid, &tune_train, &tune_val, cfg.objective)?;

    let folds = kfold_by_individual(&train_manifest, cfg.folds, cfg.seed.wrapping_add(2))?;
    let cv = kfold_cv(&grid.best, &table, &folds)?;

    let test = train_and_evaluate(&grid.best, &table, &split, "train", "test")?;
    let labeled: BTreeSet<&String> = table.rows.iter().filter(|r| r.label.is_some()).map(|r| &r.image_id).collect();
    Ok(ExperimentReport {
        dataset: manifest.name.clone(),
        layout_hash: table.layout.hash(),
        n_images: labeled.len(),
        skipped,
        split,
        grid,
        cv,
        test,
    })
}
