//! Skin tone classification and dataset auditing on the 10-tone Monk Skin Tone scale.
//!
//! The crate is organized the way the workflow runs:
//!
//! * [`data`] loads image manifests, label files and decoded images.
//! * [`segmentation`] turns an image (plus an optional sidecar mask) into the pixel
//!   region a descriptor is computed over.
//! * [`descriptors`] computes the color descriptor bank (channel histograms, GCH, BIC,
//!   CCV, moments) and assembles re-binned feature vectors.
//! * [`classifiers`] trains KNN, decision trees, random forests, linear SVMs and MLPs
//!   with plain or ordinal cross-entropy losses.
//! * [`splits`] builds image- and individual-level partitions while tracking identity
//!   leakage.
//! * [`metrics`] scores predictions (Acc, bAcc, OOAcc, wOOAcc) and measures
//!   inter-annotator agreement.
//! * [`augmentation`] is a seeded image augmentation pipeline.
//! * [`audit`] runs a trained model across an external dataset and reports the tone
//!   distribution.
//! * [`pipeline`] and [`experiment`] glue the above into the extract → split → tune →
//!   cross-validate → evaluate loop.

pub mod audit;
pub mod augmentation;
pub mod classifiers;
pub mod data;
pub mod descriptors;
pub mod experiment;
pub mod metrics;
pub mod pipeline;
pub mod segmentation;
pub mod splits;

/// Crate version, written into reproducibility records.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use data::{DatasetManifest, Image, ImageRecord, Individual, LabelRecord, MstLabel, NUM_CLASSES};
pub use descriptors::{FeatureLayout, FeatureVector};
pub use metrics::{ConfusionMatrix, EvaluationReport, RatingsMatrix};
pub use segmentation::{Mask, RegionKind};
