//! Color descriptor bank: six scalar-channel histograms, the global color histogram, color
//! coherence vectors and border/interior classification, plus per-channel moments.
//!
//! The three quantized-color descriptors (GCH, CCV, BIC) index the 64-color palette from
//! [`quantize_color`]; the scalar channels use 256 bins. [`feature_vector`] re-bins everything
//! to a common size and concatenates it in a fixed [`FeatureLayout`].

mod color;
mod features;
mod histogram;
mod spatial;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use self::color::{lab_lightness, quantize_color, scalar_channel, Channel, QUANTIZED_COLORS};
pub use self::features::{
    descriptor_histograms, feature_vector, DescriptorConfig, FeatureLayout, FeatureVector,
    LayoutBlock, BIN_CHOICES, MOMENTS_PER_CHANNEL,
};
pub use self::histogram::{
    channel_histogram, gch, moments, moments_from_histogram, rebin, Histogram, HistogramKind,
    Moments,
};
pub use self::spatial::{bic, ccv};
pub use self::table::{FeatureRow, FeatureTable};

use crate::segmentation::SegmentationError;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("region has no pixels")]
    EmptyRegion,
    #[error(transparent)]
    Segmentation(SegmentationError),
    #[error("cannot re-bin {native} bins into {target}")]
    NonDivisible { native: usize, target: usize },
    #[error("bin count {0} not one of 128, 64, 32, 16")]
    InvalidBins(usize),
    #[error("CCV threshold must be at least 1")]
    InvalidTau,
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate feature row {0:?}")]
    DuplicateRow(String),
}

impl From<SegmentationError> for DescriptorError {
    fn from(e: SegmentationError) -> Self {
        match e {
            SegmentationError::EmptyRegion => DescriptorError::EmptyRegion,
            other => DescriptorError::Segmentation(other),
        }
    }
}
