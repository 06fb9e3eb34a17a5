//! Images, individuals, labels and manifests.

mod image;
mod labels;
mod manifest;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::image::{load_image, Image};
pub use self::labels::{load_label_file, merge_label_files, save_label_file, LabelRecord};
pub use self::manifest::{DatasetManifest, ImageRecord, Individual};

/// Number of tones on the Monk Skin Tone scale.
pub const NUM_CLASSES: usize = 10;

/// A Monk Skin Tone class, 1 (lightest) through 10 (darkest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct MstLabel(u8);

impl MstLabel {
    pub fn new(value: i64) -> Result<Self, InvalidLabel> {
        if (1..=NUM_CLASSES as i64).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(InvalidLabel(value))
        }
    }

    /// Label for a zero-based class index. Panics when `index >= 10`.
    pub fn from_index(index: usize) -> Self {
        assert!(index < NUM_CLASSES, "class index {index} out of range");
        Self(index as u8 + 1)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Zero-based class index.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// Ordinal distance between two tones.
    pub fn distance(self, other: MstLabel) -> u8 {
        self.0.abs_diff(other.0)
    }

    pub fn all() -> impl Iterator<Item = MstLabel> {
        (0..NUM_CLASSES).map(MstLabel::from_index)
    }
}

impl fmt::Display for MstLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<i64> for MstLabel {
    type Error = InvalidLabel;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        MstLabel::new(value)
    }
}

impl From<MstLabel> for u8 {
    fn from(label: MstLabel) -> u8 {
        label.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("MST label {0} outside 1..=10")]
pub struct InvalidLabel(pub i64);

#[derive(Debug, Error)]
pub enum DataError {
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
    #[error("duplicate image_id {0:?}")]
    DuplicateImage(String),
    #[error("individual {individual_id:?} has conflicting labels {first} and {second}")]
    ConflictingLabels {
        individual_id: String,
        first: MstLabel,
        second: MstLabel,
    },
    #[error("image {0:?} has an empty path")]
    EmptyPath(String),
    #[error("manifest integrity: {0}")]
    Integrity(String),
    #[error("duplicate rating by annotator {annotator_id:?} for individual {individual_id:?}")]
    DuplicateRating {
        individual_id: String,
        annotator_id: String,
    },
    #[error("no label files given")]
    NoLabelFiles,
    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}
