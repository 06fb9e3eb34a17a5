use std::collections::BTreeSet;
use std::sync::Arc;

use super::{layout_of, ClassifierError, MIN_TRAINING_SAMPLES};
use crate::data::{MstLabel, NUM_CLASSES};
use crate::descriptors::{FeatureLayout, FeatureTable, FeatureVector};

/// Labeled rows of one feature layout, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub layout: Arc<FeatureLayout>,
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<MstLabel>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        layout: Arc<FeatureLayout>,
        x: Vec<Vec<f64>>,
        y: Vec<MstLabel>,
    ) -> Result<Self, ClassifierError> {
        let ids = (0..x.len()).map(|i| format!("row{i}")).collect();
        Self::with_ids(name, layout, ids, x, y)
    }

    pub fn with_ids(
        name: impl Into<String>,
        layout: Arc<FeatureLayout>,
        ids: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<MstLabel>,
    ) -> Result<Self, ClassifierError> {
        if x.len() != y.len() || ids.len() != y.len() {
            return Err(ClassifierError::LengthMismatch("features"));
        }
        for (row, values) in x.iter().enumerate() {
            if values.len() != layout.len() {
                return Err(ClassifierError::Ragged {
                    row,
                    expected: layout.len(),
                    got: values.len(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            layout,
            ids,
            x,
            y,
        })
    }

    pub fn from_vectors(x: &[FeatureVector], y: &[MstLabel]) -> Result<Self, ClassifierError> {
        if x.len() != y.len() {
            return Err(ClassifierError::LengthMismatch("features"));
        }
        let layout = layout_of(x)?;
        Self::new("vectors", layout, x.iter().map(|v| v.values.clone()).collect(), y.to_vec())
    }

    /// Labeled rows of `table`, optionally restricted to `ids`, in table order.
    pub fn from_table(table: &FeatureTable, ids: Option<&BTreeSet<String>>) -> Self {
        let mut out = Self {
            name: String::new(),
            layout: table.layout.clone(),
            ids: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        };
        for row in &table.rows {
            let Some(label) = row.label else { continue };
            if ids.is_some_and(|set| !set.contains(&row.image_id)) {
                continue;
            }
            out.ids.push(row.image_id.clone());
            out.x.push(row.values.clone());
            out.y.push(label);
        }
        out
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.layout.len()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for l in &self.y {
            counts[l.index()] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            layout: self.layout.clone(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub(crate) fn check_finite(&self) -> Result<(), ClassifierError> {
        for (i, row) in self.x.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ClassifierError::NonFiniteInput(format!("features of {}", self.ids[i])));
            }
        }
        Ok(())
    }

    pub(crate) fn check_trainable(&self) -> Result<(), ClassifierError> {
        if self.len() < MIN_TRAINING_SAMPLES {
            return Err(ClassifierError::TooFewSamples {
                need: MIN_TRAINING_SAMPLES,
                got: self.len(),
            });
        }
        let present: Vec<usize> = (0..NUM_CLASSES).filter(|&c| self.class_counts()[c] > 0).collect();
        if present.len() < 2 {
            return Err(ClassifierError::SingleClass(MstLabel::from_index(present[0])));
        }
        self.check_finite()
    }
}
