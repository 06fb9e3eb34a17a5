use serde::{Deserialize, Serialize};

use super::{Dataset, Standardizer};
use crate::data::{MstLabel, NUM_CLASSES};

/// Euclidean k-nearest-neighbours over standardized features. Scores are vote fractions;
/// equal distances are resolved toward the earlier training row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub standardizer: Standardizer,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<MstLabel>,
}

impl KnnModel {
    pub fn fit(k: usize, data: &Dataset) -> Self {
        let standardizer = Standardizer::fit(&data.x);
        Self {
            k,
            x: data.x.iter().map(|r| standardizer.apply(r)).collect(),
            y: data.y.clone(),
            standardizer,
        }
    }

    pub fn scores(&self, query: &[f64]) -> [f64; NUM_CLASSES] {
        let q = self.standardizer.apply(query);
        let mut dist: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, row)| (row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes = [0.0; NUM_CLASSES];
        for &(_, i) in &dist[..k] {
            votes[self.y[i].index()] += 1.0;
        }
        votes.map(|v| v / k as f64)
    }
}
