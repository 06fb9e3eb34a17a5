use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::MstLabel;

/// Subjects × raters grid of optional labels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RatingsMatrix {
    subjects: Vec<String>,
    raters: Vec<String>,
    /// `cells[subject][rater]`.
    cells: Vec<Vec<Option<MstLabel>>>,
}

impl RatingsMatrix {
    /// Build from `(subject, rater, label)` triples. Subjects and raters are sorted; a later
    /// triple for the same pair overwrites an earlier one.
    pub fn from_cells(cells: impl IntoIterator<Item = (String, String, MstLabel)>) -> Self {
        let mut grid: BTreeMap<String, BTreeMap<String, MstLabel>> = BTreeMap::new();
        let mut raters = std::collections::BTreeSet::new();
        for (subject, rater, label) in cells {
            raters.insert(rater.clone());
            grid.entry(subject).or_default().insert(rater, label);
        }
        let raters: Vec<String> = raters.into_iter().collect();
        let (subjects, cells) = grid
            .into_iter()
            .map(|(subject, row)| {
                let row = raters.iter().map(|r| row.get(r).copied()).collect();
                (subject, row)
            })
            .unzip();
        Self {
            subjects,
            raters,
            cells,
        }
    }

    /// Build from dense rows; `None` marks a missing rating.
    pub fn from_rows(raters: Vec<String>, rows: Vec<(String, Vec<Option<MstLabel>>)>) -> Self {
        assert!(rows.iter().all(|(_, r)| r.len() == raters.len()));
        let (subjects, cells) = rows.into_iter().unzip();
        Self {
            subjects,
            raters,
            cells,
        }
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn rows(&self) -> &[Vec<Option<MstLabel>>] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    fn filter_rows(&self, keep: impl Fn(&[Option<MstLabel>]) -> bool) -> Self {
        let (subjects, cells) = self
            .subjects
            .iter()
            .zip(&self.cells)
            .filter(|(_, row)| keep(row))
            .map(|(s, r)| (s.clone(), r.clone()))
            .unzip();
        Self {
            subjects,
            raters: self.raters.clone(),
            cells,
        }
    }

    /// Subjects rated by at least two raters.
    pub fn co_rated(&self) -> Self {
        self.filter_rows(|row| row.iter().flatten().count() >= 2)
    }

    /// Subjects rated by every rater.
    pub fn complete(&self) -> Self {
        self.filter_rows(|row| row.iter().all(Option::is_some))
    }

    fn as_values(&self) -> Vec<Vec<Option<f64>>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.map(|l| l.value() as f64)).collect())
            .collect()
    }
}

fn pairwise_mean(
    ratings: &RatingsMatrix,
    agree: impl Fn(MstLabel, MstLabel) -> bool,
) -> Result<f64, MetricsError> {
    let k = ratings.raters.len();
    if k < 2 {
        return Err(MetricsError::TooFew {
            what: "raters",
            need: 2,
            got: k,
        });
    }
    let mut fractions = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let (mut shared, mut same) = (0usize, 0usize);
            for row in &ratings.cells {
                if let (Some(x), Some(y)) = (row[a], row[b]) {
                    shared += 1;
                    same += agree(x, y) as usize;
                }
            }
            if shared > 0 {
                fractions.push(same as f64 / shared as f64);
            }
        }
    }
    if fractions.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    Ok(fractions.iter().sum::<f64>() / fractions.len() as f64)
}

/// Mean over rater pairs of the fraction of co-rated subjects given identical labels. Pairs
/// with no co-rated subject are skipped.
pub fn exact_agreement(ratings: &RatingsMatrix) -> Result<f64, MetricsError> {
    pairwise_mean(ratings, |a, b| a == b)
}

/// Like [`exact_agreement`] but counting labels within one tone as agreeing.
pub fn off_by_one_agreement(ratings: &RatingsMatrix) -> Result<f64, MetricsError> {
    pairwise_mean(ratings, |a, b| a.distance(b) <= 1)
}

/// ICC(3,1) over the subjects every rater labeled.
pub fn icc3(ratings: &RatingsMatrix) -> Result<f64, MetricsError> {
    let complete: Vec<Vec<f64>> = ratings
        .complete()
        .as_values()
        .into_iter()
        .map(|row| row.into_iter().flatten().collect())
        .collect();
    icc3_values(&complete)
}

/// ICC(3,1), two-way mixed effects, consistency, single rater:
/// `(MS_subjects − MS_error) / (MS_subjects + (k − 1)·MS_error)`.
///
/// `rows[i][j]` is rater `j`'s score for subject `i`; all rows must be complete.
pub fn icc3_values(rows: &[Vec<f64>]) -> Result<f64, MetricsError> {
    let n = rows.len();
    if n < 2 {
        return Err(MetricsError::TooFew {
            what: "subjects",
            need: 2,
            got: n,
        });
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(MetricsError::TooFew {
            what: "raters",
            need: 2,
            got: k,
        });
    }
    assert!(rows.iter().all(|r| r.len() == k), "ragged ratings");
    let (nf, kf) = (n as f64, k as f64);
    let grand = rows.iter().flatten().sum::<f64>() / (nf * kf);
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / kf).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / nf)
        .collect();
    let ss_subjects = kf * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    if ss_subjects == 0.0 {
        return Err(MetricsError::Undefined("ICC(3,1)"));
    }
    let ss_error: f64 = rows
        .iter()
        .zip(&row_means)
        .map(|(row, rm)| {
            row.iter()
                .zip(&col_means)
                .map(|(x, cm)| (x - rm - cm + grand).powi(2))
                .sum::<f64>()
        })
        .sum();
    let ms_subjects = ss_subjects / (nf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));
    Ok((ms_subjects - ms_error) / (ms_subjects + (kf - 1.0) * ms_error))
}

/// Distance used by Krippendorff's α.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMetric {
    /// Squared difference of values.
    #[default]
    Interval,
    /// Squared cumulative-frequency distance between ranks.
    Ordinal,
}

pub fn krippendorff_alpha(ratings: &RatingsMatrix, metric: AlphaMetric) -> Result<f64, MetricsError> {
    krippendorff_alpha_values(&ratings.as_values(), metric)
}

/// Krippendorff's α = 1 − D_o / D_e over incomplete multi-rater data, computed from the
/// coincidence matrix. Subjects with fewer than two ratings are not pairable and are
/// ignored.
pub fn krippendorff_alpha_values(rows: &[Vec<Option<f64>>], metric: AlphaMetric) -> Result<f64, MetricsError> {
    let units: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().flatten().copied().collect::<Vec<f64>>())
        .filter(|u| u.len() >= 2)
        .collect();
    if units.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    let mut values: Vec<f64> = units.iter().flatten().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    let v = values.len();
    let index_of = |x: f64| values.binary_search_by(|p| p.total_cmp(&x)).expect("value present");

    let mut coincidence = vec![vec![0.0; v]; v];
    for unit in &units {
        let weight = 1.0 / (unit.len() as f64 - 1.0);
        for (i, a) in unit.iter().enumerate() {
            for (j, b) in unit.iter().enumerate() {
                if i != j {
                    coincidence[index_of(*a)][index_of(*b)] += weight;
                }
            }
        }
    }
    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();

    let delta = |c: usize, k: usize| -> f64 {
        match metric {
            AlphaMetric::Interval => (values[c] - values[k]).powi(2),
            AlphaMetric::Ordinal => {
                let (lo, hi) = (c.min(k), c.max(k));
                let between: f64 = marginals[lo..=hi].iter().sum();
                (between - (marginals[lo] + marginals[hi]) / 2.0).powi(2)
            }
        }
    };
    let (mut observed, mut expected) = (0.0, 0.0);
    for c in 0..v {
        for k in 0..v {
            if c == k {
                continue;
            }
            let d = delta(c, k);
            observed += coincidence[c][k] * d;
            expected += marginals[c] * marginals[k] * d;
        }
    }
    if expected == 0.0 {
        return Err(MetricsError::Undefined("Krippendorff's alpha"));
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}
