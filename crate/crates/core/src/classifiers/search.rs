use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_dataset, train, ClassifierError, Dataset, ModelSpec};
use crate::data::NUM_CLASSES;
use crate::descriptors::FeatureTable;
use crate::metrics::{self, EvaluationReport};
use crate::splits::SplitPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Bacc,
    Acc,
    Ooacc,
    Wooacc,
}

impl Objective {
    pub fn of(self, report: &EvaluationReport) -> f64 {
        match self {
            Objective::Bacc => report.bacc,
            Objective::Acc => report.acc,
            Objective::Ooacc => report.ooacc,
            Objective::Wooacc => report.wooacc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub spec: ModelSpec,
    pub score: Option<f64>,
    pub report: Option<EvaluationReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ModelSpec,
    pub best_index: usize,
    pub objective: Objective,
    pub rows: Vec<GridRow>,
}

fn fit_and_score(spec: &ModelSpec, train_set: &Dataset, test: &Dataset) -> Result<EvaluationReport, ClassifierError> {
    let model = train(spec, train_set, Some(test))?;
    let predicted = predict_dataset(&model, test)?;
    Ok(metrics::evaluate(&test.y, &predicted)?)
}

/// Trains every spec on `train_set` and scores it on `val`. Specs run in parallel; the
/// table keeps grid order and the first best spec wins ties.
pub fn grid_search(
    grid: &[ModelSpec],
    train_set: &Dataset,
    val: &Dataset,
    objective: Objective,
) -> Result<GridResult, ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::EmptyGrid);
    }
    let rows: Vec<GridRow> = grid
        .par_iter()
        .map(|spec| match fit_and_score(spec, train_set, val) {
            Ok(report) => GridRow {
                spec: spec.clone(),
                score: Some(objective.of(&report)),
                report: Some(report),
                error: None,
            },
            Err(e) => {
                log::warn!("grid spec {} failed: {e}", spec.family.name());
                GridRow {
                    spec: spec.clone(),
                    score: None,
                    report: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if let Some(s) = row.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    let Some((best_index, _)) = best else {
        let reasons: Vec<&str> = rows.iter().filter_map(|r| r.error.as_deref()).collect();
        return Err(ClassifierError::AllFailed(reasons.join("; ")));
    };
    Ok(GridResult {
        best: grid[best_index].clone(),
        best_index,
        objective,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub acc: f64,
    pub bacc: f64,
    pub ooacc: f64,
    pub wooacc: f64,
}

impl MetricSummary {
    fn from_reports(reports: &[&EvaluationReport], f: impl Fn(&[f64]) -> f64) -> Self {
        let pick = |g: fn(&EvaluationReport) -> f64| f(&reports.iter().map(|r| g(r)).collect::<Vec<_>>());
        Self {
            acc: pick(|r| r.acc),
            bacc: pick(|r| r.bacc),
            ooacc: pick(|r| r.ooacc),
            wooacc: pick(|r| r.wooacc),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    /// Classes present in the data but absent from this fold's test images.
    pub missing_classes: Vec<u8>,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub spec: ModelSpec,
    pub folds: Vec<FoldResult>,
    pub mean: MetricSummary,
    /// Sample standard deviation across folds.
    pub std: MetricSummary,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Each partition of `folds` is the test set once; the model trains on the others.
pub fn kfold_cv(spec: &ModelSpec, table: &FeatureTable, folds: &SplitPlan) -> Result<CvReport, ClassifierError> {
    let k = folds.partitions.len();
    if k < 2 {
        return Err(ClassifierError::TooFewFolds(k));
    }
    let all = Dataset::from_table(table, Some(&folds.all_images())).named("cv");
    let present = all.class_counts();
    let names: Vec<&String> = folds.partitions.keys().collect();
    let folds_out: Vec<FoldResult> = names
        .par_iter()
        .map(|name| {
            let test = Dataset::from_table(table, Some(&folds.partitions[*name]));
            let train_set = Dataset::from_table(table, Some(&folds.complement(name))).named(format!("cv-{name}"));
            let counts = test.class_counts();
            let missing: Vec<u8> = (0..NUM_CLASSES)
                .filter(|&c| present[c] > 0 && counts[c] == 0)
                .map(|c| c as u8 + 1)
                .collect();
            if !missing.is_empty() {
                log::warn!("{name}: test fold lacks classes {missing:?}; metrics use the present classes");
            }
            let report = fit_and_score(spec, &train_set, &test)?;
            Ok(FoldResult {
                name: name.to_string(),
                n_train: train_set.len(),
                n_test: test.len(),
                missing_classes: missing,
                report,
            })
        })
        .collect::<Result<_, ClassifierError>>()?;
    let reports: Vec<&EvaluationReport> = folds_out.iter().map(|f| &f.report).collect();
    Ok(CvReport {
        spec: spec.clone(),
        mean: MetricSummary::from_reports(&reports, mean),
        std: MetricSummary::from_reports(&reports, sample_std),
        folds: folds_out,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::super::testutil::blobs;
    use super::super::{Family, ForestParams, TreeParams};
    use super::*;
    use crate::data::MstLabel;
    use crate::descriptors::{FeatureLayout, FeatureRow};
    use crate::splits::{Provenance, SplitMode};

    fn knn(k: usize) -> ModelSpec {
        ModelSpec::new(Family::Knn { k }, 0)
    }

    #[test]
    fn single_spec_grid() {
        let train_set = blobs(&[1, 2], 10, 2, 3.0, 1);
        let r = grid_search(&[knn(1)], &train_set, &train_set, Objective::Bacc).unwrap();
        assert_eq!(r.best, knn(1));
        assert_eq!(r.rows.len(), 1);
    }

    #[test]
    fn better_spec_wins_and_ties_go_first() {
        let train_set = blobs(&[1, 2, 3], 20, 2, 1.0, 2);
        // 1-NN is perfect on its own training set; a stump cannot separate three classes.
        let stump = ModelSpec::new(Family::DecisionTree(TreeParams { max_depth: Some(1), ..Default::default() }), 0);
        let r = grid_search(&[stump.clone(), knn(1)], &train_set, &train_set, Objective::Bacc).unwrap();
        assert_eq!(r.best_index, 1);
        let tie = grid_search(&[knn(1), ModelSpec::new(Family::Knn { k: 1 }, 5)], &train_set, &train_set, Objective::Bacc).unwrap();
        assert_eq!(tie.best_index, 0);
    }

    #[test]
    fn failures_are_recorded() {
        let train_set = blobs(&[1, 2], 10, 2, 3.0, 1);
        let bad = knn(0);
        let r = grid_search(&[bad.clone(), knn(1)], &train_set, &train_set, Objective::Acc).unwrap();
        assert!(r.rows[0].error.is_some());
        assert_eq!(r.best_index, 1);
        assert!(matches!(grid_search(&[bad], &train_set, &train_set, Objective::Acc), Err(ClassifierError::AllFailed(_))));
        assert!(matches!(grid_search(&[], &train_set, &train_set, Objective::Acc), Err(ClassifierError::EmptyGrid)));
    }

    fn table_and_folds(data: &Dataset, k: usize) -> (FeatureTable, SplitPlan) {
        let rows = data
            .x
            .iter()
            .zip(&data.y)
            .enumerate()
            .map(|(i, (x, y))| FeatureRow { image_id: format!("img{i:03}"), label: Some(*y), values: x.clone() })
            .collect();
        let table = FeatureTable::from_rows(FeatureLayout::embedding(data.dims()), rows).unwrap();
        let mut partitions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (i, row) in table.rows.iter().enumerate() {
            partitions.entry(format!("fold{}", i % k)).or_default().insert(row.image_id.clone());
        }
        let plan = SplitPlan { mode: SplitMode::Ind, seed: 0, partitions, provenance: Provenance::Kfold { k } };
        (table, plan)
    }

    #[test]
    fn separable_cv_is_perfect() {
        let data = blobs(&[1, 4, 8], 20, 3, 8.0, 5);
        let (table, plan) = table_and_folds(&data, 5);
        let cv = kfold_cv(&knn(1), &table, &plan).unwrap();
        assert_eq!(cv.folds.len(), 5);
        assert_eq!(cv.mean.bacc, 1.0);
        assert_eq!(cv.std.bacc, 0.0);
    }

    #[test]
    fn symmetric_two_fold_cv() {
        let data = blobs(&[2, 6], 40, 2, 1.5, 13);
        let (table, plan) = table_and_folds(&data, 2);
        let rf = ModelSpec::new(Family::RandomForest(ForestParams { n_trees: 20, ..Default::default() }), 1);
        let cv = kfold_cv(&rf, &table, &plan).unwrap();
        let (a, b) = (cv.folds[0].report.bacc, cv.folds[1].report.bacc);
        assert!((a - b).abs() < 0.15, "{a} vs {b}");
    }

    #[test]
    fn one_fold_is_an_error() {
        let data = blobs(&[2, 6], 10, 2, 1.5, 13);
        let (table, plan) = table_and_folds(&data, 1);
        assert!(matches!(kfold_cv(&knn(1), &table, &plan), Err(ClassifierError::TooFewFolds(1))));
    }

    #[test]
    fn missing_class_in_fold_is_reported() {
        let mut data = blobs(&[1, 2], 20, 2, 5.0, 3);
        data.x.push(vec![40.0, 40.0]);
        data.y.push(MstLabel::new(9).unwrap());
        data.ids.push("extra".into());
        let (table, plan) = table_and_folds(&data, 2);
        let cv = kfold_cv(&knn(1), &table, &plan).unwrap();
        assert!(cv.folds.iter().any(|f| f.missing_classes == vec![9]));
    }
}
