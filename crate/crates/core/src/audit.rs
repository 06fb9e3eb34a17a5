//! Zero-shot auditing: classify every image of an external dataset with a fixed model and
//! report the class distribution, or score the model when the dataset is labeled.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{predict_values, Classifier};
use crate::data::{DatasetManifest, MstLabel, NUM_CLASSES};
use crate::descriptors::{DescriptorError, FeatureTable};
use crate::metrics::{self, EvaluationReport, MetricsError};
use crate::pipeline::{extract_table, ExtractConfig, ImageSource, Skipped};
use crate::segmentation::RegionKind;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("model expects feature layout {expected}, extraction produces {got}")]
    LayoutMismatch { expected: String, got: String },
    #[error("no image could be classified ({skipped} skipped)")]
    NothingClassified { skipped: usize },
    #[error("{count} images have no label (first: {first})")]
    Unlabeled { count: usize, first: String },
    #[error(transparent)]
    Extraction(#[from] DescriptorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {message}")]
    Write { path: String, message: String },
}

/// Published Monk Skin Tone swatches, lightest to darkest.
pub const MST_PALETTE: [&str; NUM_CLASSES] = [
    "#f6ede4", "#f3e7db", "#f7ead0", "#eadaba", "#d7bd96", "#a07e56", "#825c43", "#604134", "#3a312a", "#292420",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub dataset: String,
    pub region: RegionKind,
    pub total: usize,
    pub classified: usize,
    pub counts: [u64; NUM_CLASSES],
    /// Share of classified images per class, in percent.
    pub percentages: [f64; NUM_CLASSES],
    pub skipped: Vec<Skipped>,
}

impl DistributionReport {
    pub fn from_counts(
        dataset: impl Into<String>,
        region: RegionKind,
        counts: [u64; NUM_CLASSES],
        skipped: Vec<Skipped>,
    ) -> Self {
        let classified: u64 = counts.iter().sum();
        let percentages = counts.map(|c| if classified == 0 { 0.0 } else { 100.0 * c as f64 / classified as f64 });
        Self {
            dataset: dataset.into(),
            region,
            total: classified as usize + skipped.len(),
            classified: classified as usize,
            counts,
            percentages,
            skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodEvaluation {
    pub dataset: String,
    pub region: RegionKind,
    pub acc: f64,
    pub ooacc: f64,
    pub report: EvaluationReport,
    pub skipped: Vec<Skipped>,
}

fn check_layout(model: &dyn Classifier, table: &FeatureTable) -> Result<(), AuditError> {
    let got = table.layout.hash();
    if got != model.layout_hash() {
        return Err(AuditError::LayoutMismatch {
            expected: model.layout_hash().to_string(),
            got,
        });
    }
    Ok(())
}

fn predictions(model: &dyn Classifier, table: &FeatureTable) -> Vec<MstLabel> {
    table.rows.par_iter().map(|r| predict_values(model, &r.values).label).collect()
}

/// Distribution of predicted classes over an already extracted table.
pub fn audit_table(
    dataset: &str,
    region: RegionKind,
    table: &FeatureTable,
    skipped: Vec<Skipped>,
    model: &dyn Classifier,
) -> Result<DistributionReport, AuditError> {
    check_layout(model, table)?;
    if table.is_empty() {
        return Err(AuditError::NothingClassified { skipped: skipped.len() });
    }
    let mut counts = [0u64; NUM_CLASSES];
    for label in predictions(model, table) {
        counts[label.index()] += 1;
    }
    Ok(DistributionReport::from_counts(dataset, region, counts, skipped))
}

fn check_extraction_layout(model: &dyn Classifier, cfg: &ExtractConfig) -> Result<(), AuditError> {
    let got = cfg.descriptor.layout().hash();
    if got != model.layout_hash() {
        return Err(AuditError::LayoutMismatch {
            expected: model.layout_hash().to_string(),
            got,
        });
    }
    Ok(())
}

pub fn audit_dataset(
    manifest: &DatasetManifest,
    model: &dyn Classifier,
    source: &dyn ImageSource,
    cfg: &ExtractConfig,
) -> Result<DistributionReport, AuditError> {
    check_extraction_layout(model, cfg)?;
    let (table, skipped) = extract_table(manifest, source, cfg)?;
    audit_table(&manifest.name, cfg.region, &table, skipped, model)
}

/// Scores a model on a labeled table.
pub fn evaluate_table(
    dataset: &str,
    region: RegionKind,
    table: &FeatureTable,
    skipped: Vec<Skipped>,
    model: &dyn Classifier,
) -> Result<OodEvaluation, AuditError> {
    check_layout(model, table)?;
    let unlabeled: Vec<&str> = table.rows.iter().filter(|r| r.label.is_none()).map(|r| r.image_id.as_str()).collect();
    if let Some(first) = unlabeled.first() {
        return Err(AuditError::Unlabeled {
            count: unlabeled.len(),
            first: first.to_string(),
        });
    }
    if table.is_empty() {
        return Err(AuditError::NothingClassified { skipped: skipped.len() });
    }
    let truth: Vec<MstLabel> = table.rows.iter().map(|r| r.label.expect("checked")).collect();
    let report = metrics::evaluate(&truth, &predictions(model, table))?;
    Ok(OodEvaluation {
        dataset: dataset.to_string(),
        region,
        acc: report.acc,
        ooacc: report.ooacc,
        report,
        skipped,
    })
}

pub fn evaluate_ood(
    manifest: &DatasetManifest,
    model: &dyn Classifier,
    source: &dyn ImageSource,
    cfg: &ExtractConfig,
) -> Result<OodEvaluation, AuditError> {
    let unlabeled: Vec<&String> = manifest
        .images
        .keys()
        .filter(|id| manifest.label_of_image(id).is_none())
        .collect();
    if let Some(first) = unlabeled.first() {
        return Err(AuditError::Unlabeled {
            count: unlabeled.len(),
            first: first.to_string(),
        });
    }
    check_extraction_layout(model, cfg)?;
    let (table, skipped) = extract_table(manifest, source, cfg)?;
    evaluate_table(&manifest.name, cfg.region, &table, skipped, model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "svg" => Ok(Self::Svg),
            other => Err(format!("unknown report format {other:?} (expected json, csv or svg)")),
        }
    }
}

pub fn report_csv(report: &DistributionReport) -> String {
    let mut out = String::from("class,count,percentage\n");
    for c in 0..NUM_CLASSES {
        let _ = writeln!(out, "{},{},{}", c + 1, report.counts[c], report.percentages[c]);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bar chart with one bar per class, filled with that class's swatch.
pub fn report_svg(report: &DistributionReport, palette: &[String; NUM_CLASSES]) -> String {
    let (width, height, margin) = (560.0, 300.0, 40.0);
    let plot_h = height - 2.0 * margin;
    let slot = (width - 2.0 * margin) / NUM_CLASSES as f64;
    let top = report.percentages.iter().copied().fold(0.0, f64::max).max(1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        out,
        r#"  <text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        width / 2.0,
        escape(&report.dataset)
    );
    let axis_y = height - margin;
    let _ = writeln!(out, r#"  <line x1="{margin}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#, width - margin);
    for (c, &pct) in report.percentages.iter().enumerate() {
        let h = plot_h * pct / top;
        let x = margin + slot * c as f64 + slot * 0.1;
        let _ = writeln!(
            out,
            r#"  <rect x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}" stroke="black" stroke-width="0.5"><title>MST {}: {pct:.2}%</title></rect>"#,
            axis_y - h,
            slot * 0.8,
            escape(&palette[c]),
            c + 1
        );
        let _ = writeln!(
            out,
            r#"  <text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            x + slot * 0.4,
            axis_y + 15.0,
            c + 1
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn default_palette() -> [String; NUM_CLASSES] {
    MST_PALETTE.map(String::from)
}

pub fn emit_report(
    report: &DistributionReport,
    format: ReportFormat,
    path: impl AsRef<Path>,
    palette: &[String; NUM_CLASSES],
) -> Result<(), AuditError> {
    let path = path.as_ref();
    let werr = |e: &dyn std::fmt::Display| AuditError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).map_err(|e| werr(&e))?,
        ReportFormat::Csv => report_csv(report),
        ReportFormat::Svg => report_svg(report, palette),
    };
    fs::write(path, text).map_err(|e| werr(&e))
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::path::PathBuf;

    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::data::{Image, ImageRecord};
    use crate::descriptors::{FeatureLayout, FeatureRow};
    use crate::pipeline::MemorySource;

    struct Constant(usize, String);

    impl Classifier for Constant {
        fn layout_hash(&self) -> &str {
            &self.1
        }
        fn scores(&self, _: &[f64]) -> [f64; NUM_CLASSES] {
            let mut s = [0.0; NUM_CLASSES];
            s[self.0] = 1.0;
            s
        }
    }

    /// Reads the label back out of the first feature, which the tests set to the class index.
    struct Oracle(String);

    impl Classifier for Oracle {
        fn layout_hash(&self) -> &str {
            &self.0
        }
        fn scores(&self, v: &[f64]) -> [f64; NUM_CLASSES] {
            let mut s = [0.0; NUM_CLASSES];
            s[v[0] as usize] = 1.0;
            s
        }
    }

    struct Random(String, u64);

    impl Classifier for Random {
        fn layout_hash(&self) -> &str {
            &self.0
        }
        fn scores(&self, v: &[f64]) -> [f64; NUM_CLASSES] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.1 ^ v[1].to_bits());
            std::array::from_fn(|_| rng.random())
        }
    }

    fn table(labels: &[Option<usize>]) -> FeatureTable {
        let rows = labels
            .iter()
            .enumerate()
            .map(|(i, l)| FeatureRow {
                image_id: format!("img{i:04}"),
                label: l.map(MstLabel::from_index),
                values: vec![l.unwrap_or(0) as f64, i as f64],
            })
            .collect();
        FeatureTable::from_rows(FeatureLayout::embedding(2), rows).unwrap()
    }

    fn hash() -> String {
        FeatureLayout::embedding(2).hash()
    }

    #[test]
    fn constant_model_puts_everything_in_one_class() {
        let t = table(&vec![None; 50]);
        let r = audit_table("x", RegionKind::FullImage, &t, vec![], &Constant(2, hash())).unwrap();
        assert_eq!(r.percentages[2], 100.0);
        assert_eq!(r.counts[2], 50);
        assert_eq!(r.classified + r.skipped.len(), r.total);
    }

    #[test]
    fn oracle_distribution_equals_label_tally() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let labels: Vec<Option<usize>> = (0..300).map(|_| Some(rng.random_range(0..10))).collect();
        let t = table(&labels);
        let r = audit_table("x", RegionKind::FullImage, &t, vec![], &Oracle(hash())).unwrap();
        for c in 0..10 {
            let tally = labels.iter().filter(|l| **l == Some(c)).count() as u64;
            assert_eq!(r.counts[c], tally);
            assert_eq!(r.percentages[c], 100.0 * tally as f64 / 300.0);
        }
        assert!((r.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        let eval = evaluate_table("x", RegionKind::FullImage, &t, vec![], &Oracle(hash())).unwrap();
        assert_eq!((eval.acc, eval.ooacc), (1.0, 1.0));
    }

    #[test]
    fn always_first_class_on_uniform_labels() {
        let labels: Vec<Option<usize>> = (0..100).map(|i| Some(i % 10)).collect();
        let eval = evaluate_table("x", RegionKind::FullImage, &table(&labels), vec![], &Constant(0, hash())).unwrap();
        assert!((eval.acc - 0.1).abs() < 1e-12);
        assert!((eval.ooacc - 0.2).abs() < 1e-12);
    }

    #[test]
    fn random_model_near_chance() {
        let labels: Vec<Option<usize>> = (0..5000).map(|i| Some(i % 10)).collect();
        let eval = evaluate_table("x", RegionKind::FullImage, &table(&labels), vec![], &Random(hash(), 1)).unwrap();
        assert!((eval.acc - 0.10).abs() < 0.02, "{}", eval.acc);
    }

    #[test]
    fn unlabeled_and_mismatched_inputs() {
        let t = table(&[Some(1), None]);
        assert!(matches!(
            evaluate_table("x", RegionKind::FullImage, &t, vec![], &Oracle(hash())),
            Err(AuditError::Unlabeled { count: 1, .. })
        ));
        assert!(matches!(
            audit_table("x", RegionKind::FullImage, &t, vec![], &Oracle("other".into())),
            Err(AuditError::LayoutMismatch { .. })
        ));
        let empty = FeatureTable::new(FeatureLayout::embedding(2));
        assert!(matches!(
            audit_table("x", RegionKind::FullImage, &empty, vec![], &Oracle(hash())),
            Err(AuditError::NothingClassified { .. })
        ));
    }

    fn image_manifest(n: usize) -> (DatasetManifest, MemorySource) {
        let mut images = HashMap::new();
        let records: Vec<ImageRecord> = (0..n)
            .map(|i| {
                let id = format!("m{i}");
                images.insert(id.clone(), Image::filled(5, 5, [120, (i * 9) as u8, 80]));
                ImageRecord {
                    image_id: id,
                    path: PathBuf::from(format!("m{i}.png")),
                    individual_id: format!("p{i}"),
                    source_dataset: "mem".into(),
                    label: None,
                }
            })
            .collect();
        (DatasetManifest::from_records("faces", records).unwrap(), MemorySource { images, masks: HashMap::new() })
    }

    #[test]
    fn missing_masks_are_skipped_with_reasons() {
        let (manifest, source) = image_manifest(5);
        let cfg = ExtractConfig { region: RegionKind::Face, ..Default::default() };
        let model = Constant(3, cfg.descriptor.layout().hash());
        let err = audit_dataset(&manifest, &model, &source, &cfg).unwrap_err();
        assert!(matches!(err, AuditError::NothingClassified { skipped: 5 }));

        let full = ExtractConfig::default();
        let mut partial = source.clone();
        partial.images.remove("m3");
        let r = audit_dataset(&manifest, &model, &partial, &full).unwrap();
        assert_eq!((r.classified, r.skipped.len(), r.total), (4, 1, 5));
        assert_eq!(r.skipped[0].image_id, "m3");
        assert_eq!(r, audit_dataset(&manifest, &model, &partial, &full).unwrap());
    }

    #[test]
    fn report_formats() {
        let r = DistributionReport::from_counts(
            "Faces <A&B>",
            RegionKind::Face,
            [5, 0, 3, 1, 0, 0, 7, 2, 0, 1],
            vec![Skipped { image_id: "z".into(), reason: "missing mask".into() }],
        );
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("r.json");
        emit_report(&r, ReportFormat::Json, &json, &default_palette()).unwrap();
        let back: DistributionReport = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(back, r);

        let csv = report_csv(&r);
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.lines().nth(7).unwrap().starts_with("7,7,"));

        let svg = report_svg(&r, &default_palette());
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let rects: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("rect")).collect();
        assert_eq!(rects.len(), 10);
        assert_eq!(rects[0].attribute("fill"), Some("#f6ede4"));
        assert_eq!(rects[9].attribute("fill"), Some("#292420"));
        assert!(emit_report(&r, ReportFormat::Csv, dir.path().join("no/such/dir.csv"), &default_palette()).is_err());
    }
}
