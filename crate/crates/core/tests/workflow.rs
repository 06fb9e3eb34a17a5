//! File-backed workflow: images on disk, manifest, descriptor table, split plan, model and
//! audit report all round-trip through their on-disk formats.

use std::fs;

use skintone_core::audit::{audit_dataset, default_palette, emit_report, ReportFormat};
use skintone_core::augmentation::{augment_batch, AugmentConfig};
use skintone_core::classifiers::{
    load_model, predict_dataset, save_model, train, Dataset, Family, ForestParams, ModelSpec,
};
use skintone_core::descriptors::FeatureTable;
use skintone_core::experiment::{synthetic_dataset, SyntheticConfig};
use skintone_core::pipeline::{extract_table, ExtractConfig, FsSource};
use skintone_core::splits::{split_by_individuals, Fractions, SplitPlan};
use skintone_core::DatasetManifest;

fn small() -> SyntheticConfig {
    SyntheticConfig {
        individuals_per_class: 4,
        images_per_individual: 2,
        width: 10,
        height: 10,
        seed: 8,
        ..Default::default()
    }
}

#[test]
fn disk_round_trip_matches_memory() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, source) = synthetic_dataset(&small());
    for (id, image) in &source.images {
        image.save_png(dir.path().join(format!("{id}.png"))).unwrap();
    }
    let manifest_path = dir.path().join("faces.jsonl");
    manifest.save(&manifest_path).unwrap();
    let loaded = DatasetManifest::load(&manifest_path).unwrap();
    assert_eq!(loaded.images, manifest.images);
    assert_eq!(loaded.individuals, manifest.individuals);

    let cfg = ExtractConfig::default();
    let (from_memory, _) = extract_table(&manifest, &source, &cfg).unwrap();
    let (from_disk, skipped) = extract_table(&loaded, &FsSource::default(), &cfg).unwrap();
    assert!(skipped.is_empty(), "{skipped:?}");
    assert_eq!(from_disk.rows, from_memory.rows);

    let table_path = dir.path().join("features.csv");
    from_disk.save_csv(&table_path).unwrap();
    let table = FeatureTable::load_csv(&table_path).unwrap();
    assert_eq!(table.rows, from_disk.rows);
    assert_eq!(table.layout.hash(), from_disk.layout.hash());

    let plan = split_by_individuals(&loaded, Fractions::new(0.75, 0.0, 0.25).unwrap(), 4).unwrap();
    let plan_path = dir.path().join("split.json");
    plan.save(&plan_path).unwrap();
    let plan = SplitPlan::load(&plan_path).unwrap();
    plan.check_no_leakage(&loaded).unwrap();

    let train_set = Dataset::from_table(&table, plan.partition("train"));
    let test = Dataset::from_table(&table, plan.partition("test"));
    let spec = ModelSpec::new(Family::RandomForest(ForestParams { n_trees: 15, ..Default::default() }), 2);
    let model = train(&spec, &train_set, None).unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model, &model_path).unwrap();
    let reloaded = load_model(&model_path).unwrap();
    assert_eq!(reloaded, model);
    assert_eq!(predict_dataset(&reloaded, &test).unwrap(), predict_dataset(&model, &test).unwrap());

    let report = audit_dataset(&loaded, &reloaded, &FsSource::default(), &cfg).unwrap();
    assert_eq!(report.classified, loaded.len());
    assert!((report.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    for (format, name) in [(ReportFormat::Json, "r.json"), (ReportFormat::Csv, "r.csv"), (ReportFormat::Svg, "r.svg")] {
        let path = dir.path().join(name);
        emit_report(&report, format, &path, &default_palette()).unwrap();
        assert!(!fs::read_to_string(&path).unwrap().is_empty());
    }
}

#[test]
fn augmented_copies_are_reproducible() {
    let (_, source) = synthetic_dataset(&small());
    let mut ids: Vec<&String> = source.images.keys().collect();
    ids.sort();
    let images: Vec<_> = ids.iter().take(6).map(|id| source.images[*id].clone()).collect();
    let cfg = AugmentConfig::default();
    let a = augment_batch(&images, &cfg, 41).unwrap();
    let b = augment_batch(&images, &cfg, 41).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().zip(&images).all(|(x, y)| x.width() == y.width() && x.height() == y.height()));
    assert_ne!(augment_batch(&images, &cfg, 42).unwrap(), a);
}
