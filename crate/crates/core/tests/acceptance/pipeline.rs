use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skintone_core::classifiers::{Family, ForestParams, ModelSpec};
use skintone_core::descriptors::DescriptorConfig;
use skintone_core::experiment::{
    run_experiment, synthetic_dataset, train_and_evaluate, ExperimentConfig, ExperimentReport, SyntheticConfig,
};
use skintone_core::pipeline::{extract_table, ExtractConfig};
use skintone_core::splits::{
    build_custom_test, kfold_by_individual, split_by_images, split_by_individuals, Fractions, SplitError, SplitPlan,
};
use skintone_core::{DatasetManifest, ImageRecord, MstLabel, NUM_CLASSES};

use crate::{ensure, Outcome};

/// Identity fingerprints dominate; the class signal is a skin tone buried in a wide
/// per-individual spread.
pub fn leakage_config(seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        individuals_per_class: 20,
        images_per_individual: 5,
        skin_spread: 30.0,
        seed,
        ..Default::default()
    }
}

pub fn leakage() -> Outcome {
    let fractions = Fractions::new(0.8, 0.0, 0.2).unwrap();
    let extract = ExtractConfig { descriptor: DescriptorConfig::with_bins(16), ..Default::default() };
    let (mut img, mut ind) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let (manifest, source) = synthetic_dataset(&leakage_config(seed));
        ensure!(manifest.individuals.len() == 200 && manifest.len() == 1000, "dataset shape");
        let (table, skipped) = extract_table(&manifest, &source, &extract).map_err(|e| e.to_string())?;
        ensure!(skipped.is_empty(), "{} images skipped", skipped.len());
        let rf = ModelSpec::new(Family::RandomForest(ForestParams::default()), seed);
        let by_image = split_by_images(&manifest, fractions, seed).map_err(|e| e.to_string())?;
        let by_individual = split_by_individuals(&manifest, fractions, seed).map_err(|e| e.to_string())?;
        ensure!(by_individual.check_no_leakage(&manifest).is_ok(), "IND split leaks");
        img.push(train_and_evaluate(&rf, &table, &by_image, "train", "test").map_err(|e| e.to_string())?.bacc);
        ind.push(train_and_evaluate(&rf, &table, &by_individual, "train", "test").map_err(|e| e.to_string())?.bacc);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (img_mean, ind_mean) = (mean(&img), mean(&ind));
    let gap = img_mean - ind_mean;
    let detail = format!("IMG bAcc {img_mean:.3}, IND bAcc {ind_mean:.3}, gap {gap:.3} (need >= 0.20)");
    ensure!(gap >= 0.20, "{detail}");
    Ok(detail)
}

fn random_manifest(rng: &mut ChaCha8Rng, per_class: impl Fn(usize) -> usize) -> DatasetManifest {
    let mut records = Vec::new();
    for c in 0..NUM_CLASSES {
        for i in 0..per_class(c) {
            let individual = format!("c{c}-ind{i}");
            for j in 0..rng.random_range(1..=6) {
                let image_id = format!("{individual}-img{j}");
                records.push(ImageRecord {
                    path: PathBuf::from(format!("{image_id}.jpg")),
                    image_id,
                    individual_id: individual.clone(),
                    source_dataset: "splits".into(),
                    label: Some(MstLabel::from_index(c)),
                });
            }
        }
    }
    DatasetManifest::from_records("splits", records).unwrap()
}

/// Every labeled image in exactly one partition and every individual confined to one.
fn oracle_grouped(plan: &SplitPlan, manifest: &DatasetManifest) -> Result<(), String> {
    let mut home: BTreeMap<&str, &str> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (name, ids) in &plan.partitions {
        for id in ids {
            ensure!(seen.insert(id.clone()), "image {id} in two partitions");
            let ind = manifest.images[id].individual_id.as_str();
            let first = *home.entry(ind).or_insert(name);
            ensure!(first == name, "individual {ind} in {first} and {name}");
        }
    }
    let labeled: BTreeSet<String> = manifest.images.keys().cloned().collect();
    ensure!(seen == labeled, "partitions cover {} of {} images", seen.len(), labeled.len());
    Ok(())
}

pub fn split_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut plans = 0;
    for seed in 0..100u64 {
        let manifest = random_manifest(&mut rng, |_| 14 + (seed as usize % 7));
        let train = rng.random_range(0.4..0.8);
        let val = rng.random_range(0.05..(1.0 - train) / 2.0);
        let fractions = Fractions::new(train, val, 1.0 - train - val).map_err(|e| e.to_string())?;
        let plan = split_by_individuals(&manifest, fractions, seed).map_err(|e| e.to_string())?;
        oracle_grouped(&plan, &manifest).map_err(|e| format!("seed {seed} fractions: {e}"))?;
        ensure!(plan.check_no_leakage(&manifest).is_ok(), "seed {seed}: leakage check disagrees");
        let k = 2 + seed as usize % 4;
        let folds = kfold_by_individual(&manifest, k, seed).map_err(|e| e.to_string())?;
        ensure!(folds.partitions.len() == k, "seed {seed}: {} folds", folds.partitions.len());
        oracle_grouped(&folds, &manifest).map_err(|e| format!("seed {seed} {k}-fold: {e}"))?;

        let (test, rest) = build_custom_test(&manifest, 10, seed).map_err(|e| e.to_string())?;
        let held = &test.partitions["test"];
        let mut per_class: [BTreeSet<String>; NUM_CLASSES] = std::array::from_fn(|_| BTreeSet::new());
        for id in held {
            let rec = &manifest.images[id];
            per_class[rec.label.unwrap().index()].insert(rec.individual_id.clone());
        }
        ensure!(per_class.iter().all(|s| s.len() == 10), "seed {seed}: custom test per-class counts");
        for inds in &per_class {
            for ind in inds {
                ensure!(
                    manifest.individuals[ind].image_ids.iter().all(|i| held.contains(i)),
                    "seed {seed}: {ind} partially held out"
                );
                ensure!(!rest.individuals.contains_key(ind), "seed {seed}: {ind} also in remainder");
            }
        }
        ensure!(rest.len() + held.len() == manifest.len(), "seed {seed}: custom test loses images");
        plans += 3;
    }
    let short = random_manifest(&mut rng, |c| if c == 6 { 9 } else { 12 });
    match build_custom_test(&short, 10, 0) {
        Err(SplitError::TooFew { class, got: 9, .. }) if class == MstLabel::new(7).unwrap() => {}
        other => return Err(format!("class with 9 individuals: {:?}", other.map(|_| ()))),
    }
    Ok(format!("{plans} plans over 100 seeds leak-free; custom test exact, short class errors"))
}

pub fn e2e_config() -> (SyntheticConfig, ExperimentConfig) {
    let data = SyntheticConfig { seed: 3, ..Default::default() };
    let experiment = ExperimentConfig {
        extract: ExtractConfig { descriptor: DescriptorConfig::with_bins(16), ..Default::default() },
        seed: 3,
        ..Default::default()
    };
    (data, experiment)
}

fn run_e2e() -> Result<ExperimentReport, String> {
    let (data, cfg) = e2e_config();
    let (manifest, source) = synthetic_dataset(&data);
    run_experiment(&manifest, &source, &cfg).map_err(|e| e.to_string())
}

pub fn end_to_end() -> Outcome {
    let report = run_e2e()?;
    let detail = format!(
        "best {} of {}; CV bAcc {:.3}; test bAcc {:.3} (need >= 0.5)",
        report.grid.best.family.name(),
        report.grid.rows.len(),
        report.cv.mean.bacc,
        report.test.bacc
    );
    ensure!(report.test.bacc >= 0.5, "{detail}");
    Ok(detail)
}

pub fn determinism() -> Outcome {
    let first = serde_json::to_string(&run_e2e()?).map_err(|e| e.to_string())?;
    let second = serde_json::to_string(&run_e2e()?).map_err(|e| e.to_string())?;
    ensure!(first == second, "reports differ across runs");
    Ok(format!("two runs, {} report bytes identical", first.len()))
}
