//! Dataset partitioning: image-level and individual-level splits, the custom leakage test set,
//! per-individual balancing and stratified k-fold by individual.
//!
//! Every operation stratifies by class. Within a class, ids are sorted before the seeded
//! shuffle so plans do not depend on manifest file order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetManifest, MstLabel, NUM_CLASSES};

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("class {class} has {got} {unit}, need at least {need}")]
    TooFew {
        class: MstLabel,
        unit: &'static str,
        need: usize,
        got: usize,
    },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("images per individual must be in 1..=5, got {0}")]
    InvalidCap(usize),
    #[error("partitions {0} and {1} share image {2}")]
    Overlap(String, String, String),
    #[error("image {0} is not in the manifest")]
    UnknownImage(String),
    #[error("individual {individual} spans partitions {partitions:?}")]
    Leakage {
        individual: String,
        partitions: Vec<String>,
    },
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SplitMode {
    Img,
    Ind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Fractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, SplitError> {
        let f = Self { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        let a = self.as_array();
        let ok = a.iter().all(|f| f.is_finite() && *f >= 0.0) && (a.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if ok {
            Ok(())
        } else {
            Err(SplitError::BadFractions(a))
        }
    }

    fn active_parts(&self) -> usize {
        self.as_array().iter().filter(|f| **f > 0.0).count()
    }
}

pub const PARTITIONS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Fractions(Fractions),
    Kfold { k: usize },
    CustomTest { n_per_class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
    pub partitions: BTreeMap<String, BTreeSet<String>>,
    pub provenance: Provenance,
}

impl SplitPlan {
    pub fn partition(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.partitions.get(name)
    }

    /// Images of every partition except `name`.
    pub fn complement(&self, name: &str) -> BTreeSet<String> {
        self.partitions
            .iter()
            .filter(|(n, _)| n.as_str() != name)
            .flat_map(|(_, ids)| ids.iter().cloned())
            .collect()
    }

    pub fn all_images(&self) -> BTreeSet<String> {
        self.partitions.values().flatten().cloned().collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SplitError> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| file_err(path, e))?;
        fs::write(path, json).map_err(|e| file_err(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SplitError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| file_err(path, e))
    }

    /// Partitions are disjoint and only name images of `manifest`.
    pub fn check_partition(&self, manifest: &DatasetManifest) -> Result<(), SplitError> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (name, ids) in &self.partitions {
            for id in ids {
                if !manifest.images.contains_key(id) {
                    return Err(SplitError::UnknownImage(id.clone()));
                }
                if let Some(prev) = owner.insert(id, name) {
                    return Err(SplitError::Overlap(prev.to_string(), name.clone(), id.clone()));
                }
            }
        }
        Ok(())
    }

    /// Individuals whose images fall in more than one partition, with those partitions.
    pub fn leaked_individuals(&self, manifest: &DatasetManifest) -> BTreeMap<String, BTreeSet<String>> {
        let mut seen: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (name, ids) in &self.partitions {
            for id in ids {
                if let Some(rec) = manifest.images.get(id) {
                    seen.entry(rec.individual_id.clone()).or_default().insert(name.clone());
                }
            }
        }
        seen.retain(|_, parts| parts.len() > 1);
        seen
    }

    pub fn check_no_leakage(&self, manifest: &DatasetManifest) -> Result<(), SplitError> {
        match self.leaked_individuals(manifest).into_iter().next() {
            None => Ok(()),
            Some((individual, parts)) => Err(SplitError::Leakage {
                individual,
                partitions: parts.into_iter().collect(),
            }),
        }
    }
}

fn file_err(path: &Path, e: impl ToString) -> SplitError {
    SplitError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Integer cut sizes for `n` items by largest remainder; ties go to the earlier part.
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

fn shuffled(mut ids: Vec<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    ids.sort();
    ids.shuffle(rng);
    ids
}

/// Cut each class's shuffled items by `fractions` and expand them to image ids.
fn stratified_cut(
    per_class: [Vec<String>; NUM_CLASSES],
    fractions: &Fractions,
    seed: u64,
    unit: &'static str,
    expand: impl Fn(&str) -> Vec<String>,
) -> Result<BTreeMap<String, BTreeSet<String>>, SplitError> {
    fractions.validate()?;
    let need = fractions.active_parts();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partitions: BTreeMap<String, BTreeSet<String>> =
        PARTITIONS.iter().map(|p| (p.to_string(), BTreeSet::new())).collect();
    for (c, items) in per_class.into_iter().enumerate() {
        if items.is_empty() {
            continue;
        }
        if items.len() < need {
            return Err(SplitError::TooFew {
                class: MstLabel::from_index(c),
                unit,
                need,
                got: items.len(),
            });
        }
        let items = shuffled(items, &mut rng);
        let sizes = largest_remainder(items.len(), &fractions.as_array());
        let mut rest = items.as_slice();
        for (name, size) in PARTITIONS.iter().zip(sizes) {
            let (take, tail) = rest.split_at(size);
            rest = tail;
            let part = partitions.get_mut(*name).expect("partition exists");
            for item in take {
                part.extend(expand(item));
            }
        }
    }
    Ok(partitions)
}

pub fn split_by_images(manifest: &DatasetManifest, fractions: Fractions, seed: u64) -> Result<SplitPlan, SplitError> {
    let mut per_class: [Vec<String>; NUM_CLASSES] = Default::default();
    for (id, rec) in &manifest.images {
        if let Some(label) = manifest.label_of_image(id).or(rec.label) {
            per_class[label.index()].push(id.clone());
        }
    }
    let partitions = stratified_cut(per_class, &fractions, seed, "images", |id| vec![id.to_string()])?;
    Ok(SplitPlan {
        mode: SplitMode::Img,
        seed,
        partitions,
        provenance: Provenance::Fractions(fractions),
    })
}

fn individual_ids_by_class(manifest: &DatasetManifest) -> [Vec<String>; NUM_CLASSES] {
    manifest
        .individuals_by_class()
        .map(|v| v.into_iter().map(|i| i.individual_id.clone()).collect())
}

pub fn split_by_individuals(
    manifest: &DatasetManifest,
    fractions: Fractions,
    seed: u64,
) -> Result<SplitPlan, SplitError> {
    let partitions = stratified_cut(individual_ids_by_class(manifest), &fractions, seed, "individuals", |ind| {
        manifest.individuals[ind].image_ids.clone()
    })?;
    Ok(SplitPlan {
        mode: SplitMode::Ind,
        seed,
        partitions,
        provenance: Provenance::Fractions(fractions),
    })
}

/// Holds out `n_per_class` individuals of every class, with all their images, and returns
/// the held-out plan (single `test` partition) plus the remaining manifest.
pub fn build_custom_test(
    manifest: &DatasetManifest,
    n_per_class: usize,
    seed: u64,
) -> Result<(SplitPlan, DatasetManifest), SplitError> {
    let by_class = individual_ids_by_class(manifest);
    for (c, ids) in by_class.iter().enumerate() {
        if ids.len() < n_per_class {
            return Err(SplitError::TooFew {
                class: MstLabel::from_index(c),
                unit: "individuals",
                need: n_per_class,
                got: ids.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held_individuals = BTreeSet::new();
    let mut held_images = BTreeSet::new();
    for ids in by_class {
        for ind in shuffled(ids, &mut rng).into_iter().take(n_per_class) {
            held_images.extend(manifest.individuals[&ind].image_ids.iter().cloned());
            held_individuals.insert(ind);
        }
    }
    let remainder = manifest.without_individuals(&held_individuals);
    let plan = SplitPlan {
        mode: SplitMode::Ind,
        seed,
        partitions: BTreeMap::from([("test".to_string(), held_images)]),
        provenance: Provenance::CustomTest { n_per_class },
    };
    Ok((plan, remainder))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub max_per_individual: usize,
    pub seed: u64,
    pub selected: BTreeSet<String>,
    pub per_class: [usize; NUM_CLASSES],
}

/// Keeps at most `m` images per labeled individual, chosen by seeded shuffle.
pub fn balance(manifest: &DatasetManifest, m: usize, seed: u64) -> Result<BalancePlan, SplitError> {
    if !(1..=5).contains(&m) {
        return Err(SplitError::InvalidCap(m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = BTreeSet::new();
    let mut per_class = [0; NUM_CLASSES];
    for ind in manifest.labeled_individuals() {
        let label = ind.label.expect("labeled individual");
        let picks = shuffled(ind.image_ids.clone(), &mut rng);
        let take = picks.len().min(m);
        per_class[label.index()] += take;
        selected.extend(picks.into_iter().take(take));
    }
    Ok(BalancePlan {
        max_per_individual: m,
        seed,
        selected,
        per_class,
    })
}

pub fn fold_name(i: usize, k: usize) -> String {
    let width = (k - 1).max(1).to_string().len();
    format!("fold{i:0width$}")
}

/// Stratified assignment of individuals to `k` folds. Within a class, shuffled individuals
/// are dealt round-robin; the dealing position carries over between classes so overall fold
/// sizes stay level too.
pub fn kfold_by_individual(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<SplitPlan, SplitError> {
    if k < 2 {
        return Err(SplitError::InvalidK(k));
    }
    let by_class = individual_ids_by_class(manifest);
    for (c, ids) in by_class.iter().enumerate() {
        if !ids.is_empty() && ids.len() < k {
            return Err(SplitError::TooFew {
                class: MstLabel::from_index(c),
                unit: "individuals",
                need: k,
                got: ids.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partitions: BTreeMap<String, BTreeSet<String>> = (0..k).map(|i| (fold_name(i, k), BTreeSet::new())).collect();
    let mut cursor = 0;
    for ids in by_class {
        for ind in shuffled(ids, &mut rng) {
            let part = partitions.get_mut(&fold_name(cursor % k, k)).expect("fold exists");
            part.extend(manifest.individuals[&ind].image_ids.iter().cloned());
            cursor += 1;
        }
    }
    Ok(SplitPlan {
        mode: SplitMode::Ind,
        seed,
        partitions,
        provenance: Provenance::Kfold { k },
    })
}
