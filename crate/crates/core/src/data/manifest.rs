use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DataError, MstLabel, NUM_CLASSES};

/// One line of a manifest file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub path: PathBuf,
    pub individual_id: String,
    pub source_dataset: String,
    pub label: Option<MstLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Individual {
    pub individual_id: String,
    pub label: Option<MstLabel>,
    /// Sorted image ids.
    pub image_ids: Vec<String>,
}

/// Images grouped by individual.
///
/// Labels live on the individual: every image of a person carries the same tone. A per-image
/// label that disagrees with another image of the same individual is rejected when the manifest
/// is built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub individuals: BTreeMap<String, Individual>,
    pub images: BTreeMap<String, ImageRecord>,
    /// Directory relative image paths are resolved against. Not part of equality semantics of
    /// the records themselves but kept so a loaded manifest can find its images.
    pub base_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn from_records(
        name: impl Into<String>,
        records: impl IntoIterator<Item = ImageRecord>,
    ) -> Result<Self, DataError> {
        let mut images = BTreeMap::new();
        let mut individuals: BTreeMap<String, Individual> = BTreeMap::new();
        for record in records {
            if record.path.as_os_str().is_empty() {
                return Err(DataError::EmptyPath(record.image_id));
            }
            let individual = individuals
                .entry(record.individual_id.clone())
                .or_insert_with(|| Individual {
                    individual_id: record.individual_id.clone(),
                    label: None,
                    image_ids: Vec::new(),
                });
            match (individual.label, record.label) {
                (Some(first), Some(second)) if first != second => {
                    return Err(DataError::ConflictingLabels {
                        individual_id: record.individual_id,
                        first,
                        second,
                    })
                }
                (None, Some(label)) => individual.label = Some(label),
                _ => {}
            }
            individual.image_ids.push(record.image_id.clone());
            if images.contains_key(&record.image_id) {
                return Err(DataError::DuplicateImage(record.image_id));
            }
            images.insert(record.image_id.clone(), record);
        }
        for individual in individuals.values_mut() {
            individual.image_ids.sort();
        }
        let manifest = Self {
            name: name.into(),
            individuals,
            images,
            base_dir: None,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Full integrity scan: every image maps to exactly one individual and back.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = BTreeSet::new();
        for individual in self.individuals.values() {
            if individual.image_ids.is_empty() {
                return Err(DataError::Integrity(format!(
                    "individual {:?} has no images",
                    individual.individual_id
                )));
            }
            for image_id in &individual.image_ids {
                let record = self.images.get(image_id).ok_or_else(|| {
                    DataError::Integrity(format!(
                        "individual {:?} references unknown image {image_id:?}",
                        individual.individual_id
                    ))
                })?;
                if record.individual_id != individual.individual_id {
                    return Err(DataError::Integrity(format!(
                        "image {image_id:?} belongs to {:?} but is listed under {:?}",
                        record.individual_id, individual.individual_id
                    )));
                }
                if let Some(label) = record.label {
                    if individual.label != Some(label) {
                        return Err(DataError::Integrity(format!(
                            "image {image_id:?} label {label} differs from its individual's"
                        )));
                    }
                }
                if !seen.insert(image_id.as_str()) {
                    return Err(DataError::Integrity(format!(
                        "image {image_id:?} listed under two individuals"
                    )));
                }
            }
        }
        if seen.len() != self.images.len() {
            return Err(DataError::Integrity(
                "some images are not attached to any individual".into(),
            ));
        }
        Ok(())
    }

    /// Load a JSONL manifest, one [`ImageRecord`] per line. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut records = Vec::new();
        for (index, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| DataError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ImageRecord =
                serde_json::from_str(&line).map_err(|e| DataError::Parse {
                    path: path.to_path_buf(),
                    line: index + 1,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut manifest = Self::from_records(name, records)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        Ok(manifest)
    }

    /// Write the manifest as JSONL, images ordered by id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut out = BufWriter::new(file);
        for record in self.images.values() {
            let line = serde_json::to_string(record).expect("records serialize");
            writeln!(out, "{line}").map_err(|e| DataError::io(path, e))?;
        }
        out.flush().map_err(|e| DataError::io(path, e))
    }

    /// Import a FairFace-style CSV label table.
    ///
    /// Recognized columns: `file` (or `path`), optional `image_id` (defaults to `file`),
    /// optional `individual_id` (defaults to the image id, i.e. one person per image) and
    /// optional `label`/`mst` (empty means unlabeled). Other columns are ignored.
    pub fn import_csv(
        path: impl AsRef<Path>,
        name: impl Into<String>,
        source_dataset: &str,
    ) -> Result<Self, DataError> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, 0, e))?;
        let headers = reader
            .headers()
            .map_err(|e| csv_error(path, 1, e))?
            .clone();
        let column = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
        let file_col = column(&["file", "path"]).ok_or_else(|| DataError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing `file` or `path` column".into(),
        })?;
        let id_col = column(&["image_id"]);
        let individual_col = column(&["individual_id"]);
        let label_col = column(&["label", "mst"]);

        let mut records = Vec::new();
        for (index, row) in reader.records().enumerate() {
            let line = index + 2;
            let row = row.map_err(|e| csv_error(path, line, e))?;
            let field = |col: usize| row.get(col).unwrap_or("").trim().to_string();
            let file = field(file_col);
            let image_id = id_col.map(field).unwrap_or_else(|| file.clone());
            let individual_id = individual_col
                .map(field)
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| image_id.clone());
            let label = match label_col.map(field).filter(|s| !s.is_empty()) {
                None => None,
                Some(raw) => {
                    let value: i64 = raw.parse().map_err(|_| DataError::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: format!("label {raw:?} is not an integer"),
                    })?;
                    Some(MstLabel::new(value).map_err(|e| DataError::Parse {
                        path: path.to_path_buf(),
                        line,
                        message: e.to_string(),
                    })?)
                }
            };
            records.push(ImageRecord {
                image_id,
                path: PathBuf::from(file),
                individual_id,
                source_dataset: source_dataset.to_string(),
                label,
            });
        }
        let mut manifest = Self::from_records(name, records)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        Ok(manifest)
    }

    /// Absolute (or base-relative) path of an image.
    pub fn image_path(&self, record: &ImageRecord) -> PathBuf {
        match &self.base_dir {
            Some(base) if record.path.is_relative() => base.join(&record.path),
            _ => record.path.clone(),
        }
    }

    pub fn label_of_image(&self, image_id: &str) -> Option<MstLabel> {
        let record = self.images.get(image_id)?;
        self.individuals.get(&record.individual_id)?.label
    }

    /// Individuals that carry a label, in id order.
    pub fn labeled_individuals(&self) -> impl Iterator<Item = &Individual> {
        self.individuals.values().filter(|i| i.label.is_some())
    }

    /// Labeled individuals bucketed by class, each bucket sorted by id.
    pub fn individuals_by_class(&self) -> [Vec<&Individual>; NUM_CLASSES] {
        let mut buckets: [Vec<&Individual>; NUM_CLASSES] = Default::default();
        for individual in self.labeled_individuals() {
            buckets[individual.label.expect("filtered").index()].push(individual);
        }
        buckets
    }

    /// Number of images per class over labeled individuals.
    pub fn image_counts_by_class(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for individual in self.labeled_individuals() {
            counts[individual.label.expect("filtered").index()] += individual.image_ids.len();
        }
        counts
    }

    /// Sub-manifest containing only the given images. Individuals left without images are
    /// dropped.
    pub fn restrict<'a>(&self, image_ids: impl IntoIterator<Item = &'a String>) -> Self {
        let keep: BTreeSet<&String> = image_ids.into_iter().collect();
        let images: BTreeMap<String, ImageRecord> = self
            .images
            .iter()
            .filter(|(id, _)| keep.contains(id))
            .map(|(id, r)| (id.clone(), r.clone()))
            .collect();
        let individuals = self
            .individuals
            .iter()
            .filter_map(|(id, individual)| {
                let image_ids: Vec<String> = individual
                    .image_ids
                    .iter()
                    .filter(|i| images.contains_key(*i))
                    .cloned()
                    .collect();
                (!image_ids.is_empty()).then(|| {
                    (
                        id.clone(),
                        Individual {
                            individual_id: id.clone(),
                            label: individual.label,
                            image_ids,
                        },
                    )
                })
            })
            .collect();
        Self {
            name: self.name.clone(),
            individuals,
            images,
            base_dir: self.base_dir.clone(),
        }
    }

    /// Sub-manifest without the given individuals.
    pub fn without_individuals(&self, individual_ids: &BTreeSet<String>) -> Self {
        let keep: Vec<&String> = self
            .images
            .values()
            .filter(|r| !individual_ids.contains(&r.individual_id))
            .map(|r| &r.image_id)
            .collect();
        self.restrict(keep)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}
