use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, MstLabel};
use crate::metrics::RatingsMatrix;

/// One annotator's tone for one individual.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub individual_id: String,
    pub annotator_id: String,
    pub label: MstLabel,
    /// UTC seconds.
    pub timestamp: i64,
}

/// Read a JSONL label file. Duplicate (individual, annotator) pairs are rejected.
pub fn load_label_file(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut records = Vec::new();
    let mut pairs = BTreeSet::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LabelRecord = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: index + 1,
            message: e.to_string(),
        })?;
        if !pairs.insert((record.individual_id.clone(), record.annotator_id.clone())) {
            return Err(DataError::DuplicateRating {
                individual_id: record.individual_id,
                annotator_id: record.annotator_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn save_label_file(path: impl AsRef<Path>, records: &[LabelRecord]) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("label records serialize");
        writeln!(out, "{line}").map_err(|e| DataError::io(path, e))?;
    }
    out.flush().map_err(|e| DataError::io(path, e))
}

/// Merge label files into an individuals × annotators matrix.
///
/// Subjects and raters are sorted by id. An (individual, annotator) pair appearing twice,
/// within or across files, is an error. Use [`RatingsMatrix::co_rated`] for the subset that
/// agreement statistics run on.
pub fn merge_label_files<P: AsRef<Path>>(files: &[P]) -> Result<RatingsMatrix, DataError> {
    if files.is_empty() {
        return Err(DataError::NoLabelFiles);
    }
    let mut cells: BTreeMap<(String, String), MstLabel> = BTreeMap::new();
    for file in files {
        for record in load_label_file(file)? {
            let key = (record.individual_id.clone(), record.annotator_id.clone());
            if cells.insert(key, record.label).is_some() {
                return Err(DataError::DuplicateRating {
                    individual_id: record.individual_id,
                    annotator_id: record.annotator_id,
                });
            }
        }
    }
    Ok(RatingsMatrix::from_cells(
        cells.into_iter().map(|((s, r), l)| (s, r, l)),
    ))
}
