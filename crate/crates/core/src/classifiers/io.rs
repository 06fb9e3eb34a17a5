use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Model};
use crate::data::NUM_CLASSES;
use crate::descriptors::{FeatureLayout, FeatureRow, FeatureTable};

pub const MODEL_FILE_VERSION: i64 = 1;

#[derive(Serialize)]
struct ModelFileRef<'a> {
    version: i64,
    #[serde(flatten)]
    model: &'a Model,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<i64>,
}

fn io_err(path: &Path, source: std::io::Error) -> ClassifierError {
    ClassifierError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl ToString) -> ClassifierError {
    ClassifierError::Parse {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    let file = ModelFileRef {
        version: MODEL_FILE_VERSION,
        model,
    };
    let json = serde_json::to_string(&file).map_err(|e| parse_err(path, e))?;
    fs::write(path, json).map_err(|e| io_err(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ClassifierError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let probe: VersionProbe = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    match probe.version {
        Some(MODEL_FILE_VERSION) => {}
        Some(v) => return Err(ClassifierError::UnsupportedVersion(v)),
        None => return Err(parse_err(path, "missing \"version\" field")),
    }
    // Model ignores unknown keys, so the version field is skipped here.
    let model: Model = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    if model.classes != (1..=NUM_CLASSES as u8).collect::<Vec<_>>() {
        return Err(parse_err(path, "class set must be 1..10"));
    }
    if model.layout.hash() != model.layout_hash {
        return Err(parse_err(path, "layout does not match layout_hash"));
    }
    Ok(model)
}

/// Reads externally computed embeddings: `image_id` then a fixed number of real columns per
/// row. A first row starting with `image_id` is taken as a header.
pub fn ingest_embeddings(path: impl AsRef<Path>) -> Result<FeatureTable, ClassifierError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;
    let mut rows = Vec::new();
    let mut width: Option<usize> = None;
    for (n, record) in reader.records().enumerate() {
        let row_no = n + 1;
        let record = record.map_err(|e| parse_err(path, format!("row {row_no}: {e}")))?;
        if n == 0 && record.get(0) == Some("image_id") {
            continue;
        }
        let dims = record.len().saturating_sub(1);
        let expected = *width.get_or_insert(dims);
        if dims != expected {
            return Err(ClassifierError::Ragged {
                row: row_no,
                expected,
                got: dims,
            });
        }
        if dims == 0 {
            return Err(parse_err(path, format!("row {row_no}: no embedding values")));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(path, format!("row {row_no}: bad value {v:?}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(FeatureRow {
            image_id: record[0].to_string(),
            label: None,
            values,
        });
    }
    let dims = width.ok_or_else(|| parse_err(path, "no embedding rows"))?;
    FeatureTable::from_rows(FeatureLayout::embedding(dims), rows).map_err(|e| parse_err(path, e))
}
