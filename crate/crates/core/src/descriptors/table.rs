use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::features::{FeatureLayout, FeatureVector};
use super::DescriptorError;
use crate::data::{DatasetManifest, MstLabel};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub image_id: String,
    pub label: Option<MstLabel>,
    pub values: Vec<f64>,
}

/// Feature vectors for a set of images sharing one layout.
///
/// On disk this is a CSV with header `image_id,label,f0..f{N-1}` (empty label for unlabeled
/// rows) plus a `<file>.layout.json` sidecar describing the columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub layout: Arc<FeatureLayout>,
    pub rows: Vec<FeatureRow>,
    index: HashMap<String, usize>,
}

impl FeatureTable {
    pub fn new(layout: FeatureLayout) -> Self {
        Self {
            layout: Arc::new(layout),
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn from_rows(layout: FeatureLayout, rows: Vec<FeatureRow>) -> Result<Self, DescriptorError> {
        let mut table = Self::new(layout);
        for row in rows {
            table.push(row)?;
        }
        Ok(table)
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<(), DescriptorError> {
        if row.values.len() != self.layout.len() {
            return Err(DescriptorError::Parse {
                path: PathBuf::new(),
                line: self.rows.len() + 1,
                message: format!(
                    "row {:?} has {} values, layout expects {}",
                    row.image_id,
                    row.values.len(),
                    self.layout.len()
                ),
            });
        }
        if self.index.contains_key(&row.image_id) {
            return Err(DescriptorError::DuplicateRow(row.image_id));
        }
        self.index.insert(row.image_id.clone(), self.rows.len());
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&FeatureRow> {
        self.index.get(image_id).map(|&i| &self.rows[i])
    }

    pub fn vector(&self, image_id: &str) -> Option<FeatureVector> {
        self.get(image_id)
            .map(|row| FeatureVector::new(row.values.clone(), self.layout.clone()))
    }

    /// Fill labels from a manifest, keyed by image id. Rows unknown to the manifest keep
    /// their current label.
    pub fn attach_labels(&mut self, manifest: &DatasetManifest) {
        for row in &mut self.rows {
            if let Some(label) = manifest.label_of_image(&row.image_id) {
                row.label = Some(label);
            }
        }
    }

    pub fn layout_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".layout.json");
        PathBuf::from(name)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DescriptorError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| DescriptorError::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, 0, e))?;
        let mut header = vec!["image_id".to_string(), "label".to_string()];
        header.extend((0..self.layout.len()).map(|i| format!("f{i}")));
        writer.write_record(&header).map_err(|e| csv_err(path, 1, e))?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut record = vec![
                row.image_id.clone(),
                row.label.map(|l| l.to_string()).unwrap_or_default(),
            ];
            // `Display` for f64 prints the shortest string that parses back to the same bits.
            record.extend(row.values.iter().map(|v| v.to_string()));
            writer.write_record(&record).map_err(|e| csv_err(path, i + 2, e))?;
        }
        writer.flush().map_err(io)?;
        let layout_json = serde_json::to_string_pretty(&*self.layout).expect("layout serializes");
        let sidecar = Self::layout_path(path);
        std::fs::write(&sidecar, layout_json).map_err(|e| DescriptorError::Io {
            path: sidecar,
            source: e,
        })
    }

    /// Read a feature CSV. Without a layout sidecar the columns are treated as an opaque
    /// embedding of their count.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DescriptorError> {
        let path = path.as_ref();
        let sidecar = Self::layout_path(path);
        let layout = if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar).map_err(|e| DescriptorError::Io {
                path: sidecar.clone(),
                source: e,
            })?;
            Some(
                serde_json::from_str::<FeatureLayout>(&text).map_err(|e| DescriptorError::Parse {
                    path: sidecar.clone(),
                    line: e.line(),
                    message: e.to_string(),
                })?,
            )
        } else {
            None
        };
        let file = std::fs::File::open(path).map_err(|e| DescriptorError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers = reader.headers().map_err(|e| csv_err(path, 1, e))?.clone();
        if headers.get(0) != Some("image_id") || headers.get(1) != Some("label") {
            return Err(DescriptorError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "header must start with image_id,label".into(),
            });
        }
        let width = headers.len() - 2;
        let layout = layout.unwrap_or_else(|| FeatureLayout::embedding(width));
        if layout.len() != width {
            return Err(DescriptorError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("{width} feature columns but layout has {}", layout.len()),
            });
        }
        let mut table = Self::new(layout);
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| csv_err(path, line, e))?;
            let parse_err = |message: String| DescriptorError::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            let label = match record.get(1).unwrap_or("").trim() {
                "" => None,
                raw => {
                    let value: i64 = raw.parse().map_err(|_| parse_err(format!("label {raw:?}")))?;
                    Some(MstLabel::new(value).map_err(|e| parse_err(e.to_string()))?)
                }
            };
            let values = record
                .iter()
                .skip(2)
                .map(|v| v.trim().parse::<f64>().map_err(|_| parse_err(format!("value {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            table.push(FeatureRow {
                image_id: record.get(0).unwrap_or("").to_string(),
                label,
                values,
            })?;
        }
        Ok(table)
    }
}

pub(crate) fn csv_err(path: &Path, line: usize, e: csv::Error) -> DescriptorError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(line);
    DescriptorError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}
