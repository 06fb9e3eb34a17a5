//! Manifest-wide descriptor extraction: image loading, mask lookup and feature tables.

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_image, DatasetManifest, Image, ImageRecord};
use crate::descriptors::{feature_vector, DescriptorConfig, DescriptorError, FeatureRow, FeatureTable};
use crate::segmentation::{load_external_mask, mask_path, skin_mask_ycbcr, Mask, RegionKind, SkinBounds};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    pub region: RegionKind,
    pub descriptor: DescriptorConfig,
    /// Directory of `<image_id>.mask.png` files for the masked regions.
    pub mask_dir: Option<PathBuf>,
    /// Build a YCbCr skin mask when no mask file exists.
    pub ycbcr_fallback: bool,
    pub skin_bounds: SkinBounds,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            region: RegionKind::FullImage,
            descriptor: DescriptorConfig::default(),
            mask_dir: None,
            ycbcr_fallback: false,
            skin_bounds: SkinBounds::default(),
        }
    }
}

/// An image that produced no feature vector, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub image_id: String,
    pub reason: String,
}

/// Where pixels and masks come from.
pub trait ImageSource: Sync {
    fn image(&self, manifest: &DatasetManifest, record: &ImageRecord) -> Result<Image, String>;

    /// An explicit mask for the record, if this source has one.
    fn mask(&self, record: &ImageRecord, image: &Image) -> Result<Option<Mask>, String>;
}

/// Images from the manifest's paths; masks from `mask_dir`.
#[derive(Debug, Clone, Default)]
pub struct FsSource {
    pub mask_dir: Option<PathBuf>,
}

impl FsSource {
    pub fn new(mask_dir: Option<PathBuf>) -> Self {
        Self { mask_dir }
    }
}

impl ImageSource for FsSource {
    fn image(&self, manifest: &DatasetManifest, record: &ImageRecord) -> Result<Image, String> {
        load_image(manifest.image_path(record)).map_err(|e| e.to_string())
    }

    fn mask(&self, record: &ImageRecord, image: &Image) -> Result<Option<Mask>, String> {
        let Some(dir) = &self.mask_dir else { return Ok(None) };
        let path = mask_path(dir, &record.image_id);
        if !path.exists() {
            return Ok(None);
        }
        load_external_mask(&path, image).map(Some).map_err(|e| e.to_string())
    }
}

/// In-memory images keyed by image id; used by tests and synthetic experiments.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub images: HashMap<String, Image>,
    pub masks: HashMap<String, Mask>,
}

impl ImageSource for MemorySource {
    fn image(&self, _: &DatasetManifest, record: &ImageRecord) -> Result<Image, String> {
        self.images
            .get(&record.image_id)
            .cloned()
            .ok_or_else(|| format!("no pixels for {}", record.image_id))
    }

    fn mask(&self, record: &ImageRecord, _: &Image) -> Result<Option<Mask>, String> {
        Ok(self.masks.get(&record.image_id).cloned())
    }
}

/// Feature values for one record, or the reason it was skipped.
pub fn extract_one(
    manifest: &DatasetManifest,
    source: &dyn ImageSource,
    record: &ImageRecord,
    cfg: &ExtractConfig,
) -> Result<Vec<f64>, String> {
    let image = source.image(manifest, record)?;
    let mask = if cfg.region.needs_mask() {
        match source.mask(record, &image)? {
            Some(m) => Some(m),
            None if cfg.ycbcr_fallback => Some(skin_mask_ycbcr(&image, &cfg.skin_bounds)),
            None => return Err(format!("missing mask for region {:?}", cfg.region)),
        }
    } else {
        None
    };
    feature_vector(&image, mask.as_ref(), cfg.region, &cfg.descriptor)
        .map(|v| v.values)
        .map_err(|e| e.to_string())
}

/// Extracts every image of `manifest` in parallel. Rows keep manifest order; failures are
/// returned as skips rather than errors.
pub fn extract_table(
    manifest: &DatasetManifest,
    source: &dyn ImageSource,
    cfg: &ExtractConfig,
) -> Result<(FeatureTable, Vec<Skipped>), DescriptorError> {
    cfg.descriptor.validate()?;
    let records: Vec<&ImageRecord> = manifest.images.values().collect();
    let results: Vec<Result<FeatureRow, Skipped>> = records
        .par_iter()
        .map(|rec| {
            extract_one(manifest, source, rec, cfg)
                .map(|values| FeatureRow {
                    image_id: rec.image_id.clone(),
                    label: manifest.label_of_image(&rec.image_id),
                    values,
                })
                .map_err(|reason| Skipped {
                    image_id: rec.image_id.clone(),
                    reason,
                })
        })
        .collect();
    let mut table = FeatureTable::new(cfg.descriptor.layout());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(row) => table.push(row)?,
            Err(s) => {
                log::warn!("skipping {}: {}", s.image_id, s.reason);
                skipped.push(s);
            }
        }
    }
    Ok((table, skipped))
}
