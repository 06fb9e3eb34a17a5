//! Input regions for descriptor extraction.
//!
//! Face and skin masks are produced by an external segmenter and travel as sidecar PNGs named
//! `<image_id>.mask.png`. Whether a mask describes the whole face or only the cheeks and nose is
//! decided by which directory the caller points at. When no segmenter output is available,
//! [`skin_mask_ycbcr`] is a chrominance-box fallback.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Image;

#[derive(Debug, Error)]
pub enum SegmentationError {
    #[error("mask {path}: {message}")]
    Unreadable { path: PathBuf, message: String },
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        image_w: u32,
        image_h: u32,
    },
    #[error("region {0:?} needs a mask")]
    MissingMask(RegionKind),
    #[error("mask selects no pixels")]
    EmptyRegion,
}

/// Which part of the picture a descriptor looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegionKind {
    /// Every pixel, background included.
    FullImage,
    /// Face without background (hair, beard and forehead kept).
    Face,
    /// Cheeks and nose only.
    SkinOnly,
}

impl RegionKind {
    pub fn needs_mask(self) -> bool {
        !matches!(self, RegionKind::FullImage)
    }
}

impl std::str::FromStr for RegionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "full_image" | "fi" => Ok(RegionKind::FullImage),
            "face" => Ok(RegionKind::Face),
            "skin" | "skin_only" => Ok(RegionKind::SkinOnly),
            other => Err(format!("unknown region {other:?} (expected full, face or skin)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width as usize * height as usize);
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![true; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn matches(&self, image: &Image) -> Result<(), SegmentationError> {
        if self.width != image.width() || self.height != image.height() {
            return Err(SegmentationError::DimensionMismatch {
                mask_w: self.width,
                mask_h: self.height,
                image_w: image.width(),
                image_h: image.height(),
            });
        }
        Ok(())
    }

    /// Write as an 8-bit grayscale PNG (255 selected, 0 otherwise).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), SegmentationError> {
        let path = path.as_ref();
        let raw = self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width, self.height, raw)
            .expect("dimensions match")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| SegmentationError::Unreadable {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }
}

/// Inclusive chrominance box for the fallback skin detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SkinBounds {
    pub cb_min: u8,
    pub cb_max: u8,
    pub cr_min: u8,
    pub cr_max: u8,
}

impl Default for SkinBounds {
    fn default() -> Self {
        Self {
            cb_min: 77,
            cb_max: 127,
            cr_min: 133,
            cr_max: 173,
        }
    }
}

impl SkinBounds {
    pub fn contains(&self, cb: u8, cr: u8) -> bool {
        (self.cb_min..=self.cb_max).contains(&cb) && (self.cr_min..=self.cr_max).contains(&cr)
    }
}

/// Full-range BT.601 YCbCr, rounded to the nearest integer.
pub fn rgb_to_ycbcr([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (r as f64, g as f64, b as f64);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cb = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    [y, cb, cr].map(|v| v.round().clamp(0.0, 255.0) as u8)
}

pub fn skin_mask_ycbcr(image: &Image, bounds: &SkinBounds) -> Mask {
    let bits = image
        .pixels()
        .iter()
        .map(|p| {
            let [_, cb, cr] = rgb_to_ycbcr(*p);
            bounds.contains(cb, cr)
        })
        .collect();
    Mask::new(image.width(), image.height(), bits)
}

/// Sidecar mask path for an image id.
pub fn mask_path(mask_dir: &Path, image_id: &str) -> PathBuf {
    mask_dir.join(format!("{image_id}.mask.png"))
}

/// Read a single-channel PNG mask; values strictly above 127 are selected.
pub fn load_external_mask(path: impl AsRef<Path>, image: &Image) -> Result<Mask, SegmentationError> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| SegmentationError::Unreadable {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = decoded.to_luma8();
    let (width, height) = gray.dimensions();
    let mask = Mask::new(width, height, gray.pixels().map(|p| p.0[0] > 127).collect());
    mask.matches(image)?;
    Ok(mask)
}

/// Pixels of one input region, with the source dimensions retained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPixels {
    pub pixels: Vec<[u8; 3]>,
    pub width: u32,
    pub height: u32,
}

impl RegionPixels {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Select a region's pixels. `FullImage` ignores any mask; the masked kinds require one.
pub fn extract_region(
    image: &Image,
    mask: Option<&Mask>,
    kind: RegionKind,
) -> Result<RegionPixels, SegmentationError> {
    let pixels = match kind {
        RegionKind::FullImage => image.pixels().to_vec(),
        RegionKind::Face | RegionKind::SkinOnly => {
            let mask = mask.ok_or(SegmentationError::MissingMask(kind))?;
            mask.matches(image)?;
            image
                .pixels()
                .iter()
                .zip(mask.bits())
                .filter(|(_, selected)| **selected)
                .map(|(p, _)| *p)
                .collect()
        }
    };
    if pixels.is_empty() {
        return Err(SegmentationError::EmptyRegion);
    }
    Ok(RegionPixels {
        pixels,
        width: image.width(),
        height: image.height(),
    })
}

/// The mask a spatial descriptor runs under: all-true for `FullImage`, the supplied mask
/// otherwise.
pub fn effective_mask(
    image: &Image,
    mask: Option<&Mask>,
    kind: RegionKind,
) -> Result<Mask, SegmentationError> {
    match kind {
        RegionKind::FullImage => Ok(Mask::full(image.width(), image.height())),
        _ => {
            let mask = mask.ok_or(SegmentationError::MissingMask(kind))?;
            mask.matches(image)?;
            if mask.count() == 0 {
                return Err(SegmentationError::EmptyRegion);
            }
            Ok(mask.clone())
        }
    }
}
