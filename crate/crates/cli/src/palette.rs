//! Swatch palette and exemplar images for the annotation reference panel.
//!
//! File format (JSON):
//! `{"swatches": [{"mst": 1, "hex": "#f6ede4"}, ...], "exemplar_images": {"1": ["ex/a.jpg"]}}`.
//! Exemplar paths are relative to the palette file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use skintone_core::audit::MST_PALETTE;
use skintone_core::{MstLabel, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Swatch {
    pub mst: u8,
    pub hex: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PaletteFile {
    swatches: Vec<Swatch>,
    #[serde(default)]
    exemplar_images: BTreeMap<String, Vec<PathBuf>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    /// Scale order, 1 through 10.
    pub swatches: Vec<Swatch>,
    /// Resolved exemplar image paths per tone.
    pub exemplar_images: BTreeMap<u8, Vec<PathBuf>>,
}

impl Default for Palette {
    fn default() -> Self {
        Self {
            swatches: MST_PALETTE
                .iter()
                .enumerate()
                .map(|(i, hex)| Swatch { mst: i as u8 + 1, hex: hex.to_string() })
                .collect(),
            exemplar_images: BTreeMap::new(),
        }
    }
}

fn valid_hex(hex: &str) -> bool {
    hex.len() == 7 && hex.starts_with('#') && hex[1..].chars().all(|c| c.is_ascii_hexdigit())
}

impl Palette {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading palette {}", path.display()))?;
        let file: PaletteFile =
            serde_json::from_str(&text).with_context(|| format!("parsing palette {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut swatches = file.swatches;
        ensure!(swatches.len() == NUM_CLASSES, "palette has {} swatches, expected {NUM_CLASSES}", swatches.len());
        swatches.sort_by_key(|s| s.mst);
        for (i, s) in swatches.iter().enumerate() {
            ensure!(s.mst as usize == i + 1, "palette tones must be 1..=10 exactly once");
            ensure!(valid_hex(&s.hex), "swatch {} has invalid color {:?}", s.mst, s.hex);
        }
        let mut exemplar_images = BTreeMap::new();
        for (key, paths) in file.exemplar_images {
            let tone = key
                .parse::<i64>()
                .ok()
                .and_then(|v| MstLabel::new(v).ok())
                .with_context(|| format!("exemplar key {key:?} is not a tone 1..10"))?;
            let mut resolved = Vec::new();
            for p in paths {
                let full = if p.is_absolute() { p } else { base.join(p) };
                if !full.is_file() {
                    bail!("missing exemplar image {}", full.display());
                }
                resolved.push(full);
            }
            exemplar_images.insert(tone.value(), resolved);
        }
        Ok(Self { swatches, exemplar_images })
    }

    pub fn hex_array(&self) -> [String; NUM_CLASSES] {
        std::array::from_fn(|i| self.swatches[i].hex.clone())
    }
}
