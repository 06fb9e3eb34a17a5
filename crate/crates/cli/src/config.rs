//! Toolkit configuration: one JSON or TOML document, from `--config` or `STW_CONFIG`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use skintone_core::augmentation::AugmentConfig;
use skintone_core::descriptors::DescriptorConfig;
use skintone_core::segmentation::SkinBounds;

pub const CONFIG_ENV: &str = "STW_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolkitConfig {
    pub descriptor: DescriptorConfig,
    pub augment: AugmentConfig,
    pub skin_bounds: SkinBounds,
    /// Swatch palette and exemplar image file (JSON) for the annotation server.
    pub palette: Option<PathBuf>,
    pub port: u16,
    /// Directories searched for relative input paths that do not exist as given.
    pub data_roots: Vec<PathBuf>,
    /// Manifest used when a command gets no `--manifest`.
    pub manifest: Option<PathBuf>,
    /// Static guidance text shown by the annotation UI.
    pub guidance: Option<String>,
}

impl Default for ToolkitConfig {
    fn default() -> Self {
        Self {
            descriptor: DescriptorConfig::default(),
            augment: AugmentConfig::default(),
            skin_bounds: SkinBounds::default(),
            palette: None,
            port: 8080,
            data_roots: Vec::new(),
            manifest: None,
            guidance: None,
        }
    }
}

impl ToolkitConfig {
    /// Load from an explicit path, else from `STW_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        match explicit.map(Path::to_path_buf).or(from_env) {
            Some(path) => Self::load(&path),
            None => Ok(Self::default()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg: Self = if is_toml {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.descriptor.validate()?;
        self.augment.validate()?;
        let b = &self.skin_bounds;
        if b.cb_min > b.cb_max || b.cr_min > b.cr_max {
            bail!("skin_bounds minimum exceeds maximum");
        }
        if self.port == 0 {
            bail!("port must be non-zero");
        }
        Ok(())
    }

    /// `path` itself when it exists, otherwise the first data root containing it.
    pub fn locate(&self, path: &Path) -> PathBuf {
        if path.is_absolute() || path.exists() {
            return path.to_path_buf();
        }
        self.data_roots
            .iter()
            .map(|root| root.join(path))
            .find(|p| p.exists())
            .unwrap_or_else(|| path.to_path_buf())
    }
}
