use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::color::Channel;
use super::histogram::{channel_histogram, gch, moments_from_histogram, rebin, Histogram, HistogramKind};
use super::spatial::{bic, ccv};
use super::DescriptorError;
use crate::data::Image;
use crate::segmentation::{effective_mask, extract_region, Mask, RegionKind};

/// Allowed re-binning targets.
pub const BIN_CHOICES: [usize; 4] = [128, 64, 32, 16];

/// Moment statistics appended per scalar channel.
pub const MOMENTS_PER_CHANNEL: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorConfig {
    /// Target bins per histogram; one of 128, 64, 32, 16.
    pub bins: usize,
    /// CCV coherence threshold as a percentage of the region area.
    pub tau_percent: f64,
    /// Fixed CCV threshold in pixels; overrides `tau_percent` when set.
    pub tau: Option<u32>,
    /// Divide each histogram block by its own mass.
    pub normalize: bool,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            bins: 16,
            tau_percent: 1.0,
            tau: None,
            normalize: true,
        }
    }
}

impl DescriptorConfig {
    pub fn with_bins(bins: usize) -> Self {
        Self {
            bins,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        if !BIN_CHOICES.contains(&self.bins) {
            return Err(DescriptorError::InvalidBins(self.bins));
        }
        if self.tau == Some(0) || !(self.tau_percent.is_finite() && self.tau_percent >= 0.0) {
            return Err(DescriptorError::InvalidTau);
        }
        Ok(())
    }

    /// CCV threshold for a region of `area` pixels: `max(1, ceil(tau_percent% of area))`
    /// unless a fixed value is configured.
    pub fn tau_for_area(&self, area: usize) -> u32 {
        match self.tau {
            Some(t) => t,
            None => ((self.tau_percent * area as f64 / 100.0).ceil() as u32).max(1),
        }
    }

    /// Bins a histogram of this kind ends up with.
    pub fn bins_for(&self, kind: HistogramKind) -> usize {
        self.bins.min(kind.native_bins())
    }

    pub fn layout(&self) -> FeatureLayout {
        let mut blocks: Vec<LayoutBlock> = HistogramKind::LAYOUT
            .iter()
            .map(|k| LayoutBlock {
                name: k.name(),
                len: self.bins_for(*k),
            })
            .collect();
        blocks.extend(Channel::ALL.iter().map(|c| LayoutBlock {
            name: format!("moments:{c}"),
            len: MOMENTS_PER_CHANNEL,
        }));
        let tau = match self.tau {
            Some(t) => format!("tau={t}"),
            None => format!("tau_percent={}", self.tau_percent),
        };
        FeatureLayout {
            kind: format!(
                "color-descriptors;bins={};{tau};normalize={}",
                self.bins, self.normalize
            ),
            blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayoutBlock {
    pub name: String,
    pub len: usize,
}

/// Names and widths of the blocks that make up a feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub kind: String,
    pub blocks: Vec<LayoutBlock>,
}

impl FeatureLayout {
    /// Layout of an externally computed embedding with `dims` columns.
    pub fn embedding(dims: usize) -> Self {
        Self {
            kind: "embedding".into(),
            blocks: vec![LayoutBlock {
                name: "embedding".into(),
                len: dims,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stable 64-bit fingerprint rendered as hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("layout serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Offset range of a block by name.
    pub fn block_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut start = 0;
        for block in &self.blocks {
            if block.name == name {
                return Some(start..start + block.len);
            }
            start += block.len;
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, layout: Arc<FeatureLayout>) -> Self {
        debug_assert_eq!(values.len(), layout.len());
        Self { values, layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All eleven native-resolution histograms of an image region, in layout order.
pub fn descriptor_histograms(
    image: &Image,
    mask: Option<&Mask>,
    kind: RegionKind,
    config: &DescriptorConfig,
) -> Result<Vec<Histogram>, DescriptorError> {
    let region = extract_region(image, mask, kind)?;
    let spatial_mask = effective_mask(image, mask, kind)?;
    let mut out = Vec::with_capacity(HistogramKind::LAYOUT.len());
    for channel in Channel::ALL {
        out.push(channel_histogram(&region, channel)?);
    }
    out.push(gch(&region)?);
    let (coherent, incoherent) = ccv(image, &spatial_mask, config.tau_for_area(region.len()))?;
    out.push(coherent);
    out.push(incoherent);
    let (border, interior) = bic(image, &spatial_mask)?;
    out.push(border);
    out.push(interior);
    Ok(out)
}

/// Build the descriptor feature vector for one image region.
///
/// Histograms are re-binned to `config.bins` (64-color descriptors stay at 64 when 128 is
/// requested) and, with `normalize`, divided by their own mass; a block with no mass (e.g. no
/// border pixels) stays all-zero. Moments of the six scalar channels follow, unnormalized.
pub fn feature_vector(
    image: &Image,
    mask: Option<&Mask>,
    kind: RegionKind,
    config: &DescriptorConfig,
) -> Result<FeatureVector, DescriptorError> {
    config.validate()?;
    let histograms = descriptor_histograms(image, mask, kind, config)?;
    let layout = Arc::new(config.layout());
    let mut values = Vec::with_capacity(layout.len());
    for hist in &histograms {
        let rebinned = rebin(hist, config.bins_for(hist.kind))?;
        let total = rebinned.total();
        if config.normalize && total > 0 {
            let total = total as f64;
            values.extend(rebinned.bins.iter().map(|&c| c as f64 / total));
        } else {
            values.extend(rebinned.bins.iter().map(|&c| c as f64));
        }
    }
    for hist in &histograms[..Channel::ALL.len()] {
        values.extend(moments_from_histogram(hist).to_array());
    }
    Ok(FeatureVector::new(values, layout))
}
