use serde::{Deserialize, Serialize};

use super::color::{quantize_color, scalar_channel, Channel, QUANTIZED_COLORS};
use super::DescriptorError;
use crate::segmentation::RegionPixels;

/// What a histogram counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HistogramKind {
    Channel(Channel),
    Gch,
    Coherent,
    Incoherent,
    Border,
    Interior,
}

impl HistogramKind {
    /// Descriptor-vector order.
    pub const LAYOUT: [HistogramKind; 11] = [
        HistogramKind::Channel(Channel::R),
        HistogramKind::Channel(Channel::G),
        HistogramKind::Channel(Channel::B),
        HistogramKind::Channel(Channel::LabL),
        HistogramKind::Channel(Channel::YcbcrY),
        HistogramKind::Channel(Channel::HsvV),
        HistogramKind::Gch,
        HistogramKind::Coherent,
        HistogramKind::Incoherent,
        HistogramKind::Border,
        HistogramKind::Interior,
    ];

    pub fn native_bins(self) -> usize {
        match self {
            HistogramKind::Channel(_) => 256,
            _ => QUANTIZED_COLORS,
        }
    }

    pub fn name(self) -> String {
        match self {
            HistogramKind::Channel(c) => c.name().to_string(),
            HistogramKind::Gch => "GCH".into(),
            HistogramKind::Coherent => "Coherent".into(),
            HistogramKind::Incoherent => "Incoherent".into(),
            HistogramKind::Border => "Border".into(),
            HistogramKind::Interior => "Interior".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub kind: HistogramKind,
    pub bins: Vec<u64>,
}

impl Histogram {
    pub fn zeros(kind: HistogramKind) -> Self {
        Self {
            kind,
            bins: vec![0; kind.native_bins()],
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

pub fn channel_histogram(region: &RegionPixels, channel: Channel) -> Result<Histogram, DescriptorError> {
    if region.is_empty() {
        return Err(DescriptorError::EmptyRegion);
    }
    let mut hist = Histogram::zeros(HistogramKind::Channel(channel));
    for p in &region.pixels {
        hist.bins[scalar_channel(*p, channel) as usize] += 1;
    }
    Ok(hist)
}

/// Global color histogram over the quantized palette.
pub fn gch(region: &RegionPixels) -> Result<Histogram, DescriptorError> {
    if region.is_empty() {
        return Err(DescriptorError::EmptyRegion);
    }
    let mut hist = Histogram::zeros(HistogramKind::Gch);
    for p in &region.pixels {
        hist.bins[quantize_color(*p) as usize] += 1;
    }
    Ok(hist)
}

/// Merge adjacent bins down to `target` bins. Identity when `target` equals the native count.
pub fn rebin(hist: &Histogram, target: usize) -> Result<Histogram, DescriptorError> {
    let native = hist.len();
    if target == 0 || target > native || !native.is_multiple_of(target) {
        return Err(DescriptorError::NonDivisible { native, target });
    }
    let group = native / target;
    Ok(Histogram {
        kind: hist.kind,
        bins: hist.bins.chunks(group).map(|c| c.iter().sum()).collect(),
    })
}

/// Population moments of a scalar channel. Skewness and excess kurtosis are 0 for a constant
/// region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl Moments {
    pub fn to_array(self) -> [f64; 4] {
        [self.mean, self.variance, self.skewness, self.kurtosis]
    }
}

pub fn moments(region: &RegionPixels, channel: Channel) -> Result<Moments, DescriptorError> {
    Ok(moments_from_histogram(&channel_histogram(region, channel)?))
}

/// Moments of the values a 256-bin channel histogram tallies.
pub fn moments_from_histogram(hist: &Histogram) -> Moments {
    let n = hist.total() as f64;
    let weighted = hist.bins.iter().enumerate().map(|(v, &c)| (v as f64, c as f64));
    let mean = weighted.clone().map(|(v, c)| v * c).sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for (v, c) in weighted {
        if c == 0.0 {
            continue;
        }
        let d = v - mean;
        let d2 = d * d;
        m2 += c * d2;
        m3 += c * d2 * d;
        m4 += c * d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 == 0.0 {
        return Moments {
            mean,
            variance: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
        };
    }
    Moments {
        mean,
        variance: m2,
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2) - 3.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(pixels: Vec<[u8; 3]>) -> RegionPixels {
        let n = pixels.len() as u32;
        RegionPixels { pixels, width: n, height: 1 }
    }

    #[test]
    fn white_region_red_channel() {
        let hist = channel_histogram(&region(vec![[255; 3]; 16]), Channel::R).unwrap();
        assert_eq!(hist.bins[255], 16);
        assert_eq!(hist.total(), 16);
    }

    #[test]
    fn empty_region_errors() {
        let empty = region(vec![]);
        assert!(matches!(channel_histogram(&empty, Channel::G), Err(DescriptorError::EmptyRegion)));
        assert!(matches!(gch(&empty), Err(DescriptorError::EmptyRegion)));
        assert!(matches!(moments(&empty, Channel::B), Err(DescriptorError::EmptyRegion)));
    }

    #[test]
    fn gch_uniform_color() {
        let c = [200, 100, 30];
        let hist = gch(&region(vec![c; 9])).unwrap();
        assert_eq!(hist.bins[quantize_color(c) as usize], 9);
        assert_eq!(hist.total(), 9);
    }

    #[test]
    fn constant_moments_are_degenerate() {
        let m = moments(&region(vec![[7, 7, 7]; 5]), Channel::R).unwrap();
        assert_eq!(m, Moments { mean: 7.0, variance: 0.0, skewness: 0.0, kurtosis: 0.0 });
    }

    #[test]
    fn two_point_moments() {
        let m = moments(&region(vec![[0; 3], [255; 3], [0; 3], [255; 3]]), Channel::R).unwrap();
        assert_eq!(m.mean, 127.5);
        assert_eq!(m.skewness, 0.0);
        assert_eq!(m.variance, 127.5 * 127.5);
        assert!((m.kurtosis - (-2.0)).abs() < 1e-12);
    }

    #[test]
    fn rebin_examples() {
        let ones = Histogram { kind: HistogramKind::Channel(Channel::R), bins: vec![1; 256] };
        let r = rebin(&ones, 16).unwrap();
        assert_eq!(r.bins, vec![16; 16]);
        let g = Histogram { kind: HistogramKind::Gch, bins: (0..64).collect() };
        assert_eq!(rebin(&g, 64).unwrap(), g);
        assert!(matches!(rebin(&g, 128), Err(DescriptorError::NonDivisible { native: 64, target: 128 })));
        assert!(rebin(&g, 24).is_err());
    }
}
