use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of colors after 6-bit quantization.
pub const QUANTIZED_COLORS: usize = 64;

/// 6-bit color index from the two most significant bits of each channel.
pub fn quantize_color([r, g, b]: [u8; 3]) -> u8 {
    (r >> 6) * 16 + (g >> 6) * 4 + (b >> 6)
}

/// Scalar channels with a 256-bin histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
    /// CIELAB lightness, scaled from 0..100 to 0..255.
    LabL,
    /// BT.601 luma.
    YcbcrY,
    /// HSV value.
    HsvV,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::R,
        Channel::G,
        Channel::B,
        Channel::LabL,
        Channel::YcbcrY,
        Channel::HsvV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
            Channel::LabL => "L",
            Channel::YcbcrY => "Y",
            Channel::HsvV => "V",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn scalar_channel(rgb: [u8; 3], channel: Channel) -> u8 {
    let [r, g, b] = rgb;
    match channel {
        Channel::R => r,
        Channel::G => g,
        Channel::B => b,
        Channel::YcbcrY => luma(rgb),
        Channel::HsvV => r.max(g).max(b),
        Channel::LabL => (lab_lightness(rgb) * 255.0 / 100.0).round().clamp(0.0, 255.0) as u8,
    }
}

/// round(0.299 R + 0.587 G + 0.114 B), computed in integers so halves round up exactly.
fn luma([r, g, b]: [u8; 3]) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000) as u8
}

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// CIELAB L* of an sRGB color under D65, in 0..=100.
pub fn lab_lightness([r, g, b]: [u8; 3]) -> f64 {
    // Relative luminance; Yn = 1 for D65.
    let y = 0.212_672_9 * srgb_to_linear(r)
        + 0.715_152_2 * srgb_to_linear(g)
        + 0.072_175_0 * srgb_to_linear(b);
    let delta: f64 = 6.0 / 29.0;
    let f = if y > delta.powi(3) {
        y.cbrt()
    } else {
        y / (3.0 * delta * delta) + 4.0 / 29.0
    };
    116.0 * f - 16.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantization_examples() {
        assert_eq!(quantize_color([255, 128, 64]), 57);
        assert_eq!(quantize_color([0, 0, 0]), 0);
        assert_eq!(quantize_color([255, 255, 255]), 63);
    }

    #[test]
    fn white_and_red_channels() {
        let white = [255, 255, 255];
        assert_eq!(scalar_channel(white, Channel::YcbcrY), 255);
        assert_eq!(scalar_channel(white, Channel::HsvV), 255);
        assert_eq!(scalar_channel(white, Channel::LabL), 255);
        assert_eq!(scalar_channel([0, 0, 0], Channel::LabL), 0);
        assert_eq!(scalar_channel([255, 0, 0], Channel::HsvV), 255);
        assert_eq!(scalar_channel([10, 20, 30], Channel::G), 20);
    }

    /// Independent route: full sRGB → XYZ matrix, CIE ε/κ form of the Lab companding.
    fn reference_lab_l(rgb: [u8; 3]) -> f64 {
        let lin: Vec<f64> = rgb
            .iter()
            .map(|&c| {
                let v = c as f64 / 255.0;
                if v > 0.04045 { ((v + 0.055) / 1.055).powf(2.4) } else { v / 12.92 }
            })
            .collect();
        let m = [
            [0.4124564, 0.3575761, 0.1804375],
            [0.2126729, 0.7151522, 0.0721750],
            [0.0193339, 0.1191920, 0.9503041],
        ];
        let xyz: Vec<f64> = m.iter().map(|row| row.iter().zip(&lin).map(|(a, b)| a * b).sum()).collect();
        let yr = xyz[1] / 1.0;
        let (eps, kappa) = (216.0 / 24389.0, 24389.0 / 27.0);
        if yr > eps { 116.0 * yr.cbrt() - 16.0 } else { kappa * yr }
    }

    proptest! {
        #[test]
        fn scalar_channels_match_reference(rgb in any::<[u8; 3]>()) {
            let [r, g, b] = rgb.map(f64::from);
            let y = (0.299 * r + 0.587 * g + 0.114 * b).round();
            prop_assert!((scalar_channel(rgb, Channel::YcbcrY) as f64 - y).abs() <= 1.0);
            prop_assert_eq!(scalar_channel(rgb, Channel::HsvV), rgb.into_iter().max().unwrap());
            let l = (reference_lab_l(rgb) * 255.0 / 100.0).round();
            prop_assert!((scalar_channel(rgb, Channel::LabL) as f64 - l).abs() <= 1.0);
        }
    }
}
