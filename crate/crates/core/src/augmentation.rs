//! Seeded training-time augmentation.
//!
//! Transforms run in a fixed order: flips, one affine warp (translate, scale, rotate),
//! brightness, contrast, hue, saturation, blur, noise, grid shuffle, coarse dropout. Every
//! transform consumes one gate draw `u ~ U[0,1)` and fires when `u < p`; its parameter draws
//! follow immediately, only when it fires. The generator is ChaCha8 seeded with the per-image
//! seed, so the draw sequence is reproducible on any platform.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Image;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("grid of {grid}x{grid} cells does not fit a {width}x{height} image")]
    GridTooLarge { grid: u32, width: u32, height: u32 },
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
}

macro_rules! defaults {
    ($($name:ident: $ty:ty = $value:expr;)*) => {
        $(fn $name() -> $ty { $value })*
    };
}

defaults! {
    half: f64 = 0.5;
    translate_max: f64 = 0.1;
    scale_min: f64 = 0.9;
    scale_max: f64 = 1.1;
    rotate_max: f64 = 15.0;
    photometric_delta: f64 = 0.2;
    hue_max: f64 = 10.0;
    saturation_max: f64 = 0.15;
    blur_sigma_max: f64 = 1.5;
    noise_std_max: f64 = 10.0 / 255.0;
    grid_cells: u32 = 4;
    holes_max: u32 = 4;
    hole_fraction: f64 = 0.2;
    one: u32 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Translate {
    #[serde(default = "half")]
    pub p: f64,
    /// Largest shift as a fraction of the image side.
    #[serde(default = "translate_max")]
    pub max_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scale {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default = "scale_min")]
    pub min: f64,
    #[serde(default = "scale_max")]
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rotate {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default = "rotate_max")]
    pub max_degrees: f64,
}

/// A multiplicative jitter `1 + U(-max_delta, max_delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default = "photometric_delta")]
    pub max_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hue {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default = "hue_max")]
    pub max_degrees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blur {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default)]
    pub sigma_min: f64,
    #[serde(default = "blur_sigma_max")]
    pub sigma_max: f64,
}

/// Gaussian noise; standard deviations are in units of the full 0..255 range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default)]
    pub std_min: f64,
    #[serde(default = "noise_std_max")]
    pub std_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridShuffle {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default = "grid_cells")]
    pub grid: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dropout {
    #[serde(default = "half")]
    pub p: f64,
    #[serde(default = "one")]
    pub min_holes: u32,
    #[serde(default = "holes_max")]
    pub max_holes: u32,
    /// Largest hole side as a fraction of the smaller image side (at least one pixel).
    #[serde(default = "hole_fraction")]
    pub max_size_fraction: f64,
    #[serde(default)]
    pub fill: [u8; 3],
}

macro_rules! with_defaults {
    ($($t:ident),*) => {
        $(impl Default for $t {
            fn default() -> Self {
                serde_json::from_str("{}").expect("defaults deserialize")
            }
        })*
    };
}

with_defaults!(Translate, Scale, Rotate, Jitter, Hue, Blur, Noise, GridShuffle, Dropout);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub translate: Translate,
    pub scale: Scale,
    pub rotate: Rotate,
    pub brightness: Jitter,
    pub contrast: Jitter,
    pub hue: Hue,
    pub saturation: Jitter,
    pub blur: Blur,
    pub noise: Noise,
    pub grid_shuffle: GridShuffle,
    pub dropout: Dropout,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            vflip_p: 0.5,
            translate: Translate::default(),
            scale: Scale::default(),
            rotate: Rotate::default(),
            brightness: Jitter::default(),
            contrast: Jitter::default(),
            hue: Hue::default(),
            saturation: Jitter {
                max_delta: saturation_max(),
                ..Jitter::default()
            },
            blur: Blur::default(),
            noise: Noise::default(),
            grid_shuffle: GridShuffle::default(),
            dropout: Dropout::default(),
        }
    }
}

impl AugmentConfig {
    /// Every probability zero: the identity pipeline.
    pub fn disabled() -> Self {
        let mut cfg = Self { hflip_p: 0.0, vflip_p: 0.0, ..Self::default() };
        for p in cfg.probabilities_mut() {
            *p = 0.0;
        }
        cfg
    }

    fn probabilities_mut(&mut self) -> [&mut f64; 11] {
        [
            &mut self.translate.p,
            &mut self.scale.p,
            &mut self.rotate.p,
            &mut self.brightness.p,
            &mut self.contrast.p,
            &mut self.hue.p,
            &mut self.saturation.p,
            &mut self.blur.p,
            &mut self.noise.p,
            &mut self.grid_shuffle.p,
            &mut self.dropout.p,
        ]
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        let mut probs = vec![self.hflip_p, self.vflip_p];
        probs.extend(self.clone().probabilities_mut().map(|p| *p));
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(0.0..=0.5).contains(&self.translate.max_fraction) {
            return bad("translate.max_fraction must lie in [0, 0.5]");
        }
        if !(self.scale.min > 0.0 && self.scale.min <= self.scale.max && self.scale.max <= 4.0) {
            return bad("scale range must satisfy 0 < min <= max <= 4");
        }
        if !(0.0..=180.0).contains(&self.rotate.max_degrees) || !(0.0..=180.0).contains(&self.hue.max_degrees) {
            return bad("angles must lie in [0, 180]");
        }
        for j in [&self.brightness, &self.contrast, &self.saturation] {
            if !(0.0..1.0).contains(&j.max_delta) {
                return bad("jitter max_delta must lie in [0, 1)");
            }
        }
        if !(0.0 <= self.blur.sigma_min && self.blur.sigma_min <= self.blur.sigma_max && self.blur.sigma_max <= 10.0) {
            return bad("blur sigma range must satisfy 0 <= min <= max <= 10");
        }
        if !(0.0 <= self.noise.std_min && self.noise.std_min <= self.noise.std_max && self.noise.std_max <= 1.0) {
            return bad("noise std range must satisfy 0 <= min <= max <= 1");
        }
        if self.grid_shuffle.grid == 0 {
            return bad("grid_shuffle.grid must be positive");
        }
        let d = &self.dropout;
        if d.min_holes > d.max_holes || !(0.0..=1.0).contains(&d.max_size_fraction) {
            return bad("dropout needs min_holes <= max_holes and max_size_fraction in [0, 1]");
        }
        Ok(())
    }
}

fn gate(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn symmetric(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max == 0.0 {
        0.0
    } else {
        rng.random_range(-max..=max)
    }
}

fn between(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Float working buffer, row-major RGB in 0..255.
struct Canvas {
    w: usize,
    h: usize,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    fn from_image(img: &Image) -> Self {
        Self {
            w: img.width() as usize,
            h: img.height() as usize,
            px: img.pixels().iter().map(|p| p.map(f64::from)).collect(),
        }
    }

    fn to_image(&self) -> Image {
        let px = self.px.iter().map(|p| p.map(|v| v.round().clamp(0.0, 255.0) as u8)).collect();
        Image::new(self.w as u32, self.h as u32, px)
    }

    fn at_clamped(&self, x: isize, y: isize) -> [f64; 3] {
        let x = x.clamp(0, self.w as isize - 1) as usize;
        let y = y.clamp(0, self.h as isize - 1) as usize;
        self.px[y * self.w + x]
    }

    fn bilinear(&self, x: f64, y: f64) -> [f64; 3] {
        let x0 = x.floor();
        let y0 = y.floor();
        let (fx, fy) = (x - x0, y - y0);
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.at_clamped(xi, yi);
        let b = self.at_clamped(xi + 1, yi);
        let c = self.at_clamped(xi, yi + 1);
        let d = self.at_clamped(xi + 1, yi + 1);
        std::array::from_fn(|k| {
            let top = a[k] * (1.0 - fx) + b[k] * fx;
            let bottom = c[k] * (1.0 - fx) + d[k] * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }
}

fn flip(img: &mut Image, horizontal: bool) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = img.pixels_mut();
    for y in 0..h {
        if horizontal {
            px[y * w..(y + 1) * w].reverse();
        } else if y < h / 2 {
            for x in 0..w {
                px.swap(y * w + x, (h - 1 - y) * w + x);
            }
        }
    }
}

/// Inverse-mapped affine warp about the image center with edge replication.
fn warp(c: &Canvas, tx: f64, ty: f64, scale: f64, degrees: f64) -> Canvas {
    let (cx, cy) = ((c.w as f64 - 1.0) / 2.0, (c.h as f64 - 1.0) / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let mut px = Vec::with_capacity(c.px.len());
    for y in 0..c.h {
        for x in 0..c.w {
            let dx = (x as f64 - cx - tx) / scale;
            let dy = (y as f64 - cy - ty) / scale;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            px.push(c.bilinear(sx, sy));
        }
    }
    Canvas { w: c.w, h: c.h, px }
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn blur(c: &Canvas, sigma: f64) -> Canvas {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let pass = |src: &Canvas, horizontal: bool| {
        let mut px = Vec::with_capacity(src.px.len());
        for y in 0..src.h as isize {
            for x in 0..src.w as isize {
                let mut acc = [0.0; 3];
                for (i, wgt) in k.iter().enumerate() {
                    let o = i as isize - r;
                    let p = if horizontal { src.at_clamped(x + o, y) } else { src.at_clamped(x, y + o) };
                    for ch in 0..3 {
                        acc[ch] += wgt * p[ch];
                    }
                }
                px.push(acc);
            }
        }
        Canvas { w: src.w, h: src.h, px }
    };
    pass(&pass(c, true), false)
}

fn grid_shuffle(img: &mut Image, grid: u32, rng: &mut ChaCha8Rng) {
    let (w, h) = (img.width(), img.height());
    let (cw, ch) = (w / grid, h / grid);
    let n = (grid * grid) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let src = img.clone();
    for (dst, &from) in order.iter().enumerate() {
        let (dx, dy) = ((dst as u32 % grid) * cw, (dst as u32 / grid) * ch);
        let (sx, sy) = ((from as u32 % grid) * cw, (from as u32 / grid) * ch);
        for y in 0..ch {
            for x in 0..cw {
                img.set(dx + x, dy + y, src.get(sx + x, sy + y));
            }
        }
    }
}

/// Rectangle `(x, y, width, height)` of one dropout hole.
pub type Hole = (u32, u32, u32, u32);

/// Draws the holes for an image of the given size; the draw order is count, then per hole
/// height, width, top, left.
pub fn draw_holes(cfg: &Dropout, width: u32, height: u32, rng: &mut impl Rng) -> Vec<Hole> {
    let max_side = ((cfg.max_size_fraction * width.min(height) as f64).floor() as u32).max(1);
    let count = rng.random_range(cfg.min_holes..=cfg.max_holes);
    (0..count)
        .map(|_| {
            let hh = rng.random_range(1..=max_side.min(height));
            let ww = rng.random_range(1..=max_side.min(width));
            let y = rng.random_range(0..=height - hh);
            let x = rng.random_range(0..=width - ww);
            (x, y, ww, hh)
        })
        .collect()
}

pub fn augment(image: &Image, cfg: &AugmentConfig, seed: u64) -> Result<Image, AugmentError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = image.clone();
    let (w, h) = (img.width(), img.height());

    if gate(&mut rng, cfg.hflip_p) {
        flip(&mut img, true);
    }
    if gate(&mut rng, cfg.vflip_p) {
        flip(&mut img, false);
    }

    let (mut tx, mut ty, mut scale, mut degrees) = (0.0, 0.0, 1.0, 0.0);
    let mut geometric = false;
    if gate(&mut rng, cfg.translate.p) {
        tx = symmetric(&mut rng, cfg.translate.max_fraction) * w as f64;
        ty = symmetric(&mut rng, cfg.translate.max_fraction) * h as f64;
        geometric = true;
    }
    if gate(&mut rng, cfg.scale.p) {
        scale = between(&mut rng, cfg.scale.min, cfg.scale.max);
        geometric = true;
    }
    if gate(&mut rng, cfg.rotate.p) {
        degrees = symmetric(&mut rng, cfg.rotate.max_degrees);
        geometric = true;
    }

    let mut canvas = Canvas::from_image(&img);
    if geometric {
        canvas = warp(&canvas, tx, ty, scale, degrees);
    }
    if gate(&mut rng, cfg.brightness.p) {
        let f = 1.0 + symmetric(&mut rng, cfg.brightness.max_delta);
        canvas.px.iter_mut().flatten().for_each(|v| *v = (*v * f).clamp(0.0, 255.0));
    }
    if gate(&mut rng, cfg.contrast.p) {
        let f = 1.0 + symmetric(&mut rng, cfg.contrast.max_delta);
        let mean = canvas.px.iter().map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).sum::<f64>()
            / canvas.px.len() as f64;
        canvas.px.iter_mut().flatten().for_each(|v| *v = ((*v - mean) * f + mean).clamp(0.0, 255.0));
    }
    let hue_shift = gate(&mut rng, cfg.hue.p).then(|| symmetric(&mut rng, cfg.hue.max_degrees));
    let sat_factor = gate(&mut rng, cfg.saturation.p).then(|| 1.0 + symmetric(&mut rng, cfg.saturation.max_delta));
    if hue_shift.is_some() || sat_factor.is_some() {
        for p in &mut canvas.px {
            let [hh, s, v] = rgb_to_hsv(*p);
            let hh = hh + hue_shift.unwrap_or(0.0);
            let s = (s * sat_factor.unwrap_or(1.0)).clamp(0.0, 1.0);
            *p = hsv_to_rgb([hh, s, v]);
        }
    }
    if gate(&mut rng, cfg.blur.p) {
        let sigma = between(&mut rng, cfg.blur.sigma_min, cfg.blur.sigma_max);
        if sigma > 1e-3 {
            canvas = blur(&canvas, sigma);
        }
    }
    if gate(&mut rng, cfg.noise.p) {
        let std = between(&mut rng, cfg.noise.std_min, cfg.noise.std_max) * 255.0;
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            canvas
                .px
                .iter_mut()
                .flatten()
                .for_each(|v| *v = (*v + normal.sample(&mut rng)).clamp(0.0, 255.0));
        }
    }
    let mut img = canvas.to_image();

    if gate(&mut rng, cfg.grid_shuffle.p) {
        let g = cfg.grid_shuffle.grid;
        if g > w || g > h {
            return Err(AugmentError::GridTooLarge { grid: g, width: w, height: h });
        }
        grid_shuffle(&mut img, g, &mut rng);
    }
    if gate(&mut rng, cfg.dropout.p) {
        for (x0, y0, ww, hh) in draw_holes(&cfg.dropout, w, h, &mut rng) {
            for y in y0..y0 + hh {
                for x in x0..x0 + ww {
                    img.set(x, y, cfg.dropout.fill);
                }
            }
        }
    }
    Ok(img)
}

/// Image `i` is augmented with seed `base_seed + i`.
pub fn augment_batch(images: &[Image], cfg: &AugmentConfig, base_seed: u64) -> Result<Vec<Image>, AugmentError> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| augment(img, cfg, base_seed.wrapping_add(i as u64)))
        .collect()
}
