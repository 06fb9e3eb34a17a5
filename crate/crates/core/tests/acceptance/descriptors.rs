//! Brute-force descriptor oracles. Nothing here calls into the descriptor module except the
//! functions under test.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skintone_core::descriptors::{
    bic, ccv, channel_histogram, feature_vector, gch, moments, quantize_color, rebin, Channel, DescriptorConfig,
    HistogramKind,
};
use skintone_core::segmentation::{extract_region, RegionKind};
use skintone_core::{Image, Mask};

use crate::{ensure, Outcome};

fn oracle_color_index(p: [u8; 3]) -> usize {
    let level = |v: u8| v as usize / 64;
    level(p[0]) * 16 + level(p[1]) * 4 + level(p[2])
}

fn oracle_channel(p: [u8; 3], channel: Channel) -> usize {
    let [r, g, b] = p.map(|v| v as u64);
    match channel {
        Channel::R => r as usize,
        Channel::G => g as usize,
        Channel::B => b as usize,
        // Round half up of (299r + 587g + 114b) / 1000.
        Channel::YcbcrY => ((2 * (299 * r + 587 * g + 114 * b) + 1000) / 2000) as usize,
        Channel::HsvV => r.max(g).max(b) as usize,
        Channel::LabL => {
            let lin = |c: u64| {
                let c = c as f64 / 255.0;
                if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) }
            };
            let y = 0.2126729 * lin(r) + 0.7151522 * lin(g) + 0.0721750 * lin(b);
            let l = if y > 216.0 / 24389.0 { 116.0 * y.cbrt() - 16.0 } else { y * 24389.0 / 27.0 };
            (l * 2.55).round().clamp(0.0, 255.0) as usize
        }
    }
}

struct Case {
    image: Image,
    mask: Mask,
}

impl Case {
    fn selected(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && x < self.image.width() as i64
            && y < self.image.height() as i64
            && self.mask.get(x as u32, y as u32)
    }

    fn color(&self, x: i64, y: i64) -> usize {
        oracle_color_index(self.image.get(x as u32, y as u32))
    }

    fn coords(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for y in 0..self.image.height() as i64 {
            for x in 0..self.image.width() as i64 {
                if self.selected(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let (w, h) = (rng.random_range(1..=8u32), rng.random_range(1..=8u32));
    // Half the images use a few colors so that large same-color regions occur.
    let palette: Vec<[u8; 3]> = (0..rng.random_range(1..=4)).map(|_| rng.random()).collect();
    let few_colors = rng.random_bool(0.5);
    let image = Image::from_fn(w, h, |_, _| {
        if few_colors {
            palette[rng.random_range(0..palette.len())]
        } else {
            rng.random()
        }
    });
    let mask = if rng.random_bool(0.5) {
        Mask::full(w, h)
    } else {
        let mut m = Mask::from_fn(w, h, |_, _| rng.random_bool(0.7));
        if m.count() == 0 {
            m = Mask::full(w, h);
        }
        m
    };
    Case { image, mask }
}

fn oracle_bic(case: &Case) -> (Vec<u64>, Vec<u64>) {
    let (mut border, mut interior) = (vec![0; 64], vec![0; 64]);
    for (x, y) in case.coords() {
        let c = case.color(x, y);
        let differs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
            .iter()
            .any(|(dx, dy)| case.selected(x + dx, y + dy) && case.color(x + dx, y + dy) != c);
        if differs {
            border[c] += 1;
        } else {
            interior[c] += 1;
        }
    }
    (border, interior)
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    let mut i = i;
    while parent[i] != root {
        let next = parent[i];
        parent[i] = root;
        i = next;
    }
    root
}

fn oracle_ccv(case: &Case, tau: usize) -> (Vec<u64>, Vec<u64>) {
    let coords = case.coords();
    let mut parent: Vec<usize> = (0..coords.len()).collect();
    for a in 0..coords.len() {
        for b in (a + 1)..coords.len() {
            let ((xa, ya), (xb, yb)) = (coords[a], coords[b]);
            let adjacent = (xa - xb).abs() <= 1 && (ya - yb).abs() <= 1;
            if adjacent && case.color(xa, ya) == case.color(xb, yb) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let roots: Vec<usize> = (0..coords.len()).map(|i| find(&mut parent, i)).collect();
    let (mut coherent, mut incoherent) = (vec![0; 64], vec![0; 64]);
    for (i, &(x, y)) in coords.iter().enumerate() {
        let size = roots.iter().filter(|&&r| r == roots[i]).count();
        if size >= tau {
            coherent[case.color(x, y)] += 1;
        } else {
            incoherent[case.color(x, y)] += 1;
        }
    }
    (coherent, incoherent)
}

fn oracle_moments(values: &[f64]) -> [f64; 4] {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let central = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let var = central(2);
    if var == 0.0 {
        return [mean, 0.0, 0.0, 0.0];
    }
    [mean, var, central(3) / var.powf(1.5), central(4) / (var * var) - 3.0]
}

fn oracle_rebin(bins: &[u64], target: usize) -> Vec<u64> {
    let mut out = vec![0; target];
    for (i, c) in bins.iter().enumerate() {
        out[i * target / bins.len()] += c;
    }
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn check_case(case: &Case, n: usize) -> Result<usize, String> {
    let region = extract_region(&case.image, Some(&case.mask), RegionKind::Face).map_err(|e| e.to_string())?;
    let pixels: Vec<[u8; 3]> = case.coords().iter().map(|&(x, y)| case.image.get(x as u32, y as u32)).collect();
    let mut checks = 0;

    for channel in Channel::ALL {
        let got = channel_histogram(&region, channel).map_err(|e| e.to_string())?;
        let mut want = vec![0u64; 256];
        for p in &pixels {
            want[oracle_channel(*p, channel)] += 1;
        }
        ensure!(got.bins == want, "image {n}: {channel} histogram differs");
        let values: Vec<f64> = pixels.iter().map(|p| oracle_channel(*p, channel) as f64).collect();
        let got_m = moments(&region, channel).map_err(|e| e.to_string())?.to_array();
        let want_m = oracle_moments(&values);
        for (g, w) in got_m.iter().zip(want_m) {
            ensure!(close(*g, w), "image {n}: {channel} moments {got_m:?} vs {want_m:?}");
        }
        for target in [128, 64, 32, 16] {
            ensure!(
                rebin(&got, target).map_err(|e| e.to_string())?.bins == oracle_rebin(&want, target),
                "image {n}: {channel} rebin to {target}"
            );
        }
        checks += 6;
    }

    let mut want_gch = vec![0u64; 64];
    for p in &pixels {
        want_gch[oracle_color_index(*p)] += 1;
    }
    let got_gch = gch(&region).map_err(|e| e.to_string())?;
    ensure!(got_gch.bins == want_gch, "image {n}: GCH differs");
    for target in [64, 32, 16] {
        ensure!(
            rebin(&got_gch, target).map_err(|e| e.to_string())?.bins == oracle_rebin(&want_gch, target),
            "image {n}: GCH rebin to {target}"
        );
    }

    let (border, interior) = bic(&case.image, &case.mask).map_err(|e| e.to_string())?;
    let (want_b, want_i) = oracle_bic(case);
    ensure!(border.bins == want_b && interior.bins == want_i, "image {n}: BIC differs");

    let tau_cfg = DescriptorConfig::default();
    for tau in [1, 2, 3, tau_cfg.tau_for_area(pixels.len()) as usize, 5] {
        let (coh, inc) = ccv(&case.image, &case.mask, tau as u32).map_err(|e| e.to_string())?;
        let (want_c, want_n) = oracle_ccv(case, tau);
        ensure!(coh.bins == want_c && inc.bins == want_n, "image {n}: CCV(tau={tau}) differs");
    }
    checks += 9;

    // Assembled vector: rebinned blocks in layout order, then moments.
    for bins in [16, 128] {
        let cfg = DescriptorConfig::with_bins(bins);
        let tau = cfg.tau_for_area(pixels.len()) as usize;
        let (coh, inc) = oracle_ccv(case, tau);
        let mut want = Vec::new();
        let mut blocks: Vec<Vec<u64>> = Channel::ALL
            .iter()
            .map(|c| {
                let mut h = vec![0u64; 256];
                for p in &pixels {
                    h[oracle_channel(*p, *c)] += 1;
                }
                oracle_rebin(&h, bins)
            })
            .collect();
        let spatial = [want_gch.clone(), coh, inc, want_b.clone(), want_i.clone()];
        blocks.extend(spatial.iter().map(|h| oracle_rebin(h, bins.min(64))));
        for block in &blocks {
            let total: u64 = block.iter().sum();
            want.extend(block.iter().map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 }));
        }
        for channel in Channel::ALL {
            let values: Vec<f64> = pixels.iter().map(|p| oracle_channel(*p, channel) as f64).collect();
            want.extend(oracle_moments(&values));
        }
        let got = feature_vector(&case.image, Some(&case.mask), RegionKind::Face, &cfg).map_err(|e| e.to_string())?;
        ensure!(got.len() == want.len(), "image {n}: vector length {} vs {}", got.len(), want.len());
        ensure!(
            got.values.iter().zip(&want).all(|(g, w)| close(*g, *w)),
            "image {n}: assembled vector at B={bins} differs"
        );
        checks += 1;
    }
    Ok(checks)
}

pub fn oracle_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_24);
    let mut checks = 0;
    for n in 0..500 {
        checks += check_case(&random_case(&mut rng), n)?;
    }
    ensure!(
        HistogramKind::LAYOUT.len() == 11,
        "layout has {} histogram blocks",
        HistogramKind::LAYOUT.len()
    );
    Ok(format!("500 images, {checks} comparisons exact; moments within 1e-9"))
}

pub fn quantization() -> Outcome {
    for (rgb, want) in [([255, 128, 64], 57), ([0, 0, 0], 0), ([255, 255, 255], 63)] {
        let got = quantize_color(rgb);
        ensure!(got == want, "{rgb:?} -> {got}, expected {want}");
    }
    let corners = [0u8, 63, 64, 127, 128, 191, 192, 255];
    let mut reached = BTreeSet::new();
    for r in corners {
        for g in corners {
            for b in corners {
                let q = quantize_color([r, g, b]);
                ensure!(q as usize == oracle_color_index([r, g, b]), "({r},{g},{b}) -> {q}");
                reached.insert(q);
            }
        }
    }
    ensure!(reached.len() == 64 && reached.iter().all(|&q| q < 64), "reached {} indices", reached.len());
    Ok("reference colors exact; 64/64 indices reached".into())
}
