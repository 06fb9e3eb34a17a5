//! Descriptors that depend on pixel neighborhoods: border/interior classification and color
//! coherence vectors.

use super::color::quantize_color;
use super::histogram::{Histogram, HistogramKind};
use super::DescriptorError;
use crate::data::Image;
use crate::segmentation::Mask;

fn check(image: &Image, mask: &Mask) -> Result<(), DescriptorError> {
    mask.matches(image)?;
    if mask.count() == 0 {
        return Err(DescriptorError::EmptyRegion);
    }
    Ok(())
}

fn quantized(image: &Image) -> Vec<u8> {
    image.pixels().iter().map(|p| quantize_color(*p)).collect()
}

/// Border/interior split of the masked pixels.
///
/// A pixel is border when any 4-neighbor that is inside both the image and the mask has a
/// different quantized color.
pub fn bic(image: &Image, mask: &Mask) -> Result<(Histogram, Histogram), DescriptorError> {
    check(image, mask)?;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let q = quantized(image);
    let selected = mask.bits();
    let mut border = Histogram::zeros(HistogramKind::Border);
    let mut interior = Histogram::zeros(HistogramKind::Interior);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !selected[i] {
                continue;
            }
            let mut neighbors = [None; 4];
            if x > 0 {
                neighbors[0] = Some(i - 1);
            }
            if x + 1 < w {
                neighbors[1] = Some(i + 1);
            }
            if y > 0 {
                neighbors[2] = Some(i - w);
            }
            if y + 1 < h {
                neighbors[3] = Some(i + w);
            }
            let is_border = neighbors
                .into_iter()
                .flatten()
                .any(|j| selected[j] && q[j] != q[i]);
            let target = if is_border { &mut border } else { &mut interior };
            target.bins[q[i] as usize] += 1;
        }
    }
    Ok((border, interior))
}

/// Coherent/incoherent split of the masked pixels.
///
/// Pixels are grouped into 8-connected components of equal quantized color, restricted to
/// the mask; members of components with at least `tau` pixels are coherent.
pub fn ccv(image: &Image, mask: &Mask, tau: u32) -> Result<(Histogram, Histogram), DescriptorError> {
    check(image, mask)?;
    if tau == 0 {
        return Err(DescriptorError::InvalidTau);
    }
    let (w, h) = (image.width() as isize, image.height() as isize);
    let q = quantized(image);
    let selected = mask.bits();
    let mut component = vec![usize::MAX; q.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..q.len() {
        if !selected[start] || component[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let color = q[start];
        let mut size = 0u32;
        component[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i as isize) % w, (i as isize) / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if selected[j] && component[j] == usize::MAX && q[j] == color {
                        component[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    let mut coherent = Histogram::zeros(HistogramKind::Coherent);
    let mut incoherent = Histogram::zeros(HistogramKind::Incoherent);
    for (i, &c) in component.iter().enumerate() {
        if c == usize::MAX {
            continue;
        }
        let target = if sizes[c] >= tau { &mut coherent } else { &mut incoherent };
        target.bins[q[i] as usize] += 1;
    }
    Ok((coherent, incoherent))
}
