use std::path::Path;

use image::{DynamicImage, ImageReader};

use super::DataError;

/// An 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    /// Panics if `pixels.len() != width * height` or a dimension is zero.
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert_eq!(
            pixels.len(),
            width as usize * height as usize,
            "pixel count must equal width * height"
        );
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self::new(width, height, vec![rgb; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let w = self.width as usize;
        self.pixels[y as usize * w + x as usize] = rgb;
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        let (width, height) = rgb.dimensions();
        let pixels = rgb.pixels().map(|p| p.0).collect();
        Self::new(width, height, pixels)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let raw: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        image::RgbImage::from_raw(self.width, self.height, raw).expect("dimensions match")
    }

    /// Encode as PNG at `path`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| DataError::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }
}

/// Decode a PNG or JPEG into 8-bit RGB. Alpha is dropped and grayscale is expanded; 16-bit
/// sources are truncated to 8 bits with a warning.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, DataError> {
    let path = path.as_ref();
    let decode_err = |message: String| DataError::Decode {
        path: path.to_path_buf(),
        message,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| DataError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| DataError::io(path, e))?;
    let img = reader.decode().map_err(|e| decode_err(e.to_string()))?;
    if matches!(
        img,
        DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    ) {
        log::warn!("{}: 16-bit image truncated to 8 bits", path.display());
    }
    Ok(Image::from_dynamic(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        Image::filled(2, 2, [255, 255, 255]).save_png(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert!(img.pixels().iter().all(|p| *p == [255, 255, 255]));
    }

    #[test]
    fn grayscale_jpeg_expands_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.jpg");
        image::GrayImage::from_pixel(8, 8, image::Luma([128]))
            .save_with_format(&path, image::ImageFormat::Jpeg)
            .unwrap();
        let img = load_image(&path).unwrap();
        for p in img.pixels() {
            assert_eq!(p[0], p[1]);
            assert_eq!(p[1], p[2]);
            assert!(p[0].abs_diff(128) <= 1, "{p:?}");
        }
    }

    #[test]
    fn rgba_and_16_bit_are_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba16.png");
        let img = image::ImageBuffer::<image::Rgba<u16>, _>::from_pixel(3, 1, image::Rgba([65535, 0, 32768, 1000]));
        img.save(&path).unwrap();
        let loaded = load_image(&path).unwrap();
        assert_eq!(loaded.pixels()[0], [255, 0, 128]);
    }

    #[test]
    fn truncated_file_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.png");
        Image::filled(16, 16, [10, 20, 30]).save_png(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_image(&path), Err(DataError::Decode { .. })));
    }

    #[test]
    fn dimensions_match_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rect.png");
        Image::from_fn(7, 3, |x, y| [x as u8, y as u8, 0]).save_png(&path).unwrap();
        let (w, h) = image::image_dimensions(&path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (w, h));
        assert_eq!(img.get(6, 2), [6, 2, 0]);
    }
}
