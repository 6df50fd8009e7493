use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 8-bit raster, row-major, channels interleaved. Only 1 (gray) or 3 (RGB)
/// channels are represented.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("channels must be 1 or 3, got {channels}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} image needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Byte offset of pixel `(x, y)`.
    pub fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.pixels[o..o + self.channels as usize]
    }

    /// Per-pixel intensity in `[0, 255]`: the channel mean for RGB.
    pub fn gray_values(&self) -> Vec<f64> {
        let c = self.channels as usize;
        self.pixels
            .chunks_exact(c)
            .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / c as f64)
            .collect()
    }
}

/// Decodes PNG or JPEG. Grayscale sources map to one channel; alpha is
/// dropped.
pub fn load_image(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let format = image::guess_format(bytes)
        .map_err(|e| Error::Format(format!("unrecognized image data: {e}")))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Format(format!("unsupported codec {format:?}")));
    }
    let decoded = ImageReader::with_format(std::io::Cursor::new(bytes), format)
        .decode()
        .map_err(|e| Error::Format(format!("cannot decode {format:?}: {e}")))?;
    let (width, height) = (decoded.width(), decoded.height());
    if decoded.color().has_color() {
        RasterImage::new(width, height, 3, decoded.into_rgb8().into_raw())
    } else {
        RasterImage::new(width, height, 1, decoded.into_luma8().into_raw())
    }
}

/// Writes a PNG (lossless).
pub fn save_image(img: &RasterImage, path: &Path) -> Result<()> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_png(img: &RasterImage) -> Result<Vec<u8>> {
    let dynamic = match img.channels {
        1 => image::GrayImage::from_raw(img.width, img.height, img.pixels.clone())
            .map(DynamicImage::ImageLuma8),
        _ => image::RgbImage::from_raw(img.width, img.height, img.pixels.clone())
            .map(DynamicImage::ImageRgb8),
    }
    .ok_or_else(|| Error::Shape("pixel buffer does not match dimensions".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    Nearest,
    #[default]
    Bilinear,
}

/// Resizes to `width x height` using pixel-center alignment. Bilinear reads
/// clamp at the border.
pub fn resize(img: &RasterImage, width: u32, height: u32, filter: Resample) -> Result<RasterImage> {
    if width == 0 || height == 0 {
        return Err(Error::Range("resize target must be nonzero".into()));
    }
    let c = img.channels as usize;
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut out = Vec::with_capacity(width as usize * height as usize * c);
    for y in 0..height {
        let fy = (y as f64 + 0.5) * sy - 0.5;
        for x in 0..width {
            let fx = (x as f64 + 0.5) * sx - 0.5;
            match filter {
                Resample::Nearest => {
                    let nx = (fx.round().max(0.0) as u32).min(img.width - 1);
                    let ny = (fy.round().max(0.0) as u32).min(img.height - 1);
                    out.extend_from_slice(img.pixel(nx, ny));
                }
                Resample::Bilinear => {
                    for ch in 0..c {
                        out.push(to_u8(sample_bilinear(img, fx, fy, ch)));
                    }
                }
            }
        }
    }
    RasterImage::new(width, height, img.channels, out)
}

/// Bilinear read at fractional pixel-center coordinates with edge clamping.
pub(crate) fn sample_bilinear(img: &RasterImage, fx: f64, fy: f64, ch: usize) -> f64 {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let fx = fx.clamp(0.0, max_x);
    let fy = fy.clamp(0.0, max_y);
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let x0 = x0 as u32;
    let y0 = y0 as u32;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let at = |x: u32, y: u32| img.pixels[img.offset(x, y) + ch] as f64;
    let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
    let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Round half up and saturate to the 8-bit range.
pub(crate) fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_buffers() {
        assert!(RasterImage::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(RasterImage::new(2, 2, 2, vec![0; 8]).is_err());
    }

    #[test]
    fn black_png_decodes_to_zeros() {
        let img = RasterImage::filled(2, 2, 1, 0).unwrap();
        let back = decode_image(&encode_png(&img).unwrap()).unwrap();
        assert_eq!(back.channels(), 1);
        assert!(back.pixels().iter().all(|&p| p == 0));
    }

    #[test]
    fn truncated_png_is_format_error() {
        let img = RasterImage::filled(8, 8, 3, 200).unwrap();
        let bytes = encode_png(&img).unwrap();
        let err = decode_image(&bytes[..bytes.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
        assert!(matches!(decode_image(b"GIF89a\x01\x00"), Err(Error::Format(_))));
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = RasterImage::new(3, 2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        for f in [Resample::Nearest, Resample::Bilinear] {
            assert_eq!(resize(&img, 3, 2, f).unwrap(), img);
        }
        let flat = RasterImage::filled(7, 5, 3, 90).unwrap();
        let small = resize(&flat, 4, 4, Resample::Bilinear).unwrap();
        assert!(small.pixels().iter().all(|&p| p == 90));
    }

    #[test]
    fn nearest_upscale_duplicates() {
        let img = RasterImage::new(2, 1, 1, vec![10, 20]).unwrap();
        let up = resize(&img, 4, 1, Resample::Nearest).unwrap();
        assert_eq!(up.pixels(), &[10, 10, 20, 20]);
    }
}
