//! In-memory raster type shared by alignment and feature extraction.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    Channels(usize),
    #[error("pixel buffer has {actual} values, expected {expected} for {width}x{height}x{channels}")]
    BufferSize {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
}

/// Row-major interleaved image with intensities on the 0..=255 scale.
///
/// Values are stored as `f32` so that resampled images keep their
/// fractional intensities until they are quantized for storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f32>,
    ) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::Channels(channels));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(ImageError::BufferSize {
                width,
                height,
                channels,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self, ImageError> {
        Self::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn from_u8(
        width: usize,
        height: usize,
        channels: usize,
        data: &[u8],
    ) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            channels,
            data.iter().map(|&v| f32::from(v)).collect(),
        )
    }

    /// Builds a grayscale image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    /// Grayscale view using ITU-R BT.601 luma weights for RGB input.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| {
                (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
                    as f32
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
        }
    }

    /// Quantizes to 8 bits (round half away from zero, clamped to 0..=255).
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert_eq!(
            Image::new(2, 2, 2, vec![0.0; 8]),
            Err(ImageError::Channels(2))
        );
        assert!(matches!(
            Image::new(2, 2, 1, vec![0.0; 3]),
            Err(ImageError::BufferSize { expected: 4, .. })
        ));
    }

    #[test]
    fn gray_conversion_uses_601_weights() {
        let img = Image::from_u8(1, 1, 3, &[255, 0, 0]).unwrap();
        assert!((img.to_gray().get(0, 0, 0) - 76.245).abs() < 1e-4);
        let white = Image::from_u8(1, 1, 3, &[255, 255, 255]).unwrap();
        assert!((white.to_gray().get(0, 0, 0) - 255.0).abs() < 1e-4);
    }

    #[test]
    fn quantization_clamps() {
        let img = Image::new(3, 1, 1, vec![-4.0, 127.5, 300.0]).unwrap();
        assert_eq!(img.to_u8(), vec![0, 128, 255]);
    }
}
