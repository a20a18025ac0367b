//! `ImageTensor`: an H×W×3 interleaved image of `f64` samples with a declared
//! value range and color space. Every preprocessing step consumes and
//! produces this type.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueRange {
    /// Intensities in `[0, 255]`.
    Uint8,
    /// Intensities in `[0, 1]`.
    Unit,
}

impl ValueRange {
    pub fn max(self) -> f64 {
        match self {
            ValueRange::Uint8 => 255.0,
            ValueRange::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    Rgb,
    /// Optical density; samples are non-negative and unbounded above.
    Od,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
    range: ValueRange,
    space: ColorSpace,
}

impl ImageTensor {
    pub fn new(
        height: usize,
        width: usize,
        data: Vec<f64>,
        range: ValueRange,
        space: ColorSpace,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{height}x{width}x3 image needs {} samples, got {}",
                height * width * 3,
                data.len()
            )));
        }
        let valid = match space {
            ColorSpace::Rgb => {
                let hi = range.max();
                data.iter().all(|v| (0.0..=hi).contains(v))
            }
            ColorSpace::Od => data.iter().all(|v| v.is_finite() && *v >= 0.0),
        };
        if !valid {
            return Err(Error::InvalidInput(format!(
                "sample outside the declared {range:?}/{space:?} range"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
            range,
            space,
        })
    }

    pub fn rgb8(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(height, width, data, ValueRange::Uint8, ColorSpace::Rgb)
    }

    pub fn filled(height: usize, width: usize, value: [f64; 3], range: ValueRange) -> Result<Self> {
        let data = (0..height * width).flat_map(|_| value).collect();
        Self::new(height, width, data, range, ColorSpace::Rgb)
    }

    /// Callers guarantee the invariants; used by operations whose output
    /// range is enforced by construction.
    pub(crate) fn from_parts(
        height: usize,
        width: usize,
        data: Vec<f64>,
        range: ValueRange,
        space: ColorSpace,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        Self {
            height,
            width,
            data,
            range,
            space,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Rescale an RGB tensor to `[0, 255]`.
    pub fn to_uint8_range(&self) -> ImageTensor {
        match self.range {
            ValueRange::Uint8 => self.clone(),
            ValueRange::Unit => ImageTensor::from_parts(
                self.height,
                self.width,
                self.data.iter().map(|v| v * 255.0).collect(),
                ValueRange::Uint8,
                self.space,
            ),
        }
    }

    /// Quantize to 8-bit RGB (round to nearest, clamp).
    pub fn to_rgb8_bytes(&self) -> Vec<u8> {
        let scale = 255.0 / self.range.max();
        self.data
            .iter()
            .map(|v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn from_rgb8_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::rgb8(height, width, bytes.iter().map(|&b| f64::from(b)).collect())
    }

    /// Load an 8-bit RGB image (PNG or TIFF); other pixel formats are
    /// converted to RGB8.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::from_rgb8_bytes(h as usize, w as usize, rgb.as_raw())
    }

    /// Write as 8-bit RGB PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if self.space != ColorSpace::Rgb {
            return Err(Error::InvalidInput("only RGB tensors can be saved".into()));
        }
        let buf = image::RgbImage::from_raw(
            self.width as u32,
            self.height as u32,
            self.to_rgb8_bytes(),
        )
        .ok_or_else(|| Error::Shape("buffer does not match dimensions".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(ImageTensor::rgb8(1, 1, vec![0.0, 256.0, 0.0]).is_err());
        assert!(ImageTensor::new(1, 1, vec![0.0, 1.5, 0.0], ValueRange::Unit, ColorSpace::Rgb).is_err());
        assert!(ImageTensor::new(1, 1, vec![0.0, -0.1, 0.0], ValueRange::Uint8, ColorSpace::Od).is_err());
        assert!(ImageTensor::rgb8(0, 1, vec![]).is_err());
        assert!(ImageTensor::rgb8(2, 2, vec![0.0; 11]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let data: Vec<f64> = (0..4 * 5 * 3).map(|i| f64::from((i * 7 % 256) as u8)).collect();
        let img = ImageTensor::rgb8(4, 5, data).unwrap();
        img.save_png(&path).unwrap();
        assert_eq!(ImageTensor::load(&path).unwrap(), img);
    }
}
