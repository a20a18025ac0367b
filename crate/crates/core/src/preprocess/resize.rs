//! Separable bicubic resampling (Keys kernel, a = -0.5). When shrinking, the
//! kernel is stretched by the scale factor so that it also low-pass filters.

use crate::error::{Error, Result};
use crate::image::{ImageTensor, ValueRange};

pub const MODEL_INPUT_SIZE: usize = 224;

const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel.
#[inline]
pub fn cubic_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        ((KEYS_A + 2.0) * x - (KEYS_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * KEYS_A
    } else {
        0.0
    }
}

/// Per output index: first source index and normalized tap weights.
struct Taps {
    start: Vec<isize>,
    weights: Vec<Vec<f64>>,
}

fn taps(src: usize, dst: usize) -> Taps {
    let scale = src as f64 / dst as f64;
    let support = 2.0 * scale.max(1.0);
    let stretch = scale.max(1.0);
    let mut start = Vec::with_capacity(dst);
    let mut weights = Vec::with_capacity(dst);
    for i in 0..dst {
        let center = (i as f64 + 0.5) * scale - 0.5;
        let lo = (center - support).floor() as isize + 1;
        let hi = (center + support).ceil() as isize - 1;
        let mut w: Vec<f64> = (lo..=hi)
            .map(|j| cubic_kernel((j as f64 - center) / stretch))
            .collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        start.push(lo);
        weights.push(w);
    }
    Taps { start, weights }
}

#[inline]
fn clamp_index(j: isize, n: usize) -> usize {
    j.clamp(0, n as isize - 1) as usize
}

pub fn resize_bicubic(img: &ImageTensor, height: usize, width: usize) -> Result<ImageTensor> {
    let (h, w) = img.dims();
    if h < 4 || w < 4 {
        return Err(Error::Shape(format!(
            "bicubic resize needs at least 4x4 pixels, got {h}x{w}"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::Shape("resize target must be non-empty".into()));
    }
    if (h, w) == (height, width) {
        return Ok(img.clone());
    }
    let src = img.data();
    let (tx, ty) = (taps(w, width), taps(h, height));

    // horizontal pass: h x width
    let mut mid = vec![0.0; h * width * 3];
    for y in 0..h {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for (k, wt) in tx.weights[x].iter().enumerate() {
                let sx = clamp_index(tx.start[x] + k as isize, w);
                let p = (y * w + sx) * 3;
                for c in 0..3 {
                    acc[c] += wt * src[p + c];
                }
            }
            mid[(y * width + x) * 3..][..3].copy_from_slice(&acc);
        }
    }

    let max = img.range().max();
    let round = img.range() == ValueRange::Uint8;
    let mut out = vec![0.0; height * width * 3];
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; 3];
            for (k, wt) in ty.weights[y].iter().enumerate() {
                let sy = clamp_index(ty.start[y] + k as isize, h);
                let p = (sy * width + x) * 3;
                for c in 0..3 {
                    acc[c] += wt * mid[p + c];
                }
            }
            for c in 0..3 {
                let v = if round { acc[c].round() } else { acc[c] };
                out[(y * width + x) * 3 + c] = v.clamp(0.0, max);
            }
        }
    }
    ImageTensor::new(height, width, out, img.range(), img.space())
}

/// Resize to the 224×224 backbone input size.
pub fn resize_to_model_input(img: &ImageTensor) -> Result<ImageTensor> {
    resize_bicubic(img, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        // partition of unity at any offset
        for t in [0.1, 0.25, 0.5, 0.9] {
            let s: f64 = (-1..=2).map(|j| cubic_kernel(j as f64 - t)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_size_is_identity() {
        let data: Vec<f64> = (0..8 * 8 * 3).map(|i| f64::from((i * 37 % 256) as u8)).collect();
        let img = ImageTensor::rgb8(8, 8, data).unwrap();
        assert_eq!(resize_bicubic(&img, 8, 8).unwrap(), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageTensor::filled(448, 448, [93.0, 12.0, 250.0], ValueRange::Uint8).unwrap();
        let out = resize_to_model_input(&img).unwrap();
        assert_eq!(out.dims(), (224, 224));
        assert!(out.pixels().all(|p| p == [93.0, 12.0, 250.0]));
    }

    #[test]
    fn upsamples_pcam_patch() {
        let data: Vec<f64> = (0..96 * 96 * 3).map(|i| f64::from((i % 251) as u8)).collect();
        let img = ImageTensor::rgb8(96, 96, data).unwrap();
        let out = resize_to_model_input(&img).unwrap();
        assert_eq!(out.dims(), (224, 224));
        assert!(out.data().iter().all(|v| (0.0..=255.0).contains(v)));
    }

    #[test]
    fn rejects_tiny_sources() {
        let img = ImageTensor::filled(3, 10, [0.0; 3], ValueRange::Uint8).unwrap();
        assert!(resize_to_model_input(&img).is_err());
    }
}
