//! Synthetic datasets for tests, demos and the bundled end-to-end run.
//!
//! * H&E-like images composed in optical density from hematoxylin and eosin
//!   vectors; malignant images carry denser, larger nuclei.
//! * A complementary set where each RGB channel carries one label bit as
//!   texture (smooth ramp vs fine checkerboard) and the label is the majority
//!   of the three bits.
//! * Folder skeletons for the Bioimaging and BreakHis layouts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::BinaryLabel;
use crate::error::{Error, Result};
use crate::image::ImageTensor;

pub const HEMATOXYLIN_OD: [f64; 3] = [0.65, 0.70, 0.29];
pub const EOSIN_OD: [f64; 3] = [0.07, 0.99, 0.11];
pub const FIXTURE_IO: f64 = 240.0;

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Render OD = h·H + e·E per pixel through `I = I0·10^-OD`.
pub fn compose_stains(
    size: usize,
    stains: [[f64; 3]; 2],
    concentrations: &[[f64; 2]],
    io: f64,
) -> Result<ImageTensor> {
    let mut data = Vec::with_capacity(size * size * 3);
    for c in concentrations {
        for ch in 0..3 {
            let od = stains[0][ch] * c[0] + stains[1][ch] * c[1];
            data.push((io * 10f64.powf(-od)).round().clamp(0.0, 255.0));
        }
    }
    ImageTensor::rgb8(size, size, data)
}

/// One H&E-like tile. The stain vectors are perturbed per image so that
/// stain normalization has something to correct.
pub fn he_image(size: usize, label: BinaryLabel, seed: u64) -> Result<ImageTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |v: [f64; 3]| unit(v.map(|x| (x + rng.random_range(-0.04..0.04)).max(0.01)));
    let stains = [jitter(HEMATOXYLIN_OD), jitter(EOSIN_OD)];
    let scale = rng.random_range(0.85..1.15);

    let (count, radius) = match label {
        BinaryLabel::Benign => (rng.random_range(4..8), (2.0, 3.5)),
        BinaryLabel::Malignant => (rng.random_range(18..26), (3.5, 6.0)),
    };
    let s = size as f64;
    let nuclei: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            (
                rng.random_range(0.0..s),
                rng.random_range(0.0..s),
                rng.random_range(radius.0..radius.1) * s / 64.0,
                rng.random_range(1.0..1.5),
            )
        })
        .collect();
    // a few lumen-like holes of bare background
    let holes: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| (rng.random_range(0.0..s), rng.random_range(0.0..s), rng.random_range(3.0..7.0) * s / 64.0))
        .collect();
    let phase = rng.random_range(0.0..std::f64::consts::TAU);

    let mut conc = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f64, x as f64);
            let wave = 0.5 + 0.5 * ((fx * 0.21 + phase).sin() * (fy * 0.17 - phase).cos());
            let mut e = (0.35 + 0.45 * wave + rng.random_range(-0.05..0.05)) * scale;
            let mut h = (0.4 + 0.2 * wave + rng.random_range(-0.05..0.05)) * scale;
            for &(cy, cx, r, strength) in &nuclei {
                let d2 = (fy - cy).powi(2) + (fx - cx).powi(2);
                if d2 <= r * r {
                    h = h.max(strength * scale * (1.0 - 0.3 * d2 / (r * r)));
                    e *= 0.4;
                }
            }
            for &(cy, cx, r) in &holes {
                if (fy - cy).powi(2) + (fx - cx).powi(2) <= r * r {
                    h = 0.0;
                    e = 0.0;
                }
            }
            conc.push([h.max(0.0), e.max(0.0)]);
        }
    }
    compose_stains(size, stains, &conc, FIXTURE_IO)
}

/// ICIAR layout (`Normal/Benign/InSitu/Invasive`) with `per_class` PNG tiles
/// in each folder.
pub fn write_iciar_fixture(root: &Path, per_class: usize, size: usize, seed: u64) -> Result<()> {
    const CLASSES: [(&str, BinaryLabel); 4] = [
        ("Normal", BinaryLabel::Benign),
        ("Benign", BinaryLabel::Benign),
        ("InSitu", BinaryLabel::Malignant),
        ("Invasive", BinaryLabel::Malignant),
    ];
    for (ci, (name, label)) in CLASSES.iter().enumerate() {
        let dir = root.join(name);
        ensure_dir(&dir)?;
        for i in 0..per_class {
            let img_seed = seed.wrapping_mul(1_000_003).wrapping_add((ci * 10_000 + i) as u64);
            he_image(size, *label, img_seed)?.save_png(&dir.join(format!("{name}_{i:03}.png")))?;
        }
    }
    Ok(())
}

/// Channel texture for one bit: a smooth diagonal ramp (0) or a fine
/// checkerboard (1), both spanning the same intensity range.
fn bit_channel(bit: bool, y: usize, x: usize, size: usize, offset: usize) -> f64 {
    const LO: f64 = 20.0;
    const HI: f64 = 235.0;
    if bit {
        if (x + y + offset).is_multiple_of(2) {
            HI
        } else {
            LO
        }
    } else {
        let t = ((x + y + offset) % (2 * size)) as f64 / (2 * size - 1) as f64;
        LO + (HI - LO) * t
    }
}

pub fn complementary_image(size: usize, bits: [bool; 3], seed: u64) -> Result<ImageTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: [usize; 3] = std::array::from_fn(|_| rng.random_range(0..size));
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            for (c, &bit) in bits.iter().enumerate() {
                let v = bit_channel(bit, y, x, size, offsets[c]) + rng.random_range(-6.0..6.0);
                data.push(v.round().clamp(20.0, 235.0));
            }
        }
    }
    // pin the range so global min-max maps every image identically
    data[0] = 20.0;
    data[1] = 235.0;
    ImageTensor::rgb8(size, size, data)
}

/// Majority of the three channel bits.
pub fn complementary_label(bits: [bool; 3]) -> BinaryLabel {
    if bits.iter().filter(|&&b| b).count() >= 2 {
        BinaryLabel::Malignant
    } else {
        BinaryLabel::Benign
    }
}

/// PCam layout (`benign/`, `malignant/`) with `per_pattern` images for each
/// of the eight bit patterns.
pub fn write_complementary_fixture(root: &Path, per_pattern: usize, size: usize, seed: u64) -> Result<()> {
    for label in ["benign", "malignant"] {
        ensure_dir(&root.join(label))?;
    }
    for pattern in 0..8u8 {
        let bits = [pattern & 1 != 0, pattern & 2 != 0, pattern & 4 != 0];
        let label = complementary_label(bits);
        for i in 0..per_pattern {
            let img_seed = seed.wrapping_mul(7919).wrapping_add(u64::from(pattern) * 1000 + i as u64);
            let path = root
                .join(label.as_str())
                .join(format!("p{pattern}_{i:03}.png"));
            complementary_image(size, bits, img_seed)?.save_png(&path)?;
        }
    }
    Ok(())
}

fn tiny_png(path: &Path, shade: u8) -> Result<()> {
    ImageTensor::rgb8(4, 4, vec![f64::from(shade); 48])?.save_png(path)
}

/// Bioimaging published layout: `train/` and `test/` with the four class
/// folders, filled with placeholder tiles in the given per-class counts
/// (`[normal, benign, insitu, invasive]`).
pub fn write_bioimaging_layout(root: &Path, train_counts: [usize; 4], test_counts: [usize; 4]) -> Result<()> {
    const CLASSES: [&str; 4] = ["Normal", "Benign", "InSitu", "Invasive"];
    for (split, counts) in [("train", train_counts), ("test", test_counts)] {
        for (name, &n) in CLASSES.iter().zip(&counts) {
            let dir = root.join(split).join(name);
            ensure_dir(&dir)?;
            for i in 0..n {
                tiny_png(&dir.join(format!("{name}_{i:03}.png")), (i % 250) as u8)?;
            }
        }
    }
    Ok(())
}

/// BreakHis-style tree with official file names: `patients` patients per
/// class, every patient imaged at all four magnifications.
pub fn write_breakhis_fixture(root: &Path, patients: usize, per_magnification: usize) -> Result<()> {
    for (kind, dir, subtype) in [("B", "benign", "A"), ("M", "malignant", "DC")] {
        for p in 0..patients {
            let patient = format!("{}-{:05}{}", 10 + p, 20000 + p * 37, kind);
            let pdir = root.join(dir).join(format!("SOB_{kind}_{subtype}_{patient}"));
            for mag in [40, 100, 200, 400] {
                let mdir = pdir.join(format!("{mag}X"));
                ensure_dir(&mdir)?;
                for s in 0..per_magnification {
                    let name = format!("SOB_{kind}_{subtype}-{patient}-{mag}-{:03}.png", s + 1);
                    tiny_png(&mdir.join(name), (p * 10 + s) as u8)?;
                }
            }
        }
    }
    Ok(())
}

/// Two Gaussian-like blobs in `dim` dimensions with centers at `±separation/2`
/// along the first axis; `n` samples alternating between classes.
pub fn separable_blobs(n: usize, dim: usize, separation: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let sign = if class == 1 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..dim)
            .map(|d| {
                // sum of uniforms: roughly normal with unit variance
                let noise: f64 = (0..12).map(|_| rng.random_range(0.0..1.0)).sum::<f64>() - 6.0;
                if d == 0 {
                    sign * separation / 2.0 + noise * 0.5
                } else {
                    noise
                }
            })
            .collect();
        xs.push(x);
        ys.push(class);
    }
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn he_images_are_deterministic_and_class_dependent() {
        let a = he_image(64, BinaryLabel::Malignant, 3).unwrap();
        assert_eq!(a, he_image(64, BinaryLabel::Malignant, 3).unwrap());
        let mean_red = |img: &ImageTensor| img.pixels().map(|p| p[0]).sum::<f64>() / img.pixel_count() as f64;
        let benign = he_image(64, BinaryLabel::Benign, 3).unwrap();
        assert!(mean_red(&a) < mean_red(&benign));
    }

    #[test]
    fn complementary_labels_are_majority() {
        assert_eq!(complementary_label([true, false, true]), BinaryLabel::Malignant);
        assert_eq!(complementary_label([false, false, true]), BinaryLabel::Benign);
        let img = complementary_image(16, [true, false, false], 1).unwrap();
        let lo = img.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = img.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (20.0, 235.0));
    }

    #[test]
    fn blobs_alternate_classes() {
        let (x, y) = separable_blobs(10, 4, 6.0, 0);
        assert_eq!(x.len(), 10);
        assert_eq!(y[..4], [0, 1, 0, 1]);
        assert!(x.iter().all(|r| r.len() == 4));
    }
}
