//! Seeded offline augmentation.
//!
//! Every augmented image is a pure function of the source pixels, the config
//! and a draw index. Transforms are applied in a fixed order: flips, rotation,
//! shear, zoom (composed into one affine map and resampled once with bicubic
//! interpolation and edge replication), then linear contrast about the image
//! mean.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::datasets::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageTensor, ValueRange};
use crate::kv::KvDoc;
use crate::preprocess::cubic_kernel;

pub const CONTRAST_RANGE: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FillMode {
    #[default]
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub contrast_enhancement: bool,
    /// Zoom factor drawn from `[1 - zoom_range, 1 + zoom_range]`.
    pub zoom_range: f64,
    /// Shear angle in radians drawn from `[-shear_range, shear_range]`.
    pub shear_range: f64,
    /// Degrees; rotation drawn from `[-rotation_range, rotation_range]`.
    pub rotation_range: f64,
    pub fill_mode: FillMode,
    pub copies_per_image: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            horizontal_flip: true,
            vertical_flip: true,
            contrast_enhancement: true,
            zoom_range: 0.2,
            shear_range: 0.2,
            rotation_range: 90.0,
            fill_mode: FillMode::Nearest,
            copies_per_image: 3,
            seed: 0,
        }
    }
}

pub const AUGMENT_KEYS: [&str; 9] = [
    "horizontal_flip",
    "vertical_flip",
    "contrast_enhancement",
    "zoom_range",
    "shear_range",
    "rotation_range",
    "fill_mode",
    "copies_per_image",
    "seed",
];

impl AugmentConfig {
    /// All ranges zero and every switch off.
    pub fn identity() -> Self {
        Self {
            horizontal_flip: false,
            vertical_flip: false,
            contrast_enhancement: false,
            zoom_range: 0.0,
            shear_range: 0.0,
            rotation_range: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.zoom_range) || self.zoom_range >= 1.0 {
            return Err(Error::Config("augment: zoom_range must lie in [0, 1)".into()));
        }
        if !finite_nonneg(self.shear_range) {
            return Err(Error::Config("augment: shear_range must be >= 0".into()));
        }
        if !(finite_nonneg(self.rotation_range) && self.rotation_range <= 360.0) {
            return Err(Error::Config("augment: rotation_range must lie in [0, 360]".into()));
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc, section: &str) -> Result<Self> {
        let s = doc.section(section);
        s.expect_keys(&AUGMENT_KEYS)?;
        let d = Self::default();
        let fill_mode = match s.raw("fill_mode").map(str::to_ascii_lowercase).as_deref() {
            None | Some("nearest") => FillMode::Nearest,
            Some(other) => {
                return Err(Error::Config(format!(
                    "augment: fill_mode {other:?} unsupported (only nearest)"
                )))
            }
        };
        let cfg = Self {
            horizontal_flip: s.bool_or("horizontal_flip", d.horizontal_flip)?,
            vertical_flip: s.bool_or("vertical_flip", d.vertical_flip)?,
            contrast_enhancement: s.bool_or("contrast_enhancement", d.contrast_enhancement)?,
            zoom_range: s.parse_or("zoom_range", d.zoom_range)?,
            shear_range: s.parse_or("shear_range", d.shear_range)?,
            rotation_range: s.parse_or("rotation_range", d.rotation_range)?,
            fill_mode,
            copies_per_image: s.parse_or("copies_per_image", d.copies_per_image)?,
            seed: s.parse_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse(text)?, "")
    }

    /// Canonical text form, also used for cache keys.
    pub fn to_text(&self) -> String {
        format!(
            "horizontal_flip = {}\nvertical_flip = {}\ncontrast_enhancement = {}\nzoom_range = {:?}\n\
             shear_range = {:?}\nrotation_range = {:?}\nfill_mode = nearest\ncopies_per_image = {}\nseed = {}\n",
            self.horizontal_flip,
            self.vertical_flip,
            self.contrast_enhancement,
            self.zoom_range,
            self.shear_range,
            self.rotation_range,
            self.copies_per_image,
            self.seed
        )
    }
}

/// One concrete draw of the random transform parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub flip_horizontal: bool,
    pub flip_vertical: bool,
    pub rotation_degrees: f64,
    pub shear_radians: f64,
    pub zoom: f64,
    /// `None` when contrast enhancement is disabled.
    pub contrast: Option<f64>,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self {
            flip_horizontal: false,
            flip_vertical: false,
            rotation_degrees: 0.0,
            shear_radians: 0.0,
            zoom: 1.0,
            contrast: None,
        }
    }

    /// All values come from the stream selected by `(cfg.seed, draw_index)`;
    /// every value is drawn even when its transform is disabled so that
    /// streams stay aligned across configs.
    pub fn sample(cfg: &AugmentConfig, draw_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(draw_index);
        let mut symmetric = |range: f64| range * (2.0 * rng.random::<f64>() - 1.0);
        let fh = symmetric(1.0) < 0.0;
        let fv = symmetric(1.0) < 0.0;
        let rotation_degrees = symmetric(cfg.rotation_range);
        let shear_radians = symmetric(cfg.shear_range);
        let zoom = 1.0 + symmetric(cfg.zoom_range);
        let (lo, hi) = CONTRAST_RANGE;
        let c = lo + (hi - lo) * rng.random::<f64>();
        Self {
            flip_horizontal: cfg.horizontal_flip && fh,
            flip_vertical: cfg.vertical_flip && fv,
            rotation_degrees,
            shear_radians,
            zoom,
            contrast: cfg.contrast_enhancement.then_some(c),
        }
    }

    /// Forward 2×2 map on centered (x, y) coordinates.
    fn forward_matrix(&self) -> [[f64; 2]; 2] {
        let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
            [
                [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
                [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
            ]
        };
        let flip = [
            [if self.flip_horizontal { -1.0 } else { 1.0 }, 0.0],
            [0.0, if self.flip_vertical { -1.0 } else { 1.0 }],
        ];
        let (s, c) = self.rotation_degrees.to_radians().sin_cos();
        let rotate = [[c, -s], [s, c]];
        let (ss, sc) = self.shear_radians.sin_cos();
        let shear = [[1.0, -ss], [0.0, sc]];
        let zoom = [[self.zoom, 0.0], [0.0, self.zoom]];
        mul(zoom, mul(shear, mul(rotate, flip)))
    }
}

fn is_identity(m: &[[f64; 2]; 2]) -> bool {
    *m == [[1.0, 0.0], [0.0, 1.0]]
}

/// Bicubic sample at fractional source coordinates; taps outside the image
/// replicate the nearest edge pixel.
fn sample_bicubic(img: &ImageTensor, sx: f64, sy: f64) -> [f64; 3] {
    let (h, w) = img.dims();
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let wx = [cubic_kernel(fx + 1.0), cubic_kernel(fx), cubic_kernel(1.0 - fx), cubic_kernel(2.0 - fx)];
    let wy = [cubic_kernel(fy + 1.0), cubic_kernel(fy), cubic_kernel(1.0 - fy), cubic_kernel(2.0 - fy)];
    let clampi = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64) as usize;
    let mut acc = [0.0; 3];
    for (j, wyj) in wy.iter().enumerate() {
        if *wyj == 0.0 {
            continue;
        }
        let yy = clampi(y0 + j as f64 - 1.0, h);
        for (i, wxi) in wx.iter().enumerate() {
            if *wxi == 0.0 {
                continue;
            }
            let xx = clampi(x0 + i as f64 - 1.0, w);
            let wt = wyj * wxi;
            for (c, a) in acc.iter_mut().enumerate() {
                *a += wt * img.get(yy, xx, c);
            }
        }
    }
    acc
}

/// Apply a specific draw.
pub fn apply_draw(img: &ImageTensor, draw: &AugmentDraw) -> Result<ImageTensor> {
    if img.space() != ColorSpace::Rgb {
        return Err(Error::InvalidInput("augmentation expects an RGB image".into()));
    }
    let (h, w) = img.dims();
    let max = img.range().max();
    let round = img.range() == ValueRange::Uint8;
    let finish = |v: f64| {
        let v = if round { v.round() } else { v };
        v.clamp(0.0, max)
    };

    let m = draw.forward_matrix();
    let mut data = if is_identity(&m) {
        img.data().to_vec()
    } else {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let mut out = Vec::with_capacity(h * w * 3);
        for y in 0..h {
            let dy = y as f64 - cy;
            for x in 0..w {
                let dx = x as f64 - cx;
                let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
                let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
                out.extend(sample_bicubic(img, sx, sy).map(finish));
            }
        }
        out
    };

    if let Some(c) = draw.contrast {
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        data.iter_mut().for_each(|v| *v = finish(c * (*v - mean) + mean));
    }
    ImageTensor::new(h, w, data, img.range(), ColorSpace::Rgb)
}

pub fn augment_one(img: &ImageTensor, cfg: &AugmentConfig, draw_index: u64) -> Result<ImageTensor> {
    apply_draw(img, &AugmentDraw::sample(cfg, draw_index))
}

fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".histofuse-write-probe");
    std::fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Write `copies_per_image` variants of every train image into `out_dir` and
/// append them to the manifest with the source's labels. Test records are
/// never read or modified.
pub fn augment_manifest(
    manifest: &DatasetManifest,
    cfg: &AugmentConfig,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    if manifest.in_split(Split::Train).next().is_none() {
        return Err(Error::InvalidInput("manifest has no train split".into()));
    }
    if cfg.copies_per_image == 0 {
        return Ok(manifest.clone());
    }
    ensure_writable(out_dir)?;

    let train: Vec<_> = manifest.in_split(Split::Train).collect();
    let copies = cfg.copies_per_image;
    let generated: Vec<Vec<_>> = train
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let img = ImageTensor::load(&record.image_path)?;
            let stem = record
                .image_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image");
            (0..copies)
                .map(|k| {
                    let draw_index = (i * copies + k) as u64;
                    let out = augment_one(&img, cfg, draw_index)?;
                    let path: PathBuf = out_dir.join(format!("{i:06}_{stem}_aug{k}.png"));
                    out.save_png(&path)?;
                    let mut r = (*record).clone();
                    r.image_path = path;
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut records = manifest.records.clone();
    records.extend(generated.into_iter().flatten());
    let out = DatasetManifest {
        records,
        seed: manifest.seed,
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> ImageTensor {
        let data = (0..h * w * 3)
            .map(|i| f64::from(((i / 3) * 13 + (i % 3) * 71) as u8))
            .collect();
        ImageTensor::rgb8(h, w, data).unwrap()
    }

    #[test]
    fn identity_config_is_identity() {
        let img = gradient_image(17, 23);
        let cfg = AugmentConfig::identity();
        for draw in 0..5 {
            assert_eq!(augment_one(&img, &cfg, draw).unwrap(), img);
        }
    }

    #[test]
    fn flips_are_involutions() {
        let img = gradient_image(9, 12);
        for draw in [
            AugmentDraw { flip_horizontal: true, ..AugmentDraw::identity() },
            AugmentDraw { flip_vertical: true, ..AugmentDraw::identity() },
        ] {
            let once = apply_draw(&img, &draw).unwrap();
            assert_ne!(once, img);
            assert_eq!(apply_draw(&once, &draw).unwrap(), img);
        }
        let once = apply_draw(&img, &AugmentDraw { flip_horizontal: true, ..AugmentDraw::identity() }).unwrap();
        assert_eq!(once.get(0, 0, 0), img.get(0, 11, 0));
    }

    #[test]
    fn deterministic_and_index_sensitive() {
        let img = gradient_image(32, 32);
        let cfg = AugmentConfig { seed: 11, ..Default::default() };
        let a = augment_one(&img, &cfg, 4).unwrap();
        assert_eq!(a, augment_one(&img, &cfg, 4).unwrap());
        assert_ne!(a, augment_one(&img, &cfg, 5).unwrap());
        assert_eq!(a.dims(), img.dims());
        assert!(a.data().iter().all(|v| (0.0..=255.0).contains(v) && v.fract() == 0.0));
    }

    #[test]
    fn draws_respect_ranges() {
        let cfg = AugmentConfig { seed: 3, ..Default::default() };
        for i in 0..200 {
            let d = AugmentDraw::sample(&cfg, i);
            assert!(d.rotation_degrees.abs() <= 90.0);
            assert!(d.shear_radians.abs() <= 0.2);
            assert!((0.8..=1.2).contains(&d.zoom));
            let c = d.contrast.unwrap();
            assert!((0.8..=1.2).contains(&c));
        }
    }

    #[test]
    fn config_text_round_trip_and_validation() {
        let cfg = AugmentConfig { copies_per_image: 5, seed: 9, zoom_range: 0.1, ..Default::default() };
        assert_eq!(AugmentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert!(AugmentConfig::parse("rotation_range = 400").is_err());
        assert!(AugmentConfig::parse("zoom_range = -0.1").is_err());
        assert!(AugmentConfig::parse("fill_mode = reflect").is_err());
        assert!(AugmentConfig::parse("colour = 1").is_err());
    }
}
