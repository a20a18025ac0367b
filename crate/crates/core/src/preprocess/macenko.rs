//! Macenko stain estimation and normalization for two-stain (H&E) images.
//!
//! Tissue pixels are those whose optical density exceeds `od_threshold` on all
//! three channels. Their OD covariance is eigen-decomposed; the two leading
//! eigenvectors span the stain plane. Each tissue pixel is projected onto that
//! plane, and the `angle_percentile` / `100 - angle_percentile` angle
//! percentiles give the two extreme stain directions. Hematoxylin is the
//! direction with the larger blue OD component.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::od::{intensity_of, od_of};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageTensor, ValueRange};

/// Second covariance eigenvalue must exceed this fraction of the first for
/// two stains to be distinguishable.
pub const SEPARABILITY_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacenkoParams {
    /// Minimum OD on every channel for a pixel to count as tissue.
    pub od_threshold: f64,
    /// Percent; extreme stain angles are taken at this and `100 - this`.
    pub angle_percentile: f64,
    /// Percent; robust per-stain maximum concentration.
    pub concentration_percentile: f64,
    pub io_intensity: f64,
    pub min_tissue_pixels: usize,
}

impl Default for MacenkoParams {
    fn default() -> Self {
        Self {
            od_threshold: 0.15,
            angle_percentile: 1.0,
            concentration_percentile: 99.0,
            io_intensity: 240.0,
            min_tissue_pixels: 100,
        }
    }
}

impl MacenkoParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("macenko: {what}")));
        if !(self.od_threshold > 0.0) {
            return bad("od_threshold must be > 0");
        }
        if !(self.angle_percentile > 0.0 && self.angle_percentile < 50.0) {
            return bad("angle_percentile must lie in (0, 50)");
        }
        if !(self.concentration_percentile > 50.0 && self.concentration_percentile < 100.0) {
            return bad("concentration_percentile must lie in (50, 100)");
        }
        if !(self.io_intensity > 0.0 && self.io_intensity.is_finite()) {
            return bad("io_intensity must be > 0");
        }
        if self.min_tissue_pixels < 2 {
            return bad("min_tissue_pixels must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StainModel {
    /// Rows are R, G, B; column 0 is hematoxylin, column 1 eosin.
    pub stain_matrix: [[f64; 2]; 3],
    pub max_concentrations: [f64; 2],
    pub io_intensity: f64,
}

impl StainModel {
    pub fn new(stain_matrix: [[f64; 2]; 3], max_concentrations: [f64; 2], io_intensity: f64) -> Result<Self> {
        let model = Self {
            stain_matrix,
            max_concentrations,
            io_intensity,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        for k in 0..2 {
            let col = self.column(k);
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput(format!("stain column {k} has negative entries")));
            }
            if (col.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!("stain column {k} is not unit length")));
            }
            if !(self.max_concentrations[k] > 0.0 && self.max_concentrations[k].is_finite()) {
                return Err(Error::InvalidInput(format!("max concentration {k} must be > 0")));
            }
        }
        if !(self.io_intensity > 0.0) {
            return Err(Error::InvalidInput("io_intensity must be > 0".into()));
        }
        Ok(())
    }

    pub fn column(&self, k: usize) -> Vector3<f64> {
        Vector3::new(
            self.stain_matrix[0][k],
            self.stain_matrix[1][k],
            self.stain_matrix[2][k],
        )
    }

    /// Least-squares concentrations of every pixel, negatives clamped to 0.
    pub fn concentrations(&self, od_pixels: &[[f64; 3]]) -> Vec<[f64; 2]> {
        let pinv = pseudo_inverse(&self.column(0), &self.column(1));
        od_pixels
            .iter()
            .map(|p| {
                let c0 = pinv[0][0] * p[0] + pinv[0][1] * p[1] + pinv[0][2] * p[2];
                let c1 = pinv[1][0] * p[0] + pinv[1][1] * p[1] + pinv[1][2] * p[2];
                [c0.max(0.0), c1.max(0.0)]
            })
            .collect()
    }

    /// Six stain-matrix entries (row-major), two maxima, then I0; one value
    /// per line. Lines starting with `#` are comments.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# stain model: 3x2 stain matrix (row-major, H then E), 2 max concentrations, I0\n");
        for row in &self.stain_matrix {
            for v in row {
                writeln!(out, "{v:?}").unwrap();
            }
        }
        for v in &self.max_concentrations {
            writeln!(out, "{v:?}").unwrap();
        }
        writeln!(out, "{:?}", self.io_intensity).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let values = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| Error::format("stain model", format!("not a number: {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != 9 {
            return Err(Error::format(
                "stain model",
                format!("expected 9 values, found {}", values.len()),
            ));
        }
        Self::new(
            [
                [values[0], values[1]],
                [values[2], values[3]],
                [values[4], values[5]],
            ],
            [values[6], values[7]],
            values[8],
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// `(SᵀS)⁻¹Sᵀ` for the 3×2 matrix with columns `a`, `b`.
fn pseudo_inverse(a: &Vector3<f64>, b: &Vector3<f64>) -> [[f64; 3]; 2] {
    let (aa, ab, bb) = (a.dot(a), a.dot(b), b.dot(b));
    let det = aa * bb - ab * ab;
    let mut out = [[0.0; 3]; 2];
    for i in 0..3 {
        out[0][i] = (bb * a[i] - ab * b[i]) / det;
        out[1][i] = (aa * b[i] - ab * a[i]) / det;
    }
    out
}

/// Linear-interpolated percentile of already sorted values.
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    percentile_sorted(values, pct)
}

fn od_pixels(img: &ImageTensor, io: f64) -> Result<Vec<[f64; 3]>> {
    if img.space() != ColorSpace::Rgb {
        return Err(Error::InvalidInput("stain estimation expects an RGB image".into()));
    }
    let scale = 255.0 / img.range().max();
    Ok(img
        .pixels()
        .map(|p| p.map(|v| od_of(v * scale, io)))
        .collect())
}

/// Unit vector with non-negative entries pointing along `v` (or `-v`).
fn positive_unit(v: Vector3<f64>) -> Vector3<f64> {
    let v = if v.sum() < 0.0 { -v } else { v };
    let clamped = v.map(|x| x.max(0.0));
    clamped / clamped.norm()
}

pub fn fit_stain_model(img: &ImageTensor, params: &MacenkoParams) -> Result<StainModel> {
    params.validate()?;
    let od = od_pixels(img, params.io_intensity)?;
    let beta = params.od_threshold;
    let tissue: Vec<Vector3<f64>> = od
        .iter()
        .filter(|p| p.iter().all(|&v| v > beta))
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect();
    if tissue.len() < params.min_tissue_pixels {
        return Err(Error::InsufficientTissue {
            found: tissue.len(),
            required: params.min_tissue_pixels,
        });
    }

    let n = tissue.len() as f64;
    let mean = tissue.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let cov = tissue.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    }) / (n - 1.0);

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let (first, second) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(first > 0.0) || second <= SEPARABILITY_RATIO * first {
        return Err(Error::StainsNotSeparable { first, second });
    }
    let orient = |v: Vector3<f64>| if v.sum() < 0.0 { -v } else { v };
    let e1 = orient(eig.eigenvectors.column(order[0]).into_owned());
    let e2 = orient(eig.eigenvectors.column(order[1]).into_owned());

    let mut angles: Vec<f64> = tissue.iter().map(|p| p.dot(&e2).atan2(p.dot(&e1))).collect();
    angles.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&angles, params.angle_percentile);
    let hi = percentile_sorted(&angles, 100.0 - params.angle_percentile);
    let v_lo = positive_unit(e1 * lo.cos() + e2 * lo.sin());
    let v_hi = positive_unit(e1 * hi.cos() + e2 * hi.sin());
    if v_lo.iter().any(|v| !v.is_finite()) || v_hi.iter().any(|v| !v.is_finite()) {
        return Err(Error::StainsNotSeparable { first, second });
    }
    let (h, e) = if v_lo[2] >= v_hi[2] { (v_lo, v_hi) } else { (v_hi, v_lo) };

    let mut model = StainModel {
        stain_matrix: [[h[0], e[0]], [h[1], e[1]], [h[2], e[2]]],
        max_concentrations: [0.0; 2],
        io_intensity: params.io_intensity,
    };
    let tissue_od: Vec<[f64; 3]> = tissue.iter().map(|p| [p[0], p[1], p[2]]).collect();
    let conc = model.concentrations(&tissue_od);
    for k in 0..2 {
        let mut column: Vec<f64> = conc.iter().map(|c| c[k]).collect();
        model.max_concentrations[k] = percentile(&mut column, params.concentration_percentile);
    }
    if model.max_concentrations.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::StainsNotSeparable { first, second });
    }
    Ok(model)
}

/// Map `img` onto the reference stain basis and concentration scale.
pub fn stain_normalize(
    img: &ImageTensor,
    reference: &StainModel,
    params: &MacenkoParams,
) -> Result<ImageTensor> {
    let source = fit_stain_model(img, params)?;
    let od = od_pixels(img, params.io_intensity)?;
    let scale = [
        reference.max_concentrations[0] / source.max_concentrations[0],
        reference.max_concentrations[1] / source.max_concentrations[1],
    ];
    let (h, e) = (reference.column(0), reference.column(1));
    let mut data = Vec::with_capacity(od.len() * 3);
    for c in source.concentrations(&od) {
        let mixed = h * (c[0] * scale[0]) + e * (c[1] * scale[1]);
        data.extend(mixed.iter().map(|&v| intensity_of(v, reference.io_intensity)));
    }
    Ok(ImageTensor::from_parts(
        img.height(),
        img.width(),
        data,
        ValueRange::Uint8,
        ColorSpace::Rgb,
    ))
}

/// What to do when an image has too little tissue to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TissueFallback {
    /// Return the input unchanged and flag it.
    #[default]
    PassThrough,
    Fail,
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub image: ImageTensor,
    /// Set when the image was passed through unmodified.
    pub passed_through: bool,
}

/// `stain_normalize` with the batch failure policy applied.
pub fn stain_normalize_or_pass(
    img: &ImageTensor,
    reference: &StainModel,
    params: &MacenkoParams,
    fallback: TissueFallback,
) -> Result<Normalized> {
    match stain_normalize(img, reference, params) {
        Ok(image) => Ok(Normalized {
            image,
            passed_through: false,
        }),
        Err(Error::InsufficientTissue { .. }) if fallback == TissueFallback::PassThrough => {
            Ok(Normalized {
                image: img.to_uint8_range(),
                passed_through: true,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(MacenkoParams::default().validate().is_ok());
        let p = MacenkoParams {
            angle_percentile: 50.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = MacenkoParams {
            concentration_percentile: 50.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = MacenkoParams {
            min_tissue_pixels: 1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn white_image_has_no_tissue() {
        let img = ImageTensor::filled(32, 32, [240.0; 3], ValueRange::Uint8).unwrap();
        let err = fit_stain_model(&img, &MacenkoParams::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientTissue { found: 0, .. }), "{err}");
    }

    #[test]
    fn percentile_matches_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&v, 0.0), 1.0);
        assert_eq!(percentile_sorted(&v, 50.0), 3.0);
        assert_eq!(percentile_sorted(&v, 100.0), 5.0);
        assert!((percentile_sorted(&v, 10.0) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let s = 1.0 / 3f64.sqrt();
        let model = StainModel::new([[s, 0.0], [s, 0.6], [s, 0.8]], [1.25, 0.7], 240.0).unwrap();
        let text = format!("# leading comment\n{}", model.to_text());
        assert_eq!(StainModel::from_text(&text).unwrap(), model);
        assert!(StainModel::from_text("1\n2\n").is_err());
    }

    #[test]
    fn pseudo_inverse_recovers_mixtures() {
        let a = Vector3::new(0.6, 0.7, 0.4).normalize();
        let b = Vector3::new(0.2, 0.9, 0.3).normalize();
        let p = pseudo_inverse(&a, &b);
        let od = a * 0.7 + b * 0.3;
        let c0 = p[0][0] * od[0] + p[0][1] * od[1] + p[0][2] * od[2];
        let c1 = p[1][0] * od[0] + p[1][1] * od[1] + p[1][2] * od[2];
        assert!((c0 - 0.7).abs() < 1e-12 && (c1 - 0.3).abs() < 1e-12);
    }
}
