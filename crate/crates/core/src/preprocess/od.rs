//! Optical density conversion, `OD = -log10(I / I0)`.

use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageTensor, ValueRange};

/// Base of the optical-density logarithm.
pub const OD_LOG_BASE: f64 = 10.0;

/// Intensities below this are clamped before taking the logarithm.
pub const MIN_INTENSITY: f64 = 1.0;

#[inline]
fn log_od_base(x: f64) -> f64 {
    if OD_LOG_BASE == 10.0 {
        x.log10()
    } else {
        x.log(OD_LOG_BASE)
    }
}

#[inline]
pub fn od_of(intensity: f64, io: f64) -> f64 {
    // Intensities above I0 are brighter than the illumination; they carry no
    // stain and clamp to zero density.
    (-log_od_base(intensity.max(MIN_INTENSITY) / io)).max(0.0)
}

#[inline]
pub fn intensity_of(od: f64, io: f64) -> f64 {
    (io * OD_LOG_BASE.powf(-od)).clamp(0.0, 255.0).round()
}

fn check_io(io: f64) -> Result<()> {
    if io > 0.0 && io.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "illumination intensity must be positive, got {io}"
        )))
    }
}

/// Per channel OD of an RGB image. Unit-range inputs are rescaled to the
/// 8-bit scale that `io` is expressed in.
pub fn od_transform(img: &ImageTensor, io: f64) -> Result<ImageTensor> {
    check_io(io)?;
    if img.space() != ColorSpace::Rgb {
        return Err(Error::InvalidInput("od_transform expects an RGB image".into()));
    }
    let scale = 255.0 / img.range().max();
    let data = img.data().iter().map(|&v| od_of(v * scale, io)).collect();
    Ok(ImageTensor::from_parts(
        img.height(),
        img.width(),
        data,
        ValueRange::Uint8,
        ColorSpace::Od,
    ))
}

/// `I = I0 * 10^-OD`, rounded and clamped to 8-bit.
pub fn od_inverse(od: &ImageTensor, io: f64) -> Result<ImageTensor> {
    check_io(io)?;
    if od.space() != ColorSpace::Od {
        return Err(Error::InvalidInput("od_inverse expects an OD image".into()));
    }
    let data = od.data().iter().map(|&v| intensity_of(v, io)).collect();
    Ok(ImageTensor::from_parts(
        od.height(),
        od.width(),
        data,
        ValueRange::Uint8,
        ColorSpace::Rgb,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(od_of(240.0, 240.0), 0.0);
        assert_eq!(od_of(24.0, 240.0), 1.0);
        assert!((od_of(0.0, 240.0) - 240f64.log10()).abs() < 1e-12);
        assert!((od_of(0.0, 240.0) - 2.3802).abs() < 1e-4);
        assert_eq!(intensity_of(1.0, 240.0), 24.0);
        assert_eq!(intensity_of(0.0, 240.0), 240.0);
    }

    #[test]
    fn bright_pixels_clamp_to_zero_density() {
        assert_eq!(od_of(255.0, 240.0), 0.0);
    }

    #[test]
    fn rejects_bad_illumination() {
        let img = ImageTensor::filled(2, 2, [10.0; 3], ValueRange::Uint8).unwrap();
        assert!(od_transform(&img, 0.0).is_err());
        assert!(od_transform(&img, -3.0).is_err());
    }

    #[test]
    fn unit_range_input_is_rescaled() {
        let a = ImageTensor::filled(1, 1, [24.0; 3], ValueRange::Uint8).unwrap();
        let b = ImageTensor::filled(1, 1, [24.0 / 255.0; 3], ValueRange::Unit).unwrap();
        let (oa, ob) = (od_transform(&a, 240.0).unwrap(), od_transform(&b, 240.0).unwrap());
        assert!((oa.data()[0] - ob.data()[0]).abs() < 1e-12);
    }
}
