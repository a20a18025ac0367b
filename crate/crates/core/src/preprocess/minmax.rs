use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageTensor, ValueRange};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MinMaxMode {
    /// One minimum and maximum over the whole tensor.
    #[default]
    Global,
    PerChannel,
}

#[derive(Debug, Clone)]
pub struct MinMaxOutput {
    pub image: ImageTensor,
    /// Set when the input (or a channel, in per-channel mode) was constant
    /// and came out as all zeros.
    pub constant_input: bool,
}

/// `(x - min) / (max - min)`; a constant input maps to zeros.
pub fn minmax_values(values: &[f64]) -> (Vec<f64>, bool) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return (vec![0.0; values.len()], true);
    }
    let span = hi - lo;
    (values.iter().map(|&v| (v - lo) / span).collect(), false)
}

pub fn minmax_normalize(img: &ImageTensor, mode: MinMaxMode) -> Result<MinMaxOutput> {
    if img.space() != ColorSpace::Rgb {
        return Err(Error::InvalidInput("min-max normalization expects an RGB image".into()));
    }
    let (data, constant_input) = match mode {
        MinMaxMode::Global => minmax_values(img.data()),
        MinMaxMode::PerChannel => {
            let mut out = vec![0.0; img.data().len()];
            let mut any_constant = false;
            for c in 0..3 {
                let channel: Vec<f64> = img.data().iter().skip(c).step_by(3).copied().collect();
                let (norm, constant) = minmax_values(&channel);
                any_constant |= constant;
                for (i, v) in norm.into_iter().enumerate() {
                    out[i * 3 + c] = v;
                }
            }
            (out, any_constant)
        }
    };
    if constant_input {
        log::warn!(target: "preprocess", "constant image in min-max normalization; output set to zeros");
    }
    Ok(MinMaxOutput {
        image: ImageTensor::from_parts(
            img.height(),
            img.width(),
            data,
            ValueRange::Unit,
            ColorSpace::Rgb,
        ),
        constant_input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(minmax_values(&[0.0, 127.5, 255.0]).0, vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_values(&[10.0, 20.0, 30.0]).0, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_image_is_zeros_with_warning() {
        let img = ImageTensor::filled(3, 3, [37.0; 3], ValueRange::Uint8).unwrap();
        let out = minmax_normalize(&img, MinMaxMode::Global).unwrap();
        assert!(out.constant_input);
        assert!(out.image.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.image.range(), ValueRange::Unit);
    }

    #[test]
    fn per_channel_mode_normalizes_each_channel() {
        let img = ImageTensor::rgb8(1, 2, vec![0.0, 10.0, 100.0, 50.0, 20.0, 200.0]).unwrap();
        let out = minmax_normalize(&img, MinMaxMode::PerChannel).unwrap();
        assert_eq!(out.image.data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn output_in_unit_interval_and_affine_invariant(
            values in proptest::collection::vec(0u8..=255, 2..64),
            scale in 1u32..1000,
            shift in -1000i32..1000,
        ) {
            let x: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
            let (a, _) = minmax_values(&x);
            prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
            let y: Vec<f64> = x.iter().map(|v| f64::from(scale) * v + f64::from(shift)).collect();
            let (b, _) = minmax_values(&y);
            prop_assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
