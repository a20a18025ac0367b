//! Optical density, Macenko stain normalization, min-max scaling and bicubic
//! resizing.

mod macenko;
mod minmax;
mod od;
mod resize;

pub use macenko::{
    percentile,
    fit_stain_model, stain_normalize, stain_normalize_or_pass, MacenkoParams, Normalized,
    StainModel, TissueFallback, SEPARABILITY_RATIO,
};
pub use minmax::{minmax_normalize, minmax_values, MinMaxMode, MinMaxOutput};
pub use od::{intensity_of, od_inverse, od_of, od_transform, MIN_INTENSITY, OD_LOG_BASE};
pub use resize::{cubic_kernel, resize_bicubic, resize_to_model_input, MODEL_INPUT_SIZE};

