//! Benign/malignant classification of H&E histopathology images by fusing
//! features from several CNN backbones.

pub mod augment;
pub mod backbones;
pub mod datasets;
pub mod error;
pub mod experiments;
pub mod features;
pub mod fixture;
pub mod fusion;
pub mod image;
pub mod kv;
pub mod model_io;
pub mod nn;
pub mod pipeline;
pub mod preprocess;

pub use error::{Error, Result};
