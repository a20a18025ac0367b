//! Pretrained bodies loaded from ONNX files (inference only).
//!
//! The file must hold the convolutional body for a single 224×224 RGB image,
//! either NHWC (Keras export) or NCHW. Its output may be the pooled vector or
//! the last feature map, which is then global-average-pooled here.

use std::path::Path;
use std::sync::Arc;

use tract_onnx::prelude::*;

use super::BackboneId;
use crate::error::{Error, Result};
use crate::image::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Nhwc,
    Nchw,
}

pub struct OnnxBody {
    id: BackboneId,
    layout: Layout,
    plan: Arc<TypedRunnableModel>,
}

impl std::fmt::Debug for OnnxBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBody")
            .field("id", &self.id)
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

fn weights_err(id: BackboneId, path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Weights {
        backbone: id.to_string(),
        reason: format!("{}: {e}", path.display()),
        hint: "the file must be an ONNX graph of the convolutional body taking one 224x224 RGB image".into(),
    }
}

impl OnnxBody {
    pub fn load(id: BackboneId, path: &Path) -> Result<Self> {
        let mut last_err = None;
        for layout in [Layout::Nhwc, Layout::Nchw] {
            let shape: [usize; 4] = match layout {
                Layout::Nhwc => [1, 224, 224, 3],
                Layout::Nchw => [1, 3, 224, 224],
            };
            let plan = tract_onnx::onnx()
                .model_for_path(path)
                .and_then(|m| m.with_input_fact(0, f32::fact(shape).into()))
                .and_then(|m| m.into_optimized())
                .and_then(|m| m.into_runnable());
            match plan {
                Ok(plan) => {
                    let body = Self { id, layout, plan };
                    // probe the output width once
                    let probe = ImageTensor::filled(224, 224, [0.5; 3], crate::image::ValueRange::Unit)?;
                    let width = body.pooled_features(&probe)?.len();
                    if width != id.feature_dim() {
                        return Err(weights_err(
                            id,
                            path,
                            format!("output width {width}, expected {}", id.feature_dim()),
                        ));
                    }
                    return Ok(body);
                }
                Err(e) => last_err = Some(e),
            }
        }
        Err(weights_err(id, path, last_err.expect("tried at least one layout")))
    }

    /// ImageNet preprocessing of a `[0, 1]` RGB value for channel `c`.
    fn normalize(&self, v: f64, c: usize) -> f32 {
        const CAFFE_MEAN_BGR: [f64; 3] = [103.939, 116.779, 123.68];
        const TORCH_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
        const TORCH_STD: [f64; 3] = [0.229, 0.224, 0.225];
        let out = match self.id {
            // caffe mode: BGR order handled by the caller, mean subtraction on 0..255
            BackboneId::Vgg19 => v * 255.0 - CAFFE_MEAN_BGR[c],
            BackboneId::MobileNetV2 => v * 2.0 - 1.0,
            _ => (v - TORCH_MEAN[c]) / TORCH_STD[c],
        };
        out as f32
    }

    pub fn pooled_features(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        let (h, w) = img.dims();
        let scale = 1.0 / img.range().max();
        let bgr = self.id == BackboneId::Vgg19;
        let mut data = vec![0f32; h * w * 3];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let src_c = if bgr { 2 - c } else { c };
                    let v = self.normalize(img.get(y, x, src_c) * scale, c);
                    let idx = match self.layout {
                        Layout::Nhwc => (y * w + x) * 3 + c,
                        Layout::Nchw => c * h * w + y * w + x,
                    };
                    data[idx] = v;
                }
            }
        }
        let shape: [usize; 4] = match self.layout {
            Layout::Nhwc => [1, h, w, 3],
            Layout::Nchw => [1, 3, h, w],
        };
        let run = || -> TractResult<Vec<f64>> {
            let input = Tensor::from_shape(&shape, &data)?;
            let outputs = self.plan.run(tvec!(input.into_tvalue()))?;
            let view = outputs[0].to_array_view::<f32>()?;
            let dims = view.shape().to_vec();
            let values: Vec<f64> = view.iter().map(|&v| f64::from(v)).collect();
            let channels = self.id.feature_dim();
            if values.len() == channels {
                return Ok(values);
            }
            // [1, H, W, C] or [1, C, H, W] feature map: global average pool
            anyhow::ensure!(dims.len() == 4, "unexpected output shape {dims:?}");
            let channel_axis = if dims[3] == channels { 3 } else { 1 };
            anyhow::ensure!(dims[channel_axis] == channels, "unexpected output shape {dims:?}");
            let spatial = values.len() / channels;
            let mut pooled = vec![0.0; channels];
            for (i, v) in values.iter().enumerate() {
                let c = if channel_axis == 3 { i % channels } else { i / spatial };
                pooled[c] += v / spatial as f64;
            }
            Ok(pooled)
        };
        run().map_err(|e| Error::InvalidInput(format!("{} inference failed: {e}", self.id)))
    }
}
