//! Backbone abstraction: pretrained CNN bodies (VGG19, MobileNetV2,
//! DenseNet201) and deterministic stubs, a replaceable two-class head,
//! fine-tuning and feature extraction.

pub mod arch;
#[cfg(feature = "onnx")]
mod onnx;
mod stub;

use std::borrow::Cow;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::datasets::BinaryLabel;
use crate::error::{Error, Result};
use crate::fusion::TrainConfig;
use crate::image::ImageTensor;
use crate::nn::{self, History, Mlp};
use crate::preprocess::MODEL_INPUT_SIZE;

pub use stub::{channel_statistics, StubBody, STATISTIC_DIM, STUB_FEATURE_DIM};

/// Random-access image collection consumed by fine-tuning and extraction.
pub trait ImageSource: Sync {
    fn len(&self) -> usize;
    fn load(&self, index: usize) -> Result<Cow<'_, ImageTensor>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ImageSource for [ImageTensor] {
    fn len(&self) -> usize {
        <[ImageTensor]>::len(self)
    }

    fn load(&self, index: usize) -> Result<Cow<'_, ImageTensor>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

impl ImageSource for Vec<ImageTensor> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn load(&self, index: usize) -> Result<Cow<'_, ImageTensor>> {
        Ok(Cow::Borrowed(&self[index]))
    }
}

/// Environment variable naming the directory holding `<id>.onnx` ImageNet
/// weight files.
pub const WEIGHTS_DIR_ENV: &str = "HISTOFUSE_WEIGHTS_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackboneId {
    Vgg19,
    MobileNetV2,
    DenseNet201,
    StubA,
    StubB,
    StubC,
}

impl BackboneId {
    pub const ALL: [BackboneId; 6] = [
        BackboneId::Vgg19,
        BackboneId::MobileNetV2,
        BackboneId::DenseNet201,
        BackboneId::StubA,
        BackboneId::StubB,
        BackboneId::StubC,
    ];
    pub const PRETRAINED: [BackboneId; 3] =
        [BackboneId::Vgg19, BackboneId::MobileNetV2, BackboneId::DenseNet201];
    pub const STUBS: [BackboneId; 3] = [BackboneId::StubA, BackboneId::StubB, BackboneId::StubC];

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneId::Vgg19 => "vgg19",
            BackboneId::MobileNetV2 => "mobilenetv2",
            BackboneId::DenseNet201 => "densenet201",
            BackboneId::StubA => "stub_a",
            BackboneId::StubB => "stub_b",
            BackboneId::StubC => "stub_c",
        }
    }

    pub fn is_stub(self) -> bool {
        BackboneId::STUBS.contains(&self)
    }

    /// Width of the global-pooled body output.
    pub fn feature_dim(self) -> usize {
        if self.is_stub() {
            STUB_FEATURE_DIM
        } else {
            arch::pooled_width(self, MODEL_INPUT_SIZE).expect("pretrained ids have layer plans")
        }
    }
}

impl fmt::Display for BackboneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        BackboneId::ALL
            .into_iter()
            .find(|id| id.as_str() == key)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown backbone {s:?}; expected one of {}",
                    BackboneId::ALL.map(BackboneId::as_str).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightsSource {
    /// `$HISTOFUSE_WEIGHTS_DIR/<id>.onnx`, defaulting to `weights/<id>.onnx`.
    Imagenet,
    File(PathBuf),
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneDescriptor {
    pub id: BackboneId,
    pub feature_dim: usize,
    pub input_size: usize,
    pub weights: WeightsSource,
}

impl BackboneDescriptor {
    pub fn new(id: BackboneId, weights: WeightsSource) -> Self {
        Self {
            id,
            feature_dim: id.feature_dim(),
            input_size: MODEL_INPUT_SIZE,
            weights,
        }
    }

    pub fn stub(id: BackboneId) -> Self {
        Self::new(id, WeightsSource::None)
    }
}

/// Where features are read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureTap {
    /// The 256-unit head layer after ReLU, before dropout.
    #[default]
    Head,
    /// The global-pooled body output.
    Pooled,
}

impl FromStr for FeatureTap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "head" => Ok(FeatureTap::Head),
            "pooled" => Ok(FeatureTap::Pooled),
            other => Err(Error::InvalidInput(format!("unknown tap {other:?}; expected head or pooled"))),
        }
    }
}

impl fmt::Display for FeatureTap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureTap::Head => "head",
            FeatureTap::Pooled => "pooled",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub backbone: BackboneId,
    /// Index of the sample in its manifest (or input sequence).
    pub sample_ref: usize,
}

#[derive(Debug, Clone)]
enum Body {
    Stub(StubBody),
    #[cfg(feature = "onnx")]
    Onnx(std::sync::Arc<onnx::OnnxBody>),
}

#[derive(Debug, Clone)]
pub struct Backbone {
    descriptor: BackboneDescriptor,
    body: Body,
    head: Option<Mlp>,
}

pub const HEAD_HIDDEN_UNITS: usize = 256;
pub const HEAD_DROPOUT: f64 = 0.5;

fn resolve_weights(descriptor: &BackboneDescriptor) -> Result<PathBuf> {
    let id = descriptor.id;
    let weights_error = |reason: String, hint: String| Error::Weights {
        backbone: id.to_string(),
        reason,
        hint,
    };
    let path = match &descriptor.weights {
        WeightsSource::None => {
            return Err(weights_error(
                "no weights source given; random initialization is never used".into(),
                format!("pass --weights {id}=<file.onnx> or use weights source imagenet"),
            ))
        }
        WeightsSource::File(p) => p.clone(),
        WeightsSource::Imagenet => std::env::var_os(WEIGHTS_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("weights"))
            .join(format!("{id}.onnx")),
    };
    if !path.is_file() {
        return Err(weights_error(
            format!("weights file {} not found", path.display()),
            format!(
                "export the ImageNet {id} body (global-average-pooled output) to ONNX and point \
                 --weights or ${WEIGHTS_DIR_ENV} at it"
            ),
        ));
    }
    Ok(path)
}

/// Build a backbone. Stubs are self-contained; pretrained ids need a
/// readable weight file.
pub fn load_backbone(descriptor: &BackboneDescriptor) -> Result<Backbone> {
    let body = if descriptor.id.is_stub() {
        Body::Stub(StubBody::new(descriptor.id))
    } else {
        let path = resolve_weights(descriptor)?;
        load_pretrained(descriptor, &path)?
    };
    Ok(Backbone {
        descriptor: BackboneDescriptor {
            feature_dim: descriptor.id.feature_dim(),
            input_size: MODEL_INPUT_SIZE,
            ..descriptor.clone()
        },
        body,
        head: None,
    })
}

#[cfg(feature = "onnx")]
fn load_pretrained(descriptor: &BackboneDescriptor, path: &std::path::Path) -> Result<Body> {
    onnx::OnnxBody::load(descriptor.id, path).map(|b| Body::Onnx(std::sync::Arc::new(b)))
}

#[cfg(not(feature = "onnx"))]
fn load_pretrained(descriptor: &BackboneDescriptor, path: &std::path::Path) -> Result<Body> {
    Err(Error::Weights {
        backbone: descriptor.id.to_string(),
        reason: format!("cannot read {}: built without ONNX support", path.display()),
        hint: "rebuild with `--features onnx`".into(),
    })
}

impl Backbone {
    pub fn descriptor(&self) -> &BackboneDescriptor {
        &self.descriptor
    }

    pub fn id(&self) -> BackboneId {
        self.descriptor.id
    }

    pub fn head(&self) -> Option<&Mlp> {
        self.head.as_ref()
    }

    /// Trainable body parameters, when the body has any in-process.
    pub fn body_parameters(&self) -> Option<&nn::Dense> {
        match &self.body {
            Body::Stub(s) => Some(&s.projection),
            #[cfg(feature = "onnx")]
            Body::Onnx(_) => None,
        }
    }

    fn check_input(&self, img: &ImageTensor) -> Result<()> {
        let s = self.descriptor.input_size;
        if img.dims() != (s, s) {
            return Err(Error::Shape(format!(
                "{} expects {s}x{s} input, got {}x{}",
                self.id(),
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    /// What the trainable part of the network consumes: raw statistics for
    /// stubs, pooled features for pretrained bodies.
    fn body_input(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        match &self.body {
            Body::Stub(s) => Ok(channel_statistics(img, s.channel)),
            #[cfg(feature = "onnx")]
            Body::Onnx(o) => o.pooled_features(img),
        }
    }

    fn pooled_from_input(&self, input: &[f64]) -> Vec<f64> {
        match &self.body {
            Body::Stub(s) => Mlp { layers: vec![s.projection.clone()] }.tap(input, 0),
            #[cfg(feature = "onnx")]
            Body::Onnx(_) => input.to_vec(),
        }
    }

    /// Global-pooled body output for one image.
    pub fn pooled_features(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        self.check_input(img)?;
        let input = self.body_input(img)?;
        Ok(self.pooled_from_input(&input))
    }
}

/// Swap in a fresh `pooled → 256 ReLU → dropout 0.5 → num_classes` head.
/// Body parameters are not touched.
pub fn replace_head(mut backbone: Backbone, num_classes: usize, seed: u64) -> Result<Backbone> {
    if num_classes < 2 {
        return Err(Error::InvalidInput("a classification head needs at least 2 classes".into()));
    }
    backbone.head = Some(Mlp::classifier(
        backbone.descriptor.feature_dim,
        HEAD_HIDDEN_UNITS,
        num_classes,
        HEAD_DROPOUT,
        seed,
    ));
    Ok(backbone)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FineTuneOptions {
    /// Keep body parameters fixed and train only the head. Pretrained ONNX
    /// bodies are always frozen.
    pub freeze_body: bool,
}

/// Train the head (and, for stubs unless frozen, the body projection) on
/// labeled 224×224 images with the shared training configuration.
pub fn fine_tune(
    mut backbone: Backbone,
    images: &(impl ImageSource + ?Sized),
    labels: &[BinaryLabel],
    cfg: &TrainConfig,
    opts: FineTuneOptions,
) -> Result<(Backbone, History)> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidInput("fine-tuning needs a non-empty train split".into()));
    }
    if images.len() != labels.len() {
        return Err(Error::Shape(format!("{} images but {} labels", images.len(), labels.len())));
    }
    if !labels.contains(&BinaryLabel::Benign) || !labels.contains(&BinaryLabel::Malignant) {
        return Err(Error::InvalidInput("fine-tuning needs both classes in the train split".into()));
    }
    let head = backbone
        .head
        .take()
        .ok_or_else(|| Error::InvalidInput("replace_head must run before fine_tune".into()))?;
    let inputs: Vec<Vec<f64>> = (0..images.len())
        .into_par_iter()
        .map(|i| {
            let img = images.load(i)?;
            backbone.check_input(&img)?;
            backbone.body_input(&img)
        })
        .collect::<Result<_>>()?;
    let targets: Vec<usize> = labels.iter().map(|l| l.code() as usize).collect();

    let train_body = matches!(backbone.body, Body::Stub(_)) && !opts.freeze_body;
    let history = if train_body {
        #[allow(irrefutable_let_patterns)]
        let Body::Stub(stub) = &mut backbone.body else { unreachable!() };
        let mut layers = vec![stub.projection.clone()];
        layers.extend(head.layers);
        let mut net = Mlp::new(layers)?;
        let history = nn::fit(&mut net, &inputs, &targets, &cfg.fit_options(0))?;
        let mut layers = net.layers.into_iter();
        stub.projection = layers.next().unwrap();
        backbone.head = Some(Mlp { layers: layers.collect() });
        history
    } else {
        let pooled: Vec<Vec<f64>> = inputs.iter().map(|x| backbone.pooled_from_input(x)).collect();
        let mut net = head;
        let history = nn::fit(&mut net, &pooled, &targets, &cfg.fit_options(0))?;
        backbone.head = Some(net);
        history
    };
    Ok((backbone, history))
}

/// One feature vector per image, in inference mode. `sample_refs[i]` is
/// recorded on the i-th vector.
pub fn extract_features(
    backbone: &Backbone,
    images: &(impl ImageSource + ?Sized),
    sample_refs: &[usize],
    tap: FeatureTap,
) -> Result<Vec<FeatureVector>> {
    if images.len() != sample_refs.len() {
        return Err(Error::Shape(format!(
            "{} images but {} sample refs",
            images.len(),
            sample_refs.len()
        )));
    }
    if tap == FeatureTap::Head && backbone.head.is_none() {
        return Err(Error::InvalidInput(format!(
            "{}: head tap requested but no head has been attached",
            backbone.id()
        )));
    }
    (0..images.len())
        .into_par_iter()
        .zip(sample_refs.par_iter())
        .map(|(i, &sample_ref)| {
            let pooled = backbone.pooled_features(images.load(i)?.as_ref())?;
            let values = match tap {
                FeatureTap::Pooled => pooled,
                FeatureTap::Head => backbone.head.as_ref().unwrap().tap(&pooled, 0),
            };
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{}: non-finite feature for sample {sample_ref}",
                    backbone.id()
                )));
            }
            Ok(FeatureVector {
                values: values.into_iter().map(|v| v as f32).collect(),
                backbone: backbone.id(),
                sample_ref,
            })
        })
        .collect()
}

/// Predicted class probabilities of a backbone's own head.
pub fn head_predict(backbone: &Backbone, img: &ImageTensor) -> Result<Vec<f64>> {
    let head = backbone
        .head
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("backbone has no head".into()))?;
    Ok(head.predict_proba(&backbone.pooled_features(img)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueRange;

    fn pattern(seed: u64) -> ImageTensor {
        let data = (0..224 * 224 * 3)
            .map(|i| ((i as u64 * 2654435761 + seed * 97) % 256) as f64)
            .collect();
        ImageTensor::rgb8(224, 224, data).unwrap()
    }

    #[test]
    fn stub_loads_without_weights() {
        let b = load_backbone(&BackboneDescriptor::stub(BackboneId::StubA)).unwrap();
        assert_eq!(b.descriptor().feature_dim, 64);
        assert_eq!(b.descriptor().input_size, 224);
    }

    #[test]
    fn pretrained_without_weights_is_rejected() {
        for source in [WeightsSource::None, WeightsSource::File("/nonexistent/densenet201.onnx".into())] {
            let err = load_backbone(&BackboneDescriptor::new(BackboneId::DenseNet201, source)).unwrap_err();
            let msg = err.to_string();
            assert!(matches!(err, Error::Weights { .. }), "{msg}");
            assert!(msg.contains("hint"), "{msg}");
        }
    }

    #[test]
    fn replace_head_twice_has_same_topology_and_keeps_body() {
        let b = load_backbone(&BackboneDescriptor::stub(BackboneId::StubB)).unwrap();
        let body = b.body_parameters().unwrap().clone();
        let once = replace_head(b, 2, 1).unwrap();
        let twice = replace_head(once.clone(), 2, 1).unwrap();
        let shape = |m: &Mlp| m.layers.iter().map(|l| (l.inputs, l.outputs, l.activation, l.dropout)).collect::<Vec<_>>();
        assert_eq!(shape(once.head().unwrap()), shape(twice.head().unwrap()));
        assert_eq!(shape(once.head().unwrap()), vec![(64, 256, nn::Activation::Relu, 0.5), (256, 2, nn::Activation::Identity, 0.0)]);
        assert_eq!(twice.body_parameters().unwrap(), &body);
    }

    #[test]
    fn extraction_is_deterministic_and_checks_size() {
        let b = load_backbone(&BackboneDescriptor::stub(BackboneId::StubA)).unwrap();
        let img = pattern(3);
        let a1 = extract_features(&b, std::slice::from_ref(&img), &[0], FeatureTap::Pooled).unwrap();
        let a2 = extract_features(&b, std::slice::from_ref(&img), &[0], FeatureTap::Pooled).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(a1[0].values.len(), 64);
        assert!(a1[0].values.iter().all(|v| v.is_finite()));

        let small = ImageTensor::filled(223, 224, [1.0; 3], ValueRange::Uint8).unwrap();
        assert!(matches!(
            extract_features(&b, &[small][..], &[0], FeatureTap::Pooled),
            Err(Error::Shape(_))
        ));
        assert!(extract_features(&b, &[img][..], &[0], FeatureTap::Head).is_err());
    }

    #[test]
    fn fine_tune_preconditions() {
        let b = replace_head(load_backbone(&BackboneDescriptor::stub(BackboneId::StubA)).unwrap(), 2, 0).unwrap();
        let cfg = TrainConfig { max_epochs: 1, ..Default::default() };
        assert!(fine_tune(b.clone(), &Vec::new(), &[], &cfg, FineTuneOptions::default()).is_err());
        let imgs = vec![pattern(1), pattern(2)];
        assert!(fine_tune(b, &imgs, &[BinaryLabel::Benign; 2], &cfg, FineTuneOptions::default()).is_err());
    }
}
