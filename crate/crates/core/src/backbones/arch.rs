//! Layer-level shape inference for the published VGG19, MobileNetV2 and
//! DenseNet201 definitions. Used to pin the global-pooled feature width of
//! each pretrained body without loading weights.

use super::BackboneId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv { out: usize, kernel: usize, stride: usize, pad: usize },
    /// Depthwise convolution; keeps the channel count.
    Depthwise { kernel: usize, stride: usize, pad: usize },
    MaxPool { kernel: usize, stride: usize, pad: usize },
    AvgPool { kernel: usize, stride: usize },
    /// Dense block: `layers` bottleneck units, each appending `growth` channels.
    DenseBlock { layers: usize, growth: usize },
    /// 1×1 conv that halves channels (compression 0.5) followed by 2×2 avg pool.
    Transition,
    /// Residual bottleneck with expansion `t`, output channels `out`.
    InvertedResidual { expansion: usize, out: usize, stride: usize },
}

fn spatial(n: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - kernel) / stride + 1
}

impl Layer {
    pub fn infer(&self, s: Shape) -> Shape {
        let resize = |kernel, stride, pad| Shape {
            channels: s.channels,
            height: spatial(s.height, kernel, stride, pad),
            width: spatial(s.width, kernel, stride, pad),
        };
        match *self {
            Layer::Conv { out, kernel, stride, pad } => Shape {
                channels: out,
                ..resize(kernel, stride, pad)
            },
            Layer::Depthwise { kernel, stride, pad } => resize(kernel, stride, pad),
            Layer::MaxPool { kernel, stride, pad } => resize(kernel, stride, pad),
            Layer::AvgPool { kernel, stride } => resize(kernel, stride, 0),
            Layer::DenseBlock { layers, growth } => Shape {
                channels: s.channels + layers * growth,
                ..s
            },
            Layer::Transition => {
                let pooled = Layer::AvgPool { kernel: 2, stride: 2 }.infer(s);
                Shape {
                    channels: s.channels / 2,
                    ..pooled
                }
            }
            Layer::InvertedResidual { out, stride, .. } => Shape {
                channels: out,
                ..resize(3, stride, 1)
            },
        }
    }
}

pub fn vgg19() -> Vec<Layer> {
    const PLAN: [usize; 21] = [
        64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0,
    ];
    PLAN.iter()
        .map(|&c| match c {
            0 => Layer::MaxPool { kernel: 2, stride: 2, pad: 0 },
            out => Layer::Conv { out, kernel: 3, stride: 1, pad: 1 },
        })
        .collect()
}

pub fn mobilenetv2() -> Vec<Layer> {
    // (expansion, channels, repeats, first stride)
    const BLOCKS: [(usize, usize, usize, usize); 7] = [
        (1, 16, 1, 1),
        (6, 24, 2, 2),
        (6, 32, 3, 2),
        (6, 64, 4, 2),
        (6, 96, 3, 1),
        (6, 160, 3, 2),
        (6, 320, 1, 1),
    ];
    let mut layers = vec![Layer::Conv { out: 32, kernel: 3, stride: 2, pad: 1 }];
    for (expansion, out, repeats, stride) in BLOCKS {
        for i in 0..repeats {
            layers.push(Layer::InvertedResidual {
                expansion,
                out,
                stride: if i == 0 { stride } else { 1 },
            });
        }
    }
    layers.push(Layer::Conv { out: 1280, kernel: 1, stride: 1, pad: 0 });
    layers
}

pub fn densenet201() -> Vec<Layer> {
    const BLOCKS: [usize; 4] = [6, 12, 48, 32];
    let mut layers = vec![
        Layer::Conv { out: 64, kernel: 7, stride: 2, pad: 3 },
        Layer::MaxPool { kernel: 3, stride: 2, pad: 1 },
    ];
    for (i, &n) in BLOCKS.iter().enumerate() {
        layers.push(Layer::DenseBlock { layers: n, growth: 32 });
        if i + 1 < BLOCKS.len() {
            layers.push(Layer::Transition);
        }
    }
    layers
}

pub fn layers(id: BackboneId) -> Option<Vec<Layer>> {
    match id {
        BackboneId::Vgg19 => Some(vgg19()),
        BackboneId::MobileNetV2 => Some(mobilenetv2()),
        BackboneId::DenseNet201 => Some(densenet201()),
        _ => None,
    }
}

/// Final feature-map shape of a body for a square input.
pub fn output_shape(layers: &[Layer], input_size: usize) -> Shape {
    layers.iter().fold(
        Shape {
            channels: 3,
            height: input_size,
            width: input_size,
        },
        |s, layer| layer.infer(s),
    )
}

/// Width of the global-average-pooled body output.
pub fn pooled_width(id: BackboneId, input_size: usize) -> Option<usize> {
    layers(id).map(|l| output_shape(&l, input_size).channels)
}
