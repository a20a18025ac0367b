//! Weight-free stand-in bodies. Each stub looks at one color channel, reduces
//! it to a fixed statistic vector (histogram, moments, per-quadrant means and
//! gradient energy) and projects that through a seeded `tanh` layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::BackboneId;
use crate::image::ImageTensor;
use crate::nn::{Activation, Dense};

pub const STUB_FEATURE_DIM: usize = 64;
pub const HISTOGRAM_BINS: usize = 16;
pub const STATISTIC_DIM: usize = HISTOGRAM_BINS + 2 + 4 + 4;

const HISTOGRAM_SCALE: f64 = 4.0;
const GRADIENT_SCALE: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StubBody {
    pub channel: usize,
    pub projection: Dense,
}

impl StubBody {
    pub fn new(id: BackboneId) -> Self {
        let (channel, seed) = match id {
            BackboneId::StubA => (0, 0x0005_EEDA),
            BackboneId::StubB => (1, 0x0005_EEDB),
            BackboneId::StubC => (2, 0x0005_EEDC),
            other => unreachable!("{other} is not a stub"),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            channel,
            projection: Dense::init(STATISTIC_DIM, STUB_FEATURE_DIM, Activation::Tanh, &mut rng),
        }
    }
}

/// Statistics of one channel, with samples rescaled to `[0, 1]`.
pub fn channel_statistics(img: &ImageTensor, channel: usize) -> Vec<f64> {
    let (h, w) = img.dims();
    let scale = 1.0 / img.range().max();
    let at = |y: usize, x: usize| img.get(y, x, channel) * scale;
    let n = (h * w) as f64;

    let mut hist = [0.0; HISTOGRAM_BINS];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut quad_sum = [0.0; 4];
    let mut quad_grad = [0.0; 4];
    let mut quad_n = [0.0f64; 4];
    for y in 0..h {
        for x in 0..w {
            let v = at(y, x);
            let bin = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            hist[bin] += 1.0;
            sum += v;
            sum_sq += v * v;
            let q = usize::from(y * 2 >= h) * 2 + usize::from(x * 2 >= w);
            let dx = if x + 1 < w { at(y, x + 1) - v } else { 0.0 };
            let dy = if y + 1 < h { at(y + 1, x) - v } else { 0.0 };
            quad_sum[q] += v;
            quad_grad[q] += dx * dx + dy * dy;
            quad_n[q] += 1.0;
        }
    }
    let mean = sum / n;
    let std = (sum_sq / n - mean * mean).max(0.0).sqrt();

    let mut stats = Vec::with_capacity(STATISTIC_DIM);
    stats.extend(hist.iter().map(|c| c / n * HISTOGRAM_SCALE));
    stats.push(mean);
    stats.push(std);
    for q in 0..4 {
        let count = quad_n[q].max(1.0);
        stats.push(quad_sum[q] / count);
    }
    for q in 0..4 {
        let count = quad_n[q].max(1.0);
        stats.push((quad_grad[q] / count).sqrt() * GRADIENT_SCALE);
    }
    stats
}
