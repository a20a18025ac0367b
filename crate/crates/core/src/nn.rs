//! Dense networks with softmax cross-entropy, inverted dropout and Adam.
//!
//! Both the backbone classification heads and the fusion classifier are
//! instances of [`Mlp`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            c => Err(Error::format("model", format!("unknown activation code {c}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Dropout probability applied to this layer's output while training.
    pub dropout: f64,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
            dropout: 0.0,
        }
    }

    /// Weights uniform in `±sqrt(6 / fan_in)`, zero bias.
    pub fn init(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs, activation);
        layer
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-limit..limit));
        layer
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b;
            self.activation.apply(z)
        }));
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= s);
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        Ok(Self { layers })
    }

    /// `inputs → hidden (ReLU) → dropout → classes`, seeded init.
    pub fn classifier(inputs: usize, hidden: usize, classes: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layers: vec![
                Dense::init(inputs, hidden, Activation::Relu, &mut rng).with_dropout(dropout),
                Dense::init(hidden, classes, Activation::Identity, &mut rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Layer outputs in inference mode (no dropout). The last entry holds
    /// the logits.
    pub fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            let input = if i == 0 { x } else { &acts[i - 1] };
            layer.forward(input, &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Output of layer `index` (post-activation, pre-dropout).
    pub fn tap(&self, x: &[f64], index: usize) -> Vec<f64> {
        self.activations(x).swap_remove(index)
    }

    /// Mean cross-entropy and its gradient over a batch. `masks[l][s]` is the
    /// inverted-dropout multiplier vector for layer `l`, sample `s`; pass
    /// `None` for deterministic evaluation.
    pub fn loss_and_grad(
        &self,
        inputs: &[&[f64]],
        targets: &[usize],
        masks: Option<&[Vec<Vec<f64>>]>,
    ) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        let n_layers = self.layers.len();
        for (s, (x, &target)) in inputs.iter().zip(targets).enumerate() {
            // forward, keeping post-dropout outputs
            let mut outs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
            for (l, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::with_capacity(layer.outputs);
                let input: &[f64] = if l == 0 { x } else { &outs[l - 1] };
                layer.forward(input, &mut out);
                if let Some(m) = masks {
                    if let Some(mask) = m[l].get(s).filter(|v| !v.is_empty()) {
                        out.iter_mut().zip(mask).for_each(|(o, k)| *o *= k);
                    }
                }
                outs.push(out);
            }
            let probs = softmax(&outs[n_layers - 1]);
            total -= probs[target].max(f64::MIN_POSITIVE).ln();

            // dL/dlogits
            let mut delta: Vec<f64> = probs;
            delta[target] -= 1.0;
            for l in (0..n_layers).rev() {
                let layer = &self.layers[l];
                let input: &[f64] = if l == 0 { x } else { &outs[l - 1] };
                let gw = &mut grads.weights[l];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    grads.bias[l][o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, v)| *g += d * v);
                }
                if l == 0 {
                    break;
                }
                let prev = &self.layers[l - 1];
                let mut next = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    next.iter_mut().zip(row).for_each(|(n, w)| *n += d * w);
                }
                // through the previous layer's dropout and activation
                let mask = masks.and_then(|m| m[l - 1].get(s)).filter(|v| !v.is_empty());
                for (j, n) in next.iter_mut().enumerate() {
                    let keep = mask.map_or(1.0, |m| m[j]);
                    if keep == 0.0 {
                        *n = 0.0;
                        continue;
                    }
                    let y = outs[l - 1][j] / keep;
                    *n *= keep * prev.activation.grad_from_output(y);
                }
                delta = next;
            }
        }
        let n = inputs.len() as f64;
        grads.scale(1.0 / n);
        (total / n, grads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Adam moments for every weight and bias tensor of a network.
#[derive(Debug, Clone)]
pub struct NetworkOptimizer {
    cfg: AdamConfig,
    weights: Vec<AdamState>,
    bias: Vec<AdamState>,
}

impl NetworkOptimizer {
    pub fn new(mlp: &Mlp, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            weights: mlp.layers.iter().map(|l| AdamState::new(l.weights.len())).collect(),
            bias: mlp.layers.iter().map(|l| AdamState::new(l.bias.len())).collect(),
        }
    }

    /// Update layers `first_trainable..`; earlier layers stay frozen.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &Gradients, first_trainable: usize) -> Result<()> {
        for l in first_trainable..mlp.layers.len() {
            adam_step(&mut mlp.layers[l].weights, &grads.weights[l], &mut self.weights[l], &self.cfg)?;
            adam_step(&mut mlp.layers[l].bias, &grads.bias[l], &mut self.bias[l], &self.cfg)?;
        }
        Ok(())
    }
}

/// Mini-batch training schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Layers before this index are not updated.
    pub first_trainable: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    /// Mean training cross-entropy per epoch (dropout active).
    pub loss: Vec<f64>,
    /// Training-set accuracy after each epoch (dropout disabled).
    pub accuracy: Vec<f64>,
}

impl History {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }
}

pub fn accuracy(mlp: &Mlp, inputs: &[Vec<f64>], targets: &[usize]) -> f64 {
    let correct = inputs
        .iter()
        .zip(targets)
        .filter(|(x, &t)| argmax(&mlp.logits(x)) == t)
        .count();
    correct as f64 / inputs.len() as f64
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Train in place. Samples are put into a canonical order before the seeded
/// per-epoch shuffle, so the result does not depend on input order. The last
/// partial batch is kept.
pub fn fit(mlp: &mut Mlp, inputs: &[Vec<f64>], targets: &[usize], opts: &FitOptions) -> Result<History> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "training needs matching non-empty inputs/targets ({} vs {})",
            inputs.len(),
            targets.len()
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let dim = mlp.input_dim();
    if let Some(bad) = inputs.iter().position(|x| x.len() != dim) {
        return Err(Error::Shape(format!(
            "sample {bad} has {} features, network expects {dim}",
            inputs[bad].len()
        )));
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }

    let mut canonical: Vec<usize> = (0..inputs.len()).collect();
    canonical.sort_by(|&a, &b| {
        targets[a].cmp(&targets[b]).then_with(|| {
            inputs[a]
                .iter()
                .zip(&inputs[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut optimizer = NetworkOptimizer::new(mlp, opts.adam);
    let mut history = History::default();
    for epoch in 0..opts.epochs {
        let mut order = canonical.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let masks: Vec<Vec<Vec<f64>>> = mlp
                .layers
                .iter()
                .map(|layer| {
                    if layer.dropout <= 0.0 {
                        return Vec::new();
                    }
                    let keep = 1.0 - layer.dropout;
                    batch
                        .iter()
                        .map(|_| {
                            (0..layer.outputs)
                                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let (loss, grads) = mlp.loss_and_grad(&xs, &ys, Some(&masks));
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1 });
            }
            optimizer
                .step(mlp, &grads, opts.first_trainable)
                .map_err(|e| match e {
                    Error::NonFiniteGradient => Error::NonFiniteLoss { epoch: epoch + 1 },
                    other => other,
                })?;
            epoch_loss += loss * batch.len() as f64;
        }
        history.loss.push(epoch_loss / inputs.len() as f64);
        history.accuracy.push(accuracy(mlp, inputs, targets));
        log::debug!(
            target: "train",
            "epoch {} loss {:.6} acc {:.4}",
            epoch + 1,
            history.loss[epoch],
            history.accuracy[epoch]
        );
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT_ADAM: AdamConfig = AdamConfig {
        learning_rate: 1e-4,
        beta1: 0.6,
        beta2: 0.8,
        epsilon: 1e-8,
    };

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut p = [1.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, &DEFAULT_ADAM).unwrap();
        assert!((p[0] - 0.9999).abs() < 1e-9);
        assert_eq!(s.t, 1);

        let mut p = [0.3, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &DEFAULT_ADAM).unwrap();
        assert_eq!(p, [0.3, -2.0]);
    }

    #[test]
    fn adam_constant_gradient_step_tends_to_lr() {
        let mut p = [0.0];
        let mut s = AdamState::new(1);
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..200 {
            adam_step(&mut p, &[0.37], &mut s, &DEFAULT_ADAM).unwrap();
            step = prev - p[0];
            prev = p[0];
        }
        assert!((step - 1e-4).abs() < 1e-10, "{step}");
    }

    #[test]
    fn adam_rejects_bad_input() {
        let mut s = AdamState::new(1);
        assert!(matches!(
            adam_step(&mut [0.0], &[f64::NAN], &mut s, &DEFAULT_ADAM),
            Err(Error::NonFiniteGradient)
        ));
        assert!(adam_step(&mut [0.0, 1.0], &[1.0], &mut s, &DEFAULT_ADAM).is_err());
    }

    #[test]
    fn softmax_is_normalized() {
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn layers_must_chain() {
        let a = Dense::zeros(3, 4, Activation::Relu);
        let b = Dense::zeros(5, 2, Activation::Identity);
        assert!(Mlp::new(vec![a, b]).is_err());
    }
}
