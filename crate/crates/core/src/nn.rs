//! Feedforward sigmoid network trained by mini-batch gradient descent on
//! mean squared error.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::features::log_features;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Linear,
    Softmax,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Linear => 1,
            Activation::Softmax => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Linear),
            2 => Some(Activation::Softmax),
            _ => None,
        }
    }

    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Linear => {}
            Activation::Softmax => softmax_in_place(z),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Weights are `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        check_dim("layer weights", inputs * outputs, weights.len())?;
        check_dim("layer bias", outputs, bias.len())?;
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("layer parameters"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    pub fn random(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let r = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-r..=r)).collect(),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Every layer but the last must be sigmoid; softmax only at the output.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_dim("layer chaining", pair[0].outputs, pair[1].inputs)?;
        }
        let last = layers.len() - 1;
        for (i, l) in layers.iter().enumerate() {
            if i < last && l.activation != Activation::Sigmoid {
                return Err(Error::invalid(format!(
                    "hidden layer {i} must be sigmoid, found {:?}",
                    l.activation
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Seeded random network with sigmoid hidden layers.
    pub fn random(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        output: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(output_dim);
        if dims.contains(&0) {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| {
                let act = if i == last { output } else { Activation::Sigmoid };
                Layer::random(d[0], d[1], act, &mut rng)
            })
            .collect();
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(self.trace(x).pop().unwrap())
    }

    /// Post-activation outputs of every layer, input first.
    pub fn activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_dim("network input", self.input_dim(), x.len())?;
        Ok(self.trace(x))
    }

    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.pre_activation(acts.last().unwrap());
            layer.activation.apply(&mut z);
            acts.push(z);
        }
        acts
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, weights before bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("flat parameters", self.parameter_count(), params.len())?;
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    /// Mean over samples of the squared L2 error and its gradient.
    pub fn loss_and_gradient(
        &self,
        inputs: &[&[f64]],
        targets: &[&[f64]],
    ) -> Result<(f64, Gradients)> {
        check_dim("batch targets", inputs.len(), targets.len())?;
        if inputs.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let scale = 1.0 / inputs.len() as f64;
        for (x, t) in inputs.iter().zip(targets) {
            check_dim("network input", self.input_dim(), x.len())?;
            check_dim("training target", self.output_dim(), t.len())?;
            let acts = self.trace(x);
            let out = acts.last().unwrap();
            loss += out.iter().zip(t.iter()).map(|(o, y)| (o - y).powi(2)).sum::<f64>();
            let mut delta: Vec<f64> = out
                .iter()
                .zip(t.iter())
                .map(|(o, y)| 2.0 * (o - y) * scale)
                .collect();
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let a = &acts[li + 1];
                match layer.activation {
                    Activation::Sigmoid => {
                        delta.iter_mut().zip(a).for_each(|(d, s)| *d *= s * (1.0 - s))
                    }
                    Activation::Linear => {}
                    Activation::Softmax => {
                        let dot: f64 = delta.iter().zip(a).map(|(d, s)| d * s).sum();
                        delta.iter_mut().zip(a).for_each(|(d, s)| *d = s * (*d - dot));
                    }
                }
                let input = &acts[li];
                let (gw, gb) = &mut grads.layers[li];
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                }
                if li > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss * scale, grads))
    }

    fn step(&mut self, grads: &Gradients, lr: f64) {
        for (l, (gw, gb)) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * g);
            l.bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    /// Same ordering as [`Network::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

pub fn mse_loss(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    check_dim("mse samples", outputs.len(), targets.len())?;
    if outputs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (o, t) in outputs.iter().zip(targets) {
        check_dim("mse vector", o.len(), t.len())?;
        total += o.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(total / outputs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 10,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and nonnegative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        Ok(())
    }
}

/// Mini-batch gradient descent. Returns the mean training loss of every
/// epoch, accumulated over the batches as they are visited.
pub fn train(
    net: &mut Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_dim("training targets", inputs.len(), targets.len())?;
    if inputs.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&[f64]> = idx.iter().map(|&i| inputs[i].as_slice()).collect();
            let ts: Vec<&[f64]> = idx.iter().map(|&i| targets[i].as_slice()).collect();
            let (loss, grads) = net.loss_and_gradient(&xs, &ts)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            total += loss * idx.len() as f64;
            net.step(&grads, cfg.learning_rate);
        }
        history.push(total / inputs.len() as f64);
    }
    Ok(history)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax_action(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::invalid("argmax of an empty vector"));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Pretrained layers followed by new sigmoid hidden layers and a softmax
/// head of `actions` outputs. A sigmoid pretraining head is kept as a
/// hidden layer; any other head is dropped.
pub fn extend_to_action_head(
    pretrained: &Network,
    actions: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<Network> {
    if actions < 2 {
        return Err(Error::invalid("action head needs at least 2 outputs"));
    }
    let mut layers = pretrained.layers.clone();
    if pretrained.output_activation() != Activation::Sigmoid {
        layers.pop();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut width = layers.last().map_or(pretrained.input_dim(), |l| l.outputs);
    for &h in hidden {
        layers.push(Layer::random(width, h, Activation::Sigmoid, &mut rng));
        width = h;
    }
    layers.push(Layer::random(width, actions, Activation::Softmax, &mut rng));
    Network::new(layers)
}

/// Per-dimension standardization fitted on training inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let dim = samples
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InsufficientData("no samples to standardize".into()))?;
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim];
        for s in samples {
            check_dim("standardizer sample", dim, s.len())?;
            mean.iter_mut().zip(s).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; dim];
        for s in samples {
            var.iter_mut()
                .zip(s.iter().zip(&mean))
                .for_each(|(v, (x, m))| *v += (x - m).powi(2) / n);
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Network plus its input transform: raw power context → floored log →
/// standardization → network.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub standardizer: Standardizer,
    pub network: Network,
}

const MODEL_MAGIC: &[u8; 8] = b"RLSENN\0\0";
const MODEL_VERSION: u32 = 1;

impl PolicyModel {
    pub fn new(standardizer: Standardizer, network: Network) -> Result<Self> {
        check_dim("standardizer", network.input_dim(), standardizer.dim())?;
        Ok(Self {
            standardizer,
            network,
        })
    }

    /// Maps a raw mel-power context vector into network input space.
    pub fn features(&self, context: &[f64]) -> Vec<f64> {
        self.standardizer.apply(&log_features(context))
    }

    pub fn forward(&self, context: &[f64]) -> Result<Vec<f64>> {
        check_dim("context", self.network.input_dim(), context.len())?;
        if context.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("context"));
        }
        self.network.forward(&self.features(context))
    }

    /// Layout (little endian): magic, u32 version, u32 layer count, then per
    /// layer u32 inputs, u32 outputs, u8 activation tag; u32 input dim, the
    /// standardizer means and deviations, then each layer's row-major
    /// weights followed by its bias, all as f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        let layers = self.network.layers();
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in layers {
            out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
            out.push(l.activation.tag());
        }
        out.extend_from_slice(&(self.standardizer.dim() as u32).to_le_bytes());
        let floats = self
            .standardizer
            .mean
            .iter()
            .chain(&self.standardizer.std)
            .chain(layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias)));
        for x in floats {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MODEL_MAGIC {
            return Err("not a model file".into());
        }
        let version = cur.u32()?;
        if version != MODEL_VERSION {
            return Err(format!("unsupported model version {version}"));
        }
        let count = cur.u32()? as usize;
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let inputs = cur.u32()? as usize;
            let outputs = cur.u32()? as usize;
            let tag = cur.take(1)?[0];
            let act = Activation::from_tag(tag).ok_or(format!("unknown activation tag {tag}"))?;
            shapes.push((inputs, outputs, act));
        }
        let dim = cur.u32()? as usize;
        let mean = cur.f64s(dim)?;
        let std = cur.f64s(dim)?;
        let mut layers = Vec::with_capacity(count);
        for (inputs, outputs, act) in shapes {
            let w = cur.f64s(inputs * outputs)?;
            let b = cur.f64s(outputs)?;
            layers.push(Layer::new(inputs, outputs, w, b, act).map_err(|e| e.to_string())?);
        }
        if cur.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
        }
        let network = Network::new(layers).map_err(|e| e.to_string())?;
        PolicyModel::new(Standardizer { mean, std }, network).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes).map_err(|reason| Error::format(path, reason))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or("truncated model file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        Ok(self
            .take(n.checked_mul(8).ok_or("model file too large")?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_hidden_is_half() {
        let net = Network::new(vec![
            Layer::zeros(3, 4, Activation::Sigmoid),
            Layer::zeros(4, 2, Activation::Linear),
        ])
        .unwrap();
        let acts = net.activations(&[1.0, -2.0, 3.0]).unwrap();
        assert!(acts[1].iter().all(|&h| h == 0.5));
    }

    #[test]
    fn softmax_identical_logits_uniform() {
        let net = Network::new(vec![Layer::zeros(3, 8, Activation::Softmax)]).unwrap();
        let out = net.forward(&[0.3, 0.1, 9.0]).unwrap();
        assert!(out.iter().all(|&p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = Network::random(3, &[2], 2, Activation::Linear, 0).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
        assert!(matches!(net.forward(&[1.0, f64::NAN, 0.0]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn hidden_layers_must_be_sigmoid() {
        let bad = Network::new(vec![
            Layer::zeros(2, 2, Activation::Linear),
            Layer::zeros(2, 2, Activation::Linear),
        ]);
        assert!(bad.is_err());
        let unchained = Network::new(vec![
            Layer::zeros(2, 3, Activation::Sigmoid),
            Layer::zeros(2, 2, Activation::Linear),
        ]);
        assert!(unchained.is_err());
    }

    #[test]
    fn mse_examples() {
        let a = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let one = mse_loss(&[vec![1.0, 0.0, 0.0]], &[vec![0.0; 3]]).unwrap();
        assert_eq!(one, 1.0);
        assert!(mse_loss(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_action(&[0.1, 0.7, 0.2]).unwrap(), 1);
        assert_eq!(argmax_action(&[0.25; 4]).unwrap(), 0);
        assert_eq!(argmax_action(&[0.0, 0.0, 1.0]).unwrap(), 2);
        assert!(argmax_action(&[]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut net = Network::random(4, &[3], 2, Activation::Linear, 1).unwrap();
        let before = net.clone();
        let xs = vec![vec![0.1, 0.2, 0.3, 0.4]; 5];
        let ts = vec![vec![1.0, -1.0]; 5];
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 2,
            seed: 0,
        };
        train(&mut net, &xs, &ts, &cfg).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn divergence_is_reported() {
        let mut net = Network::random(1, &[], 1, Activation::Linear, 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e6,
            epochs: 50,
            batch_size: 1,
            seed: 0,
        };
        let err = train(&mut net, &[vec![10.0]], &[vec![1.0]], &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn extension_shapes_and_shared_activations() {
        let pre = Network::random(12, &[8], 6, Activation::Sigmoid, 3).unwrap();
        let ext = extend_to_action_head(&pre, 32, &[64], 4).unwrap();
        assert_eq!(ext.output_dim(), 32);
        assert_eq!(ext.layers().len(), 4);
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 - 0.5).collect();
        let a = pre.activations(&x).unwrap();
        let b = ext.activations(&x).unwrap();
        assert_eq!(a[1], b[1]);
        assert_eq!(a[2], b[2]);
        let out = ext.forward(&x).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(out.iter().all(|&p| p > 0.0));

        let linear = Network::random(12, &[8], 6, Activation::Linear, 3).unwrap();
        let ext = extend_to_action_head(&linear, 4, &[5], 4).unwrap();
        assert_eq!(ext.layers().len(), 3);
        assert_eq!(ext.layers()[1].inputs(), 8);
    }

    #[test]
    fn model_bytes_round_trip() {
        let net = Network::random(6, &[4], 3, Activation::Softmax, 5).unwrap();
        let st = Standardizer {
            mean: vec![0.5; 6],
            std: vec![2.0; 6],
        };
        let model = PolicyModel::new(st, net).unwrap();
        let bytes = model.to_bytes();
        let back = PolicyModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
        assert!(PolicyModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn standardizer_handles_constant_dims() {
        let st = Standardizer::fit(&[vec![1.0, 2.0], vec![1.0, 4.0]]).unwrap();
        assert_eq!(st.std[0], 1.0);
        assert_eq!(st.apply(&[1.0, 3.0]), vec![0.0, 0.0]);
    }
}
