//! A small fully connected network with hand-written backpropagation and Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "mars-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    TensorShape { shape: Vec<usize>, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("forward cache is stale (network changed since the forward pass)")]
    StaleCache,
    #[error("network needs at least an input and an output size")]
    NoLayers,
    #[error("unsupported model format {format:?} version {version}")]
    UnknownFormat { format: String, version: u32 },
    #[error("model file: {0}")]
    Serde(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NeuralError> {
        let t = Tensor { shape, data };
        t.validate()?;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.shape.iter().product::<usize>() != self.data.len() {
            return Err(NeuralError::TensorShape {
                shape: self.shape.clone(),
                len: self.data.len(),
            });
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::NonFinite("tensor"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// `y = act(W x + b)` with `W` stored row-major as `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weights.shape[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    /// Bumped on every parameter change; used to detect stale caches.
    #[serde(default)]
    generation: u64,
}

/// Activations recorded by [`Network::forward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    /// `activations[0]` is the input, `activations[i + 1]` the output of layer i.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least the input")
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases).flatten()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(&mut self.biases).flatten()
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().copied().collect()
    }
}

impl Network {
    /// Glorot-uniform weights, zero biases. `sizes` lists every layer width from
    /// input to output.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        seed: u64,
    ) -> Result<Self, NeuralError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NeuralError::NoLayers);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            let activation = if i + 2 == sizes.len() { output } else { hidden };
            layers.push(Layer {
                weights: Tensor::new(vec![fan_out, fan_in], data)?,
                bias: Tensor::zeros(vec![fan_out]),
                activation,
            });
        }
        Ok(Network {
            layers,
            generation: 0,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NeuralError> {
        let net = Network {
            layers,
            generation: 0,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.layers.is_empty() {
            return Err(NeuralError::NoLayers);
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.weights.validate()?;
            layer.bias.validate()?;
            if layer.weights.shape.len() != 2 || layer.bias.shape != [layer.output_dim()] {
                return Err(NeuralError::Shape {
                    expected: layer.output_dim(),
                    got: layer.bias.len(),
                });
            }
            if i > 0 && self.layers[i - 1].output_dim() != layer.input_dim() {
                return Err(NeuralError::Shape {
                    expected: self.layers[i - 1].output_dim(),
                    got: layer.input_dim(),
                });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("validated").output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NeuralError> {
        if input.len() != self.input_dim() {
            return Err(NeuralError::Shape {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(NeuralError::NonFinite("input"));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for layer in &self.layers {
            let x = activations.last().expect("nonempty");
            let n_in = layer.input_dim();
            let y: Vec<f64> = layer
                .weights
                .data
                .chunks_exact(n_in)
                .zip(&layer.bias.data)
                .map(|(row, b)| {
                    let z = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
                    layer.activation.apply(z)
                })
                .collect();
            activations.push(y);
        }
        let output = activations.last().expect("nonempty").clone();
        if output.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NonFinite("output"));
        }
        Ok((
            output,
            ForwardCache {
                generation: self.generation,
                activations,
            },
        ))
    }

    /// Output only.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>, NeuralError> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Parameter gradients of `sum(output_grad * output)`, plus the gradient
    /// with respect to the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
    ) -> Result<(Gradients, Vec<f64>), NeuralError> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(cache, output_grad, &mut grads, 1.0)?;
        Ok((grads, input_grad))
    }

    /// Like [`Network::backward`] but adds `scale *` the gradients into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        output_grad: &[f64],
        grads: &mut Gradients,
        scale: f64,
    ) -> Result<Vec<f64>, NeuralError> {
        if cache.generation != self.generation
            || cache.activations.len() != self.layers.len() + 1
        {
            return Err(NeuralError::StaleCache);
        }
        if output_grad.len() != self.output_dim() {
            return Err(NeuralError::Shape {
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        let mut upstream: Vec<f64> = output_grad.iter().map(|g| g * scale).collect();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.activations[i];
            let y = &cache.activations[i + 1];
            let n_in = layer.input_dim();
            let dz: Vec<f64> = upstream
                .iter()
                .zip(y)
                .map(|(g, yi)| g * layer.activation.derivative(*yi))
                .collect();
            let gw = &mut grads.weights[i];
            for (o, d) in dz.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (gwi, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *gwi += d * xi;
                }
            }
            for (gb, d) in grads.biases[i].iter_mut().zip(&dz) {
                *gb += d;
            }
            let mut down = vec![0.0; n_in];
            for (row, d) in layer.weights.data.chunks_exact(n_in).zip(&dz) {
                for (di, w) in down.iter_mut().zip(row) {
                    *di += d * w;
                }
            }
            upstream = down;
        }
        if !grads.is_finite() {
            return Err(NeuralError::NonFinite("gradient"));
        }
        Ok(upstream)
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter())
            .chain(self.layers.iter().flat_map(|l| l.bias.data.iter()))
            .copied()
            .collect()
    }

    /// Inverse of [`Network::parameters`].
    pub fn set_parameters(&mut self, params: &[f64]) -> Result<(), NeuralError> {
        if params.len() != self.parameter_count() {
            return Err(NeuralError::Shape {
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NeuralError::NonFinite("parameters"));
        }
        let mut it = params.iter();
        for layer in &mut self.layers {
            for w in &mut layer.weights.data {
                *w = *it.next().expect("length checked");
            }
        }
        for layer in &mut self.layers {
            for b in &mut layer.bias.data {
                *b = *it.next().expect("length checked");
            }
        }
        self.generation += 1;
        Ok(())
    }

    /// Bitwise parameter equality (ignores the generation counter).
    pub fn same_parameters(&self, other: &Network) -> bool {
        let a = self.parameters();
        let b = other.parameters();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax over the entries with `mask[i] == true`; the rest get probability 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let masked: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(z, &ok)| if ok { *z } else { f64::NEG_INFINITY })
        .collect();
    softmax(&masked)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }
}

/// One Adam descent step on `net` along `grads` (gradients of a loss).
pub fn adam_step(
    net: &mut Network,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<(), NeuralError> {
    if !grads.is_finite() {
        return Err(NeuralError::NonFinite("gradient"));
    }
    if grads.weights.len() != net.layers.len() {
        return Err(NeuralError::Shape {
            expected: net.layers.len(),
            got: grads.weights.len(),
        });
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = if c1 > 0.0 { *m / c1 } else { *m };
            let v_hat = if c2 > 0.0 { *v / c2 } else { *v };
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    };
    for (i, layer) in net.layers.iter_mut().enumerate() {
        if grads.weights[i].len() != layer.weights.len() || grads.biases[i].len() != layer.bias.len()
        {
            return Err(NeuralError::Shape {
                expected: layer.weights.len(),
                got: grads.weights[i].len(),
            });
        }
        update(
            &mut layer.weights.data,
            &grads.weights[i],
            &mut state.m.weights[i],
            &mut state.v.weights[i],
        );
        update(
            &mut layer.bias.data,
            &grads.biases[i],
            &mut state.m.biases[i],
            &mut state.v.biases[i],
        );
    }
    net.generation += 1;
    Ok(())
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central finite-difference check of `backward` for the scalar loss
/// `sum(weights * output)`. Returns the largest relative error.
pub fn gradient_check(
    net: &Network,
    input: &[f64],
    output_weights: &[f64],
    h: f64,
) -> Result<f64, NeuralError> {
    let (_, cache) = net.forward(input)?;
    let (grads, _) = net.backward(&cache, output_weights)?;
    let analytic = grads.flatten();
    let base = net.parameters();
    let mut probe = net.clone();
    let loss = |n: &Network| -> Result<f64, NeuralError> {
        Ok(n.predict(input)?
            .iter()
            .zip(output_weights)
            .map(|(y, w)| y * w)
            .sum())
    };
    let mut worst = 0.0f64;
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + h;
        probe.set_parameters(&params)?;
        let plus = loss(&probe)?;
        params[i] = base[i] - h;
        probe.set_parameters(&params)?;
        let minus = loss(&probe)?;
        params[i] = base[i];
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric, 1e-6));
    }
    Ok(worst)
}

#[derive(Serialize)]
struct ModelFileRef<'a, T> {
    format: &'a str,
    version: u32,
    model: &'a T,
}

#[derive(Deserialize)]
struct ModelFileOwned<T> {
    format: String,
    version: u32,
    model: T,
}

/// Wraps any serializable model in the versioned JSON envelope.
pub fn to_model_json<T: Serialize>(model: &T) -> Result<String, NeuralError> {
    serde_json::to_string_pretty(&ModelFileRef {
        format: MODEL_FORMAT,
        version: MODEL_VERSION,
        model,
    })
    .map_err(|e| NeuralError::Serde(e.to_string()))
}

pub fn from_model_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, NeuralError> {
    let header: serde_json::Value =
        serde_json::from_str(text).map_err(|e| NeuralError::Serde(e.to_string()))?;
    let format = header
        .get("format")
        .and_then(|f| f.as_str())
        .unwrap_or("")
        .to_string();
    let version = header
        .get("version")
        .and_then(|v| v.as_u64())
        .unwrap_or(0) as u32;
    if format != MODEL_FORMAT || version != MODEL_VERSION {
        return Err(NeuralError::UnknownFormat { format, version });
    }
    let file: ModelFileOwned<T> =
        serde_json::from_value(header).map_err(|e| NeuralError::Serde(e.to_string()))?;
    debug_assert_eq!(file.format, MODEL_FORMAT);
    debug_assert_eq!(file.version, MODEL_VERSION);
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_layer(n: usize) -> Layer {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Layer {
            weights: Tensor::new(vec![n, n], w).unwrap(),
            bias: Tensor::zeros(vec![n]),
            activation: Activation::Identity,
        }
    }

    #[test]
    fn identity_and_bias_forward() {
        let net = Network::from_layers(vec![identity_layer(3)]).unwrap();
        assert_eq!(net.predict(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);

        let layer = Layer {
            weights: Tensor::zeros(vec![2, 3]),
            bias: Tensor::new(vec![2], vec![0.5, -1.0]).unwrap(),
            activation: Activation::Tanh,
        };
        let net = Network::from_layers(vec![layer]).unwrap();
        assert_eq!(
            net.predict(&[9.0, 9.0, 9.0]).unwrap(),
            vec![0.5f64.tanh(), (-1.0f64).tanh()]
        );
        assert!(matches!(net.predict(&[1.0]), Err(NeuralError::Shape { .. })));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-300);
        let a = softmax(&[0.3, -1.2, 2.0]);
        let b = softmax(&[100.3, 98.8, 102.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(masked_softmax(&[5.0, 1.0], &[false, true]), vec![0.0, 1.0]);
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let layer = Layer {
            weights: Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            bias: Tensor::zeros(vec![2]),
            activation: Activation::Identity,
        };
        let net = Network::from_layers(vec![layer]).unwrap();
        let (_, cache) = net.forward(&[3.0, 5.0]).unwrap();
        let (g, input_grad) = net.backward(&cache, &[1.0, 2.0]).unwrap();
        assert_eq!(g.weights[0], vec![3.0, 5.0, 6.0, 10.0]);
        assert_eq!(g.biases[0], vec![1.0, 2.0]);
        assert!((input_grad[0] - 0.7).abs() < 1e-12);

        let (g, _) = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = Network::new(&[2, 3, 1], Activation::Tanh, Activation::Identity, 1).unwrap();
        let (_, cache) = net.forward(&[0.1, 0.2]).unwrap();
        let p = net.parameters();
        net.set_parameters(&p).unwrap();
        assert_eq!(
            net.backward(&cache, &[1.0]).unwrap_err(),
            NeuralError::StaleCache
        );
    }

    #[test]
    fn gradient_check_small_net() {
        for act in [Activation::Tanh, Activation::Identity] {
            let net = Network::new(&[4, 6, 5, 3], act, Activation::Identity, 9).unwrap();
            let err = gradient_check(&net, &[0.3, -0.2, 0.8, 0.1], &[1.0, -0.5, 2.0], 1e-5)
                .unwrap();
            assert!(err < 1e-4, "{act:?}: {err}");
        }
    }

    #[test]
    fn adam_examples() {
        let mut net = Network::from_layers(vec![identity_layer(2)]).unwrap();
        let before = net.parameters();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let zero = Gradients::zeros_like(&net);
        adam_step(&mut net, &zero, &mut state).unwrap();
        assert_eq!(net.parameters(), before);
        assert_eq!(state.t, 1);

        let mut net = Network::from_layers(vec![identity_layer(1)]).unwrap();
        let mut state = AdamState::new(
            &net,
            AdamConfig {
                epsilon: 0.0,
                ..AdamConfig::default()
            },
        );
        let mut g = Gradients::zeros_like(&net);
        g.weights[0][0] = 0.37;
        g.biases[0][0] = -5.0;
        adam_step(&mut net, &g, &mut state).unwrap();
        let p = net.parameters();
        assert!((p[0] - (1.0 - 3e-4)).abs() < 1e-15);
        assert!((p[1] - 3e-4).abs() < 1e-15);

        let mut net = Network::from_layers(vec![identity_layer(1)]).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 1e-8,
        };
        let mut state = AdamState::new(&net, cfg);
        let mut g = Gradients::zeros_like(&net);
        g.weights[0][0] = 2.0;
        for step in 1..=2 {
            adam_step(&mut net, &g, &mut state).unwrap();
            let expected = 1.0 - step as f64 * 0.1 * 2.0 / (2.0 + 1e-8);
            assert!((net.parameters()[0] - expected).abs() < 1e-15);
        }

        g.weights[0][0] = f64::NAN;
        assert!(adam_step(&mut net, &g, &mut state).is_err());
    }

    #[test]
    fn model_json_round_trip_and_version_check() {
        let net = Network::new(&[3, 4, 2], Activation::Relu, Activation::Identity, 5).unwrap();
        let text = to_model_json(&net).unwrap();
        let back: Network = from_model_json(&text).unwrap();
        assert!(back.same_parameters(&net));
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            from_model_json::<Network>(&bumped),
            Err(NeuralError::UnknownFormat { version: 99, .. })
        ));
    }
}
