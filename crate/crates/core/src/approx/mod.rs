//! Small dense feed-forward networks with hand-written reverse mode and Adam.
//!
//! Weights of each layer are stored row-major as `outputs × inputs`, so
//! `y_o = b_o + Σ_i W[o·inputs + i]·x_i`. Hidden layers apply the configured
//! activation; the output layer is linear.

mod adam;

pub use adam::{AdamConfig, AdamState};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths…, output width.
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init_seed: u64,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation, init_seed: u64) -> Self {
        Self {
            layer_sizes,
            activation,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_sizes(&self.layer_sizes)
    }
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(invalid(
            "a network needs at least an input and an output size",
        ));
    }
    if sizes.contains(&0) {
        return Err(invalid("layer sizes must be positive"));
    }
    Ok(())
}

/// One affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, b)| b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()),
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    activation: Activation,
    layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output")
    }

    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }
}

impl Mlp {
    /// Fan-in uniform initialisation `U(-1/√fan_in, 1/√fan_in)` for weights and biases.
    pub fn new(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let mut d = Dense::zeros(inputs, outputs);
                for x in d.weights.iter_mut().chain(d.biases.iter_mut()) {
                    *x = rng.gen_range(-bound..bound);
                }
                d
            })
            .collect();
        Ok(Self {
            activation: spec.activation,
            layers,
        })
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        Ok(Self {
            activation,
            layers: layer_sizes
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs
                || l.biases.len() != l.outputs
                || l.inputs == 0
                || l.outputs == 0
            {
                return Err(invalid(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(invalid(format!(
                    "layer {i} input width does not match previous output"
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(Self { activation, layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
                context: "network input",
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut z);
            if l != last {
                for v in z.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut x, &mut z);
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(activations.last().unwrap(), &mut z);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            pre_activations,
        })
    }

    /// Gradients of `output · output_gradient` with respect to all parameters.
    pub fn backward(&self, trace: &Trace, output_gradient: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradients(trace, output_gradient, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradients of `output · output_gradient` into `grads`.
    pub fn accumulate_gradients(
        &self,
        trace: &Trace,
        output_gradient: &[f64],
        grads: &mut Gradients,
    ) -> Result<()> {
        if output_gradient.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: output_gradient.len(),
                context: "output gradient",
            });
        }
        if trace.activations.len() != self.layers.len() + 1
            || trace.input().len() != self.input_dim()
        {
            return Err(invalid("trace does not belong to this network"));
        }
        if !grads.matches(self) {
            return Err(invalid("gradient buffer shape does not match network"));
        }
        let last = self.layers.len() - 1;
        let mut delta = output_gradient.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l != last {
                let z = &trace.pre_activations[l];
                let a = &trace.activations[l + 1];
                for j in 0..layer.outputs {
                    delta[j] *= self.activation.derivative(z[j], a[j]);
                }
            }
            let input = &trace.activations[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &x) in row.iter_mut().zip(input) {
                    *w += d * x;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Polyak mixing `self ← (1 − tau)·self + tau·source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if self.layer_sizes() != source.layer_sizes() {
            return Err(invalid("soft update between networks of different shapes"));
        }
        for (dst, src) in self.layers.iter_mut().zip(&source.layers) {
            for (d, s) in dst.weights.iter_mut().zip(&src.weights) {
                *d += tau * (s - *d);
            }
            for (d, s) in dst.biases.iter_mut().zip(&src.biases) {
                *d += tau * (s - *d);
            }
        }
        Ok(())
    }

    /// Flattened parameters in layer order, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                actual: flat.len(),
                context: "flat parameter vector",
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &MlpCheckpoint::from(self))?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let ckpt: MlpCheckpoint = serde_json::from_reader(f)?;
        ckpt.try_into()
    }
}

/// On-disk layout: a `layer_sizes` header, the activation, then per layer the
/// row-major `outputs × inputs` weight array and the bias vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl From<&Mlp> for MlpCheckpoint {
    fn from(m: &Mlp) -> Self {
        Self {
            layer_sizes: m.layer_sizes(),
            activation: m.activation,
            weights: m.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: m.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }
}

impl TryFrom<MlpCheckpoint> for Mlp {
    type Error = Error;

    fn try_from(c: MlpCheckpoint) -> Result<Self> {
        validate_sizes(&c.layer_sizes)?;
        let n = c.layer_sizes.len() - 1;
        if c.weights.len() != n || c.biases.len() != n {
            return Err(invalid("checkpoint layer count does not match its header"));
        }
        let layers = c
            .layer_sizes
            .windows(2)
            .zip(c.weights.into_iter().zip(c.biases))
            .map(|(w, (weights, biases))| Dense {
                inputs: w[0],
                outputs: w[1],
                weights,
                biases,
            })
            .collect();
        Mlp::from_layers(layers, c.activation)
    }
}

impl Serialize for Mlp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MlpCheckpoint::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mlp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = MlpCheckpoint::deserialize(d)?;
        Mlp::try_from(c).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter-shaped buffer (gradients, Adam moments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<DenseGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn matches(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn scale(&mut self, k: f64) {
        self.iter_mut().for_each(|g| *g *= k);
    }

    pub fn fill_zero(&mut self) {
        self.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Central finite-difference gradient of `loss` over the flat parameters.
    pub fn finite_difference<F: FnMut(&Mlp) -> f64>(net: &Mlp, step: f64, mut loss: F) -> Vec<f64> {
        let base = net.parameters();
        let mut probe = net.clone();
        let mut out = Vec::with_capacity(base.len());
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] = base[k] + step;
            probe.set_parameters(&p).unwrap();
            let up = loss(&probe);
            p[k] = base[k] - step;
            probe.set_parameters(&p).unwrap();
            let down = loss(&probe);
            out.push((up - down) / (2.0 * step));
        }
        out
    }

    /// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
    pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / na.max(nb).max(1e-8)
    }
}
