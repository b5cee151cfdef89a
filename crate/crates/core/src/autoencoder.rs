//! Fully connected autoencoder with hand-written backpropagation and Adam.
//!
//! Batches are row-major: each row of an input matrix is one field snapshot.
//! Layer weights are stored `fan_in x fan_out` so a batch forward pass is
//! `X W + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Sigmoid,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            // log(1 + e^x) without overflow
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Softplus => sigmoid(x),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Encoder widths read left to right; the decoder mirrors them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Self {
        MlpSpec {
            layer_widths,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(
                "layer_widths needs at least an input and a latent width".into(),
            ));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.uniform_range(-limit, limit));
        Layer {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    fn affine(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weight);
        out += &self.bias;
        out
    }
}

/// Activations kept from a forward pass for the backward sweep.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the batch itself for layer 0).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each hidden layer.
    pre_activations: Vec<Array2<f64>>,
}

/// A stack of affine layers; the activation follows every layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl Mlp {
    fn init(widths: &[usize], activation: Activation, rng: &mut SeededRng) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        Mlp { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut h = self.layers[0].affine(x);
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                h = layer.affine(h.view());
            }
            if l < last {
                h.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(h.view());
            inputs.push(h);
            if l < last {
                h = z.mapv(|v| self.activation.apply(v));
                pre_activations.push(z);
            } else {
                h = z;
            }
        }
        Ok((
            h,
            ForwardCache {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Backpropagates `upstream = dL/d(output)`; returns per-layer gradients and `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, upstream: Array2<f64>) -> (Vec<Layer>, Array2<f64>) {
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = upstream;
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                let act = self.activation;
                ndarray::Zip::from(&mut delta)
                    .and(&cache.pre_activations[l])
                    .for_each(|d, &z| *d *= act.derivative(z));
            }
            let gw = cache.inputs[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[l].weight.t());
            grads.push(Layer { weight: gw, bias: gb });
            delta = next;
        }
        grads.reverse();
        (grads, delta)
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub spec: MlpSpec,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Gradients with the same layout as [`AutoencoderModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderGrads {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

impl AutoencoderModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = SeededRng::new(seed);
        let encoder = Mlp::init(&spec.layer_widths, spec.activation, &mut rng);
        let mirrored: Vec<usize> = spec.layer_widths.iter().rev().copied().collect();
        let decoder = Mlp::init(&mirrored, spec.activation, &mut rng);
        Ok(AutoencoderModel {
            spec,
            encoder,
            decoder,
        })
    }

    pub fn from_parts(spec: MlpSpec, encoder: Mlp, decoder: Mlp) -> Result<Self> {
        spec.validate()?;
        let widths = &spec.layer_widths;
        let check = |mlp: &Mlp, expected: Vec<usize>| -> Result<()> {
            let ok = mlp.layers.len() == expected.len() - 1
                && mlp.layers.iter().zip(expected.windows(2)).all(|(l, w)| {
                    l.weight.dim() == (w[0], w[1]) && l.bias.len() == w[1]
                });
            if ok {
                Ok(())
            } else {
                Err(Error::Shape("layer shapes disagree with the network spec".into()))
            }
        };
        check(&encoder, widths.clone())?;
        check(&decoder, widths.iter().rev().copied().collect())?;
        Ok(AutoencoderModel {
            spec,
            encoder,
            decoder,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.spec.latent_dim()
    }

    pub fn field_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn encode(&self, u: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, u.len()), u).expect("contiguous row");
        Ok(self.encoder.forward(x)?.into_raw_vec_and_offset().0)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, z.len()), z).expect("contiguous row");
        Ok(self.decoder.forward(x)?.into_raw_vec_and_offset().0)
    }

    pub fn encode_batch(&self, u: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encoder.forward(u)
    }

    pub fn decode_batch(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.decoder.forward(z)
    }

    pub fn zero_grads(&self) -> AutoencoderGrads {
        let zeros = |m: &Mlp| {
            m.layers
                .iter()
                .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect()
        };
        AutoencoderGrads {
            encoder: zeros(&self.encoder),
            decoder: zeros(&self.decoder),
        }
    }

    /// Mutable views of every parameter, encoder first, weights before biases.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .layers
            .iter_mut()
            .chain(self.decoder.layers.iter_mut())
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.encoder
            .layers
            .iter()
            .chain(&self.decoder.layers)
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}

impl AutoencoderGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn add_assign(&mut self, other: &AutoencoderGrads) {
        for (a, b) in self
            .encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .zip(other.encoder.iter().chain(&other.decoder))
        {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }
}

/// `1/N_mu sum_i 1/(N_t+1) sum_n ||u_n - u_hat_n||^2`.
pub fn reconstruction_loss(truth: &[Array2<f64>], recon: &[Array2<f64>]) -> Result<f64> {
    if truth.len() != recon.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "{} ground-truth trajectories vs {} reconstructions",
            truth.len(),
            recon.len()
        )));
    }
    let mut total = 0.0;
    for (u, r) in truth.iter().zip(recon) {
        if u.dim() != r.dim() {
            return Err(Error::Shape(format!("{:?} vs {:?}", u.dim(), r.dim())));
        }
        let sq: f64 = u.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        total += sq / u.nrows() as f64;
    }
    Ok(total / truth.len() as f64)
}

/// Bias-corrected Adam over a list of parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64, slot_sizes: &[usize]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: slot_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Registers a new parameter slot with zeroed moments.
    pub fn push_slot(&mut self, size: usize) {
        self.first_moment.push(vec![0.0; size]);
        self.second_moment.push(vec![0.0; size]);
    }

    pub fn slot_count(&self) -> usize {
        self.first_moment.len()
    }

    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.slot_count() || grads.len() != self.slot_count() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} slots, got {} parameter and {} gradient slots",
                self.slot_count(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (s, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[s];
            let v = &mut self.second_moment[s];
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape(format!("slot {s} changed size")));
            }
            for i in 0..m.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
