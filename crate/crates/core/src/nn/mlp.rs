//! Dense multilayer perceptron with hand-written reverse mode.
//!
//! Layer stack, per hidden layer: dense -> activation -> dropout. The input is
//! normalized before the first layer and the final dense output is
//! de-normalized. Every pass works on a batch (rows are samples); the
//! single-vector entry points are thin wrappers over a batch of one.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Uniform};

use super::NormalizationStats;
use crate::error::{ensure_dim, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
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

    /// Derivative expressed through the pre-activation.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl MlpConfig {
    /// Two hidden layers of 256 ReLU units with 10% dropout.
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![256, 256],
            output_dim,
            activation: Activation::Relu,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Invalid("mlp input/output dims must be >= 1".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Invalid("hidden dims must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Invalid(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }
}

/// One affine map; `weights` is `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Weights and biases of every layer, output layer last.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
}

impl MlpParams {
    pub fn zeros(config: &MlpConfig) -> Self {
        let layers = config
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| Dense {
                weights: Array2::zeros((fan_out, fan_in)),
                bias: Array1::zeros(fan_out),
            })
            .collect();
        Self { layers }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &MlpConfig, rng: &mut Rng) -> Self {
        let mut params = Self::zeros(config);
        for layer in &mut params.layers {
            let (fan_out, fan_in) = layer.weights.dim();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            layer.weights.mapv_inplace(|_| dist.sample(rng));
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// Checks the layout against `config`.
    pub fn check(&self, config: &MlpConfig) -> Result<()> {
        let dims = config.layer_dims();
        ensure_dim("mlp layer count", dims.len(), self.layers.len())?;
        for (layer, (fan_in, fan_out)) in self.layers.iter().zip(dims) {
            if layer.weights.dim() != (fan_out, fan_in) || layer.bias.len() != fan_out {
                return Err(Error::Contract(format!(
                    "layer shape {:?}/{} does not match ({fan_out}, {fan_in})",
                    layer.weights.dim(),
                    layer.bias.len()
                )));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.dim() == b.weights.dim() && a.bias.len() == b.bias.len()
            })
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.layers.iter().position(|l| {
            l.weights.iter().any(|v| !v.is_finite()) || l.bias.iter().any(|v| !v.is_finite())
        })
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &MlpParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(alpha, &b.weights);
            a.bias.scaled_add(alpha, &b.bias);
        }
    }

    /// All entries in a fixed order: per layer, weights row-major then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) onto an existing layout.
    pub fn unflatten_from(&mut self, values: &[f64]) -> Result<()> {
        ensure_dim("flattened params", self.num_params(), values.len())?;
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().expect("length checked");
            }
            for b in l.bias.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

/// Inverted-dropout multipliers for each hidden layer: entries are `0` or
/// `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    layers: Vec<Array2<f64>>,
}

impl DropoutMask {
    pub fn sample(config: &MlpConfig, batch: usize, rng: &mut Rng) -> Self {
        let keep = 1.0 - config.dropout_rate;
        let scale = 1.0 / keep;
        let layers = config
            .hidden_dims
            .iter()
            .map(|&h| {
                Array2::from_shape_simple_fn((batch, h), || {
                    if config.dropout_rate == 0.0 || rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        Self { layers }
    }

    /// Builds a mask from explicit per-layer multipliers.
    pub fn from_layers(layers: Vec<Array2<f64>>) -> Self {
        Self { layers }
    }

    fn check(&self, config: &MlpConfig, batch: usize) -> Result<()> {
        ensure_dim("dropout mask layers", config.hidden_dims.len(), self.layers.len())?;
        for (m, &h) in self.layers.iter().zip(&config.hidden_dims) {
            if m.dim() != (batch, h) {
                return Err(Error::Contract(format!(
                    "dropout mask shape {:?} does not match ({batch}, {h})",
                    m.dim()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Eval,
    Train(&'a DropoutMask),
}

/// Intermediate values of a batched forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input to each dense layer (the first is the normalized network input).
    layer_inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    pre_activations: Vec<Array2<f64>>,
    /// De-normalized network output, `(batch, output_dim)`.
    pub output: Array2<f64>,
}

impl ForwardPass {
    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

/// Gradients produced by [`Mlp::backward_batch`].
#[derive(Debug, Clone)]
pub struct Gradients {
    /// Summed over the batch; `None` when not requested.
    pub params: Option<MlpParams>,
    /// Per-row gradient with respect to the raw (un-normalized) input.
    pub input: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub config: MlpConfig,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(config: MlpConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let params = MlpParams::init(&config, rng);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: MlpConfig, params: MlpParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        if params.first_non_finite_layer().is_some() {
            return Err(Error::NonFinite("mlp parameters".into()));
        }
        Ok(Self { config, params })
    }

    fn check_stats(&self, stats: &NormalizationStats) -> Result<()> {
        ensure_dim("stats input dim", self.config.input_dim, stats.input_mean.len())?;
        ensure_dim("stats output dim", self.config.output_dim, stats.output_mean.len())
    }

    pub fn forward_batch(
        &self,
        stats: &NormalizationStats,
        inputs: ArrayView2<f64>,
        mode: Mode<'_>,
    ) -> Result<ForwardPass> {
        ensure_dim("mlp input", self.config.input_dim, inputs.ncols())?;
        self.check_stats(stats)?;
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mlp input".into()));
        }
        let batch = inputs.nrows();
        if let Mode::Train(mask) = mode {
            mask.check(&self.config, batch)?;
        }

        let mut h = inputs.to_owned();
        for mut row in h.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&stats.input_mean).zip(&stats.input_std) {
                *x = (*x - m) / s;
            }
        }

        let n_hidden = self.config.hidden_dims.len();
        let mut layer_inputs = Vec::with_capacity(n_hidden + 1);
        let mut pre_activations = Vec::with_capacity(n_hidden);
        let act = self.config.activation;
        for (i, layer) in self.params.layers[..n_hidden].iter().enumerate() {
            let mut z = h.dot(&layer.weights.t());
            z += &layer.bias;
            let mut a = z.mapv(|v| act.apply(v));
            if let Mode::Train(mask) = mode {
                a *= &mask.layers[i];
            }
            layer_inputs.push(h);
            pre_activations.push(z);
            h = a;
        }
        let last = &self.params.layers[n_hidden];
        let mut out = h.dot(&last.weights.t());
        out += &last.bias;
        layer_inputs.push(h);
        for mut row in out.rows_mut() {
            for ((y, m), s) in row.iter_mut().zip(&stats.output_mean).zip(&stats.output_std) {
                *y = *y * s + m;
            }
        }
        Ok(ForwardPass {
            layer_inputs,
            pre_activations,
            output: out,
        })
    }

    /// Reverse pass for `sum_rows(output . upstream)`.
    ///
    /// `mode` must carry the same dropout mask as the forward pass that
    /// produced `pass`.
    pub fn backward_batch(
        &self,
        stats: &NormalizationStats,
        pass: &ForwardPass,
        mode: Mode<'_>,
        upstream: ArrayView2<f64>,
        want_params: bool,
    ) -> Result<Gradients> {
        let batch = pass.batch_size();
        if upstream.dim() != (batch, self.config.output_dim) {
            return Err(Error::Contract(format!(
                "upstream gradient shape {:?} does not match ({batch}, {})",
                upstream.dim(),
                self.config.output_dim
            )));
        }
        self.check_stats(stats)?;
        if let Mode::Train(mask) = mode {
            mask.check(&self.config, batch)?;
        }

        let mut delta = upstream.to_owned();
        for mut row in delta.rows_mut() {
            for (d, s) in row.iter_mut().zip(&stats.output_std) {
                *d *= s;
            }
        }

        let n_hidden = self.config.hidden_dims.len();
        let mut grads = want_params.then(|| self.params.zeros_like());
        let act = self.config.activation;
        for l in (0..=n_hidden).rev() {
            let layer = &self.params.layers[l];
            if let Some(g) = grads.as_mut() {
                g.layers[l].weights = delta.t().dot(&pass.layer_inputs[l]);
                g.layers[l].bias = delta.sum_axis(Axis(0));
            }
            let mut dh = delta.dot(&layer.weights);
            if l > 0 {
                let hidden = l - 1;
                if let Mode::Train(mask) = mode {
                    dh *= &mask.layers[hidden];
                }
                ndarray::Zip::from(&mut dh)
                    .and(&pass.pre_activations[hidden])
                    .for_each(|d, &z| *d *= act.derivative(z));
            }
            delta = dh;
        }
        for mut row in delta.rows_mut() {
            for (d, s) in row.iter_mut().zip(&stats.input_std) {
                *d /= s;
            }
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }

    pub fn forward(
        &self,
        stats: &NormalizationStats,
        input: &[f64],
        mode: Mode<'_>,
    ) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Contract(e.to_string()))?;
        Ok(self.forward_batch(stats, view, mode)?.output.into_raw_vec_and_offset().0)
    }

    /// Exact gradients of `output . upstream` with respect to every parameter
    /// and to the input.
    pub fn backward(
        &self,
        stats: &NormalizationStats,
        input: &[f64],
        mode: Mode<'_>,
        upstream: &[f64],
    ) -> Result<(MlpParams, Vec<f64>)> {
        ensure_dim("upstream gradient", self.config.output_dim, upstream.len())?;
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Contract(e.to_string()))?;
        let pass = self.forward_batch(stats, view, mode)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream)
            .map_err(|e| Error::Contract(e.to_string()))?;
        let grads = self.backward_batch(stats, &pass, mode, up, true)?;
        let params = grads.params.expect("requested");
        Ok((params, grads.input.into_raw_vec_and_offset().0))
    }
}
