use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Silu => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Silu),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "silu" => Ok(Activation::Silu),
            other => Err(Error::config(
                "net.activation",
                format!("unknown activation `{other}`"),
            )),
        }
    }
}

/// Sinusoidal features of `t`: `(sin ω_k t, cos ω_k t)` for `width/2`
/// geometrically spaced frequencies from 1 to [`TimeEmbedding::MAX_FREQ`].
///
/// The lowest frequency is 1 rad per unit time, so `cos t` alone is strictly
/// monotone on `[0, 1]` and the embedding is injective there. The feature
/// norm is exactly `sqrt(width/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEmbedding {
    freqs: Vec<f64>,
}

impl TimeEmbedding {
    pub const MAX_FREQ: f64 = 50.0;

    pub fn new(width: usize) -> Result<Self> {
        if !width.is_multiple_of(2) {
            return Err(Error::config(
                "net.time_features",
                "time embedding width must be even",
            ));
        }
        let k = width / 2;
        let freqs = (0..k)
            .map(|i| {
                if k == 1 {
                    1.0
                } else {
                    Self::MAX_FREQ.powf(i as f64 / (k - 1) as f64)
                }
            })
            .collect();
        Ok(Self { freqs })
    }

    pub fn width(&self) -> usize {
        2 * self.freqs.len()
    }

    pub fn write_features(&self, t: f64, out: &mut [f64]) {
        for (i, w) in self.freqs.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            out[2 * i] = s;
            out[2 * i + 1] = c;
        }
    }
}

/// One affine layer `y = x·Wᵀ + b` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Shape of a network: data input width, hidden widths, output width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub activation: Activation,
    /// Width of the time embedding; 0 disables time conditioning.
    pub time_features: usize,
}

impl Architecture {
    /// Velocity head for `d`-dimensional data with the default desk-scale body.
    pub fn velocity(d: usize) -> Self {
        Self {
            data_dim: d,
            hidden: vec![64, 64, 64],
            out_dim: d,
            activation: Activation::Silu,
            time_features: 16,
        }
    }

    /// Scalar-logit discriminator without time conditioning.
    pub fn discriminator(d: usize) -> Self {
        Self {
            data_dim: d,
            hidden: vec![64, 64, 64],
            out_dim: 1,
            activation: Activation::Silu,
            time_features: 0,
        }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.data_dim + self.time_features];
        dims.extend(&self.hidden);
        dims.push(self.out_dim);
        dims
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Time-conditioned feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub embedding: TimeEmbedding,
    pub data_dim: usize,
}

/// Activations recorded during a forward pass for the reverse sweep.
pub struct Tape {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
}

/// Parameter gradients, laid out like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weight *= k;
            l.bias *= k;
        }
    }

    /// `self += k · other`.
    pub fn add_scaled(&mut self, other: &Grads, k: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(k, &b.weight);
            a.bias.scaled_add(k, &b.bias);
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Silu => z * sigmoid(z),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let y = z.tanh();
                1.0 - y * y
            }
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

impl Mlp {
    /// Fan-in scaled uniform initialization, `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        if arch.data_dim == 0 || arch.out_dim == 0 || arch.hidden.contains(&0) {
            return Err(Error::config("net", "layer widths must be positive"));
        }
        let embedding = TimeEmbedding::new(arch.time_features)?;
        let mut rng = SeededRng::new(seed);
        let dims = arch.dims();
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut layer = Layer::zeros(w[0], w[1]);
                layer
                    .weight
                    .mapv_inplace(|_| rng.uniform_range(-bound, bound));
                layer.bias.mapv_inplace(|_| rng.uniform_range(-bound, bound));
                layer
            })
            .collect();
        Ok(Self {
            layers,
            activation: arch.activation,
            embedding,
            data_dim: arch.data_dim,
        })
    }

    /// Network with every parameter zero (output identically zero).
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        let mut m = Self::new(arch, 0)?;
        m.params_mut().for_each(|p| *p = 0.0);
        Ok(m)
    }

    /// Builds a network from explicit layers; dimensions must chain.
    pub fn from_layers(
        layers: Vec<Layer>,
        activation: Activation,
        time_features: usize,
        data_dim: usize,
    ) -> Result<Self> {
        let m = Self {
            layers,
            activation,
            embedding: TimeEmbedding::new(time_features)?,
            data_dim,
        };
        m.check_topology()?;
        Ok(m)
    }

    fn check_topology(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        if self.layers[0].in_dim() != self.data_dim + self.embedding.width() {
            return Err(Error::Shape(format!(
                "first layer expects {} inputs, data+embedding is {}",
                self.layers[0].in_dim(),
                self.data_dim + self.embedding.width()
            )));
        }
        for (i, w) in self.layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].out_dim(),
                    i + 1,
                    w[1].in_dim()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            data_dim: self.data_dim,
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(Layer::out_dim)
                .collect(),
            out_dim: self.out_dim(),
            activation: self.activation,
            time_features: self.embedding.width(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters in serialization order: per layer, row-major weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim(), l.out_dim()))
                .collect(),
        }
    }

    fn input_matrix(&self, x: ArrayView2<'_, f64>, t: &[f64]) -> Result<Array2<f64>> {
        if x.ncols() != self.data_dim {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.data_dim
            )));
        }
        let e = self.embedding.width();
        if e > 0 && t.len() != x.nrows() && t.len() != 1 {
            return Err(Error::Shape(format!(
                "{} times for {} rows",
                t.len(),
                x.nrows()
            )));
        }
        let mut input = Array2::zeros((x.nrows(), self.data_dim + e));
        input.slice_mut(s![.., ..self.data_dim]).assign(&x);
        if e > 0 {
            let mut feats = vec![0.0; e];
            let shared = t.len() == 1;
            if shared {
                self.embedding.write_features(t[0], &mut feats);
            }
            for (i, mut row) in input.rows_mut().into_iter().enumerate() {
                if !shared {
                    self.embedding.write_features(t[i], &mut feats);
                }
                row.slice_mut(s![self.data_dim..])
                    .iter_mut()
                    .zip(&feats)
                    .for_each(|(d, s)| *d = *s);
            }
        }
        Ok(input)
    }

    /// Evaluates the network at per-row times `t` (a single entry broadcasts).
    /// Time-unconditioned networks ignore `t`.
    pub fn forward(&self, x: ArrayView2<'_, f64>, t: &[f64]) -> Result<Array2<f64>> {
        let mut a = self.input_matrix(x, t)?;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if k < last {
                let act = self.activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that also records what the reverse sweep needs.
    pub fn forward_taped(&self, x: ArrayView2<'_, f64>, t: &[f64]) -> Result<(Array2<f64>, Tape)> {
        let mut a = self.input_matrix(x, t)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            inputs.push(a);
            if k < last {
                let act = self.activation;
                a = z.mapv(|v| act.apply(v));
                pre.push(z);
            } else {
                a = z;
            }
        }
        Ok((a, Tape { inputs, pre }))
    }

    /// Reverse sweep: given dL/d(output), returns parameter gradients and
    /// dL/dx for the data columns of the input.
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<'_, f64>) -> Result<(Grads, Array2<f64>)> {
        let n = tape.inputs[0].nrows();
        if upstream.dim() != (n, self.out_dim()) {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, output is ({n}, {})",
                upstream.dim(),
                self.out_dim()
            )));
        }
        let mut grads = self.zero_grads();
        let mut delta = upstream.to_owned();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            grads.layers[k].weight = delta.t().dot(&tape.inputs[k]);
            grads.layers[k].bias = delta.sum_axis(Axis(0));
            let mut da = delta.dot(&layer.weight);
            if k > 0 {
                let act = self.activation;
                da.zip_mut_with(&tape.pre[k - 1], |g, &z| *g *= act.derivative(z));
            }
            delta = da;
        }
        let dx = delta.slice(s![.., ..self.data_dim]).to_owned();
        Ok((grads, dx))
    }

    /// Replaces every parameter by the nearest 32-bit float.
    pub fn round_to_f32(&mut self) {
        self.params_mut().for_each(|p| *p = *p as f32 as f64);
    }

    /// Copies the parameters of `other`; topologies must match.
    pub fn copy_params_from(&mut self, other: &Mlp) -> Result<()> {
        if self.architecture() != other.architecture() {
            return Err(Error::Shape("cannot copy parameters across topologies".into()));
        }
        self.params_mut().zip(other.params()).for_each(|(d, s)| *d = *s);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_arch() -> Architecture {
        Architecture {
            data_dim: 2,
            hidden: vec![32, 32],
            out_dim: 2,
            activation: Activation::Silu,
            time_features: 16,
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&Architecture::velocity(2)).unwrap();
        let x = array![[1.0, -3.0], [0.5, 7.0]];
        let y = m.forward(x.view(), &[0.2, 0.9]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_matches_definition() {
        let emb = TimeEmbedding::new(4).unwrap();
        let w = array![[0.5, -1.0, 2.0, 0.25, 1.5, -0.5], [1.0, 0.0, -1.0, 3.0, 0.0, 2.0]];
        let b = array![0.1, -0.2];
        let m = Mlp::from_layers(
            vec![Layer {
                weight: w.clone(),
                bias: b.clone(),
            }],
            Activation::Tanh,
            4,
            2,
        )
        .unwrap();
        let x = array![[0.3, -0.7]];
        let t = 0.4;
        let mut feats = [0.0; 4];
        emb.write_features(t, &mut feats);
        let input = [x[[0, 0]], x[[0, 1]], feats[0], feats[1], feats[2], feats[3]];
        let y = m.forward(x.view(), &[t]).unwrap();
        for o in 0..2 {
            let expect: f64 = (0..6).map(|j| input[j] * w[[o, j]]).sum::<f64>() + b[o];
            assert!((y[[0, o]] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = Mlp::new(&small_arch(), 3).unwrap();
        let x = array![[0.1, 0.2], [0.3, -0.4], [1.0, 2.0]];
        let a = m.forward(x.view(), &[0.1, 0.5, 0.9]).unwrap();
        let b = m.forward(x.view(), &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(a, b);
        let (c, _) = m.forward_taped(x.view(), &[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn dimension_mismatch_is_structural_error() {
        let m = Mlp::new(&small_arch(), 3).unwrap();
        let x = Array2::<f64>::zeros((4, 3));
        assert!(matches!(m.forward(x.view(), &[0.0; 4]), Err(Error::Shape(_))));
        let x = Array2::<f64>::zeros((4, 2));
        assert!(matches!(m.forward(x.view(), &[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = Mlp::new(&small_arch(), 5).unwrap();
        let x = array![[0.1, 0.2], [0.3, -0.4]];
        let (_, tape) = m.forward_taped(x.view(), &[0.3, 0.6]).unwrap();
        let (g, dx) = m.backward(&tape, Array2::zeros((2, 2)).view()).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_are_linear_in_upstream() {
        let m = Mlp::new(&small_arch(), 5).unwrap();
        let x = array![[0.1, 0.2], [0.3, -0.4]];
        let up = array![[0.5, -1.0], [2.0, 0.25]];
        let (_, tape) = m.forward_taped(x.view(), &[0.3, 0.6]).unwrap();
        let (g1, _) = m.backward(&tape, up.view()).unwrap();
        let (g2, _) = m.backward(&tape, (&up * 2.0).view()).unwrap();
        for (a, b) in g1.iter().zip(g2.iter()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn embedding_is_injective_and_bounded() {
        let emb = TimeEmbedding::new(16).unwrap();
        let mut prev_cos = f64::INFINITY;
        let mut f = [0.0; 16];
        for i in 0..=1000 {
            emb.write_features(i as f64 / 1000.0, &mut f);
            let norm: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 8f64.sqrt()).abs() < 1e-12);
            assert!(f[1] < prev_cos);
            prev_cos = f[1];
        }
        assert!(TimeEmbedding::new(3).is_err());
    }

    #[test]
    fn param_count_matches_architecture() {
        let arch = Architecture::velocity(2);
        let m = Mlp::new(&arch, 0).unwrap();
        assert_eq!(m.param_count(), arch.param_count());
        assert_eq!(m.params().count(), arch.param_count());
        assert_eq!(m.architecture(), arch);
    }
}
