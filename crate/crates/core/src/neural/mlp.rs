use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// First derivative; the relu subgradient at 0 is 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    #[inline]
    pub fn second_derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Relu | Activation::Identity => 0.0,
        }
    }

    /// True when the second derivative vanishes almost everywhere.
    pub fn is_piecewise_linear(self) -> bool {
        !matches!(self, Activation::Tanh)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

/// A fully connected layer `a_out = act(W a_in + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `d_out x d_in`.
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Weights and biases of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Intermediate values of a batched forward pass. Samples are columns.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[l]` the output of layer `l`.
    pub activations: Vec<DMatrix<f64>>,
    /// `pre_activations[l]` feeds layer `l`'s activation (0-based layers).
    pub pre_activations: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("at least the input is cached")
    }
}

pub(crate) fn add_bias(z: &mut DMatrix<f64>, bias: &DVector<f64>) {
    for mut col in z.column_iter_mut() {
        col += bias;
    }
}

pub(crate) fn map_pairs(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: impl Fn(f64, f64) -> f64,
) -> DMatrix<f64> {
    a.zip_map(b, f)
}

impl MlpParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::Dimension {
                    context: "layer bias",
                    expected: layer.output_dim(),
                    actual: layer.bias.len(),
                });
            }
            if l > 0 && layers[l - 1].output_dim() != layer.input_dim() {
                return Err(Error::Dimension {
                    context: "layer chaining",
                    expected: layers[l - 1].output_dim(),
                    actual: layer.input_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `dims` lists layer widths from
    /// input to output; hidden layers use `hidden`, the last layer `output`.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "need input and output widths");
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (d_in, d_out) = (w[0], w[1]);
                let bound = (6.0 / (d_in + d_out) as f64).sqrt();
                Dense {
                    weight: DMatrix::from_fn(d_out, d_in, |_, _| rng.gen_range(-bound..=bound)),
                    bias: DVector::zeros(d_out),
                    activation: if l == last { output } else { hidden },
                }
            })
            .collect();
        Self { layers }
    }

    /// `p x p x p x p` generator with tanh hidden units.
    pub fn generator<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        Self::generator_with_width(p, p, rng)
    }

    /// `p x h x h x p` generator with tanh hidden units.
    pub fn generator_with_width<R: Rng + ?Sized>(p: usize, h: usize, rng: &mut R) -> Self {
        Self::init(&[p, h, h, p], Activation::Tanh, Activation::Identity, rng)
    }

    /// `p x p x p x 1` critic with relu hidden units.
    pub fn critic<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Self {
        Self::critic_with_width(p, p, rng)
    }

    /// `p x h x h x 1` critic with relu hidden units.
    pub fn critic_with_width<R: Rng + ?Sized>(p: usize, h: usize, rng: &mut R) -> Self {
        Self::init(&[p, h, h, 1], Activation::Relu, Activation::Identity, rng)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, rows: usize) -> Result<()> {
        if rows != self.input_dim() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.input_dim(),
                actual: rows,
            });
        }
        Ok(())
    }

    /// Forward pass over a batch stored column-wise (`d_in x batch`).
    pub fn forward_batch(&self, input: &DMatrix<f64>) -> Result<ForwardCache> {
        self.check_input(input.nrows())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for layer in &self.layers {
            let mut z = &layer.weight * activations.last().unwrap();
            add_bias(&mut z, &layer.bias);
            let act = layer.activation;
            activations.push(z.map(|v| act.apply(v)));
            pre_activations.push(z);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Output only, without keeping intermediates.
    pub fn predict_batch(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(input.nrows())?;
        let mut a = input.clone();
        for layer in &self.layers {
            let mut z = &layer.weight * &a;
            add_bias(&mut z, &layer.bias);
            let act = layer.activation;
            z.apply(|v| *v = act.apply(*v));
            a = z;
        }
        Ok(a)
    }

    /// Reverse accumulation of `sum_b upstream_b . output_b`.
    ///
    /// Returns the parameter gradients and the input gradients
    /// (`d_in x batch`). Also returns the per-layer backward vectors at the
    /// pre-activations, which the gradient penalty reuses.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: &DMatrix<f64>,
    ) -> Result<(MlpGrads, DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return Err(Error::Dimension {
                context: "upstream gradient",
                expected: out.nrows() * out.ncols(),
                actual: upstream.nrows() * upstream.ncols(),
            });
        }
        let depth = self.layers.len();
        let mut weights = vec![DMatrix::zeros(0, 0); depth];
        let mut biases = vec![DVector::zeros(0); depth];
        let mut deltas = vec![DMatrix::zeros(0, 0); depth];
        let mut carry = upstream.clone();
        for l in (0..depth).rev() {
            let act = self.layers[l].activation;
            let delta = map_pairs(&carry, &cache.pre_activations[l], |c, z| c * act.derivative(z));
            weights[l] = &delta * cache.activations[l].transpose();
            biases[l] = delta.column_sum();
            carry = self.layers[l].weight.tr_mul(&delta);
            deltas[l] = delta;
        }
        Ok((MlpGrads { weights, biases }, carry, deltas))
    }

    /// Flattened parameters: per layer, row-major weights then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            for i in 0..layer.weight.nrows() {
                flat.extend(layer.weight.row(i).iter());
            }
            flat.extend(layer.bias.iter());
        }
        flat
    }

    /// Inverse of [`MlpParams::to_flat`].
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension {
                context: "flat parameter vector",
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for layer in &mut out.layers {
            for i in 0..layer.weight.nrows() {
                for j in 0..layer.weight.ncols() {
                    layer.weight[(i, j)] = it.next().unwrap();
                }
            }
            for v in layer.bias.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        Ok(out)
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params
                .layers()
                .iter()
                .map(|l| DMatrix::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
            biases: params
                .layers()
                .iter()
                .map(|l| DVector::zeros(l.bias.len()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.weights {
            *w *= c;
        }
        for b in &mut self.biases {
            *b *= c;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| *v == 0.0))
            && self.biases.iter().all(|b| b.iter().all(|v| *v == 0.0))
    }

    /// Same ordering as [`MlpParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for i in 0..w.nrows() {
                flat.extend(w.row(i).iter());
            }
            flat.extend(b.iter());
        }
        flat
    }
}

fn column(input: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(input.len(), 1, input)
}

/// Single-sample forward pass.
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    Ok(params.predict_batch(&column(input))?.as_slice().to_vec())
}

/// Gradient of `upstream . output` with respect to every parameter.
pub fn grad_params(params: &MlpParams, input: &[f64], upstream: &[f64]) -> Result<MlpGrads> {
    let cache = params.forward_batch(&column(input))?;
    let (grads, _, _) = params.backward_batch(&cache, &column(upstream))?;
    Ok(grads)
}

/// Input gradient of a scalar-output network.
pub fn grad_input(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    if params.output_dim() != 1 {
        return Err(Error::Dimension {
            context: "input gradient requires a scalar-output network",
            expected: 1,
            actual: params.output_dim(),
        });
    }
    let cache = params.forward_batch(&column(input))?;
    let (_, g, _) = params.backward_batch(&cache, &DMatrix::from_element(1, 1, 1.0))?;
    Ok(g.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense(w: DMatrix<f64>, b: &[f64], activation: Activation) -> Dense {
        Dense {
            weight: w,
            bias: DVector::from_column_slice(b),
            activation,
        }
    }

    /// Independent straight-line evaluation with plain loops.
    fn naive_forward(params: &MlpParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for layer in params.layers() {
            let mut next = vec![0.0; layer.output_dim()];
            for (i, out) in next.iter_mut().enumerate() {
                let mut s = layer.bias[i];
                for (j, v) in a.iter().enumerate() {
                    s += layer.weight[(i, j)] * v;
                }
                *out = match layer.activation {
                    Activation::Tanh => s.tanh(),
                    Activation::Relu => {
                        if s > 0.0 {
                            s
                        } else {
                            0.0
                        }
                    }
                    Activation::Identity => s,
                };
            }
            a = next;
        }
        a
    }

    fn relu_kink_margin(params: &MlpParams, x: &[f64]) -> f64 {
        let cache = params.forward_batch(&column(x)).unwrap();
        params
            .layers()
            .iter()
            .zip(&cache.pre_activations)
            .filter(|(l, _)| l.activation == Activation::Relu)
            .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()) + 1e-7
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = MlpParams::generator(4, &mut rng);
        net = net.with_flat(&vec![0.0; net.num_params()]).unwrap();
        assert_eq!(mlp_forward(&net, &[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn hand_evaluated_relu_net() {
        let net = MlpParams::new(vec![
            dense(DMatrix::identity(2, 2), &[0.0, 0.0], Activation::Relu),
            dense(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &[0.5], Activation::Identity),
        ])
        .unwrap();
        assert_eq!(mlp_forward(&net, &[-1.0, 2.0]).unwrap(), vec![2.5]);
    }

    #[test]
    fn matches_duplicate_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let net = MlpParams::init(&[3, 3, 3, 3], Activation::Tanh, Activation::Identity, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let got = mlp_forward(&net, &x).unwrap();
            let want = naive_forward(&net, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-14, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpParams::critic(3, &mut rng);
        assert!(mlp_forward(&net, &[1.0, 2.0]).is_err());
        assert!(grad_params(&net, &[1.0, 2.0, 3.0], &[1.0, 1.0]).is_err());
        let gen = MlpParams::generator(3, &mut rng);
        assert!(grad_input(&gen, &[1.0, 2.0, 3.0]).is_err());
        let broken = vec![
            dense(DMatrix::zeros(2, 3), &[0.0, 0.0], Activation::Relu),
            dense(DMatrix::zeros(1, 3), &[0.0], Activation::Identity),
        ];
        assert!(MlpParams::new(broken).is_err());
    }

    #[test]
    fn linear_layer_gradients() {
        let w = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let net = MlpParams::new(vec![dense(w, &[0.1, 0.2], Activation::Identity)]).unwrap();
        let x = [1.0, -2.0, 4.0];
        let u = [0.5, -3.0];
        let g = grad_params(&net, &x, &u).unwrap();
        for i in 0..2 {
            assert_eq!(g.biases[0][i], u[i]);
            for j in 0..3 {
                assert_eq!(g.weights[0][(i, j)], u[i] * x[j]);
            }
        }
        assert!(grad_params(&net, &x, &[0.0, 0.0]).unwrap().is_zero());
    }

    #[test]
    fn linear_critic_input_gradient_is_weight() {
        let w = [0.3, -1.2, 2.0];
        let net = MlpParams::new(vec![dense(
            DMatrix::from_row_slice(1, 3, &w),
            &[5.0],
            Activation::Identity,
        )])
        .unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -7.0, 3.0]] {
            assert_eq!(grad_input(&net, &x).unwrap(), w.to_vec());
        }
    }

    #[test]
    fn relu_kink_uses_zero_subgradient() {
        let net = MlpParams::new(vec![
            dense(DMatrix::from_row_slice(1, 1, &[1.0]), &[0.0], Activation::Relu),
            dense(DMatrix::from_row_slice(1, 1, &[1.0]), &[0.0], Activation::Identity),
        ])
        .unwrap();
        assert_eq!(grad_input(&net, &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(grad_input(&net, &[1e-300]).unwrap(), vec![1.0]);
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-4;
        let mut checked = 0;
        while checked < 100 {
            let p = rng.gen_range(1..=4);
            let (hidden, out_dim) = if rng.gen_bool(0.5) {
                (Activation::Tanh, p)
            } else {
                (Activation::Relu, 1)
            };
            let net = MlpParams::init(&[p, p, p, out_dim], hidden, Activation::Identity, &mut rng);
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
            if relu_kink_margin(&net, &x) < 1e-2 {
                continue;
            }
            let u: Vec<f64> = (0..out_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let objective = |flat: &[f64]| -> f64 {
                let y = mlp_forward(&net.with_flat(flat).unwrap(), &x).unwrap();
                y.iter().zip(&u).map(|(a, b)| a * b).sum()
            };
            let analytic = grad_params(&net, &x, &u).unwrap().to_flat();
            let theta = net.to_flat();
            for (idx, a) in analytic.iter().enumerate() {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[idx] += h;
                minus[idx] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                assert!(rel_close(*a, fd, 1e-4), "param {idx}: {a} vs {fd}");
            }
            if out_dim == 1 {
                let gi = grad_input(&net, &x).unwrap();
                for j in 0..p {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (mlp_forward(&net, &xp).unwrap()[0] - mlp_forward(&net, &xm).unwrap()[0])
                        / (2.0 * h);
                    assert!(rel_close(gi[j], fd, 1e-4), "input {j}: {} vs {fd}", gi[j]);
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpParams::generator(5, &mut rng);
        let x = [0.1, 0.2, -0.3, 0.4, 1.5];
        let a = mlp_forward(&net, &x).unwrap();
        let b = mlp_forward(&net, &x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn init_respects_glorot_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpParams::critic(10, &mut rng);
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= bound));
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|b| *b == 0.0)));
        assert_eq!(net.layers()[2].activation, Activation::Identity);
        assert_eq!(net.layers()[0].activation, Activation::Relu);
    }
}
