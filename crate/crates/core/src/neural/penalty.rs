//! Gradient penalty `lambda * (||grad_x D(x)||_2 - 1)^2` and its parameter
//! gradient.
//!
//! The parameter gradient differentiates through the input gradient. With
//! `u = d penalty / d g` held fixed, `d penalty / d theta` equals the
//! parameter gradient of the directional derivative `u . grad_x D(x)`, which
//! is computed by a forward tangent pass along `u` followed by a reverse pass
//! over both the primal and the tangent. Second-derivative activation terms
//! vanish for relu and identity layers but are kept for tanh.

use nalgebra::DMatrix;

use super::mlp::{map_pairs, MlpGrads, MlpParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PenaltyBatch {
    /// Per-sample penalty values (already multiplied by lambda).
    pub values: Vec<f64>,
    /// Per-sample `||grad_x D||_2`.
    pub grad_norms: Vec<f64>,
    /// `sum_b weight * d penalty_b / d theta`.
    pub grads: MlpGrads,
    /// Samples whose input gradient was exactly zero. Their norm term has
    /// no derivative and contributes a zero parameter gradient.
    pub zero_norm: usize,
}

/// Penalty over a batch of interpolates (`p x batch`), with every sample's
/// parameter gradient scaled by `weight`.
pub fn gradient_penalty_batch(
    critic: &MlpParams,
    points: &DMatrix<f64>,
    lambda: f64,
    weight: f64,
) -> Result<PenaltyBatch> {
    if critic.output_dim() != 1 {
        return Err(Error::Dimension {
            context: "gradient penalty requires a scalar-output critic",
            expected: 1,
            actual: critic.output_dim(),
        });
    }
    let batch = points.ncols();
    let layers = critic.layers();
    let depth = layers.len();
    let cache = critic.forward_batch(points)?;
    let (_, input_grad, deltas) = critic.backward_batch(&cache, &DMatrix::from_element(1, batch, 1.0))?;

    let mut values = Vec::with_capacity(batch);
    let mut grad_norms = Vec::with_capacity(batch);
    let mut zero_norm = 0;
    let mut direction = DMatrix::zeros(points.nrows(), batch);
    for b in 0..batch {
        let g = input_grad.column(b);
        let norm = g.norm();
        values.push(lambda * (norm - 1.0) * (norm - 1.0));
        grad_norms.push(norm);
        if norm == 0.0 {
            zero_norm += 1;
        } else {
            let scale = weight * 2.0 * lambda * (norm - 1.0) / norm;
            direction.set_column(b, &(g * scale));
        }
    }

    // Tangent pass: dz_l = W_l da_{l-1}, da_l = act'(z_l) * dz_l, da_0 = u.
    let mut tangent_pre = Vec::with_capacity(depth);
    let mut tangent_act = Vec::with_capacity(depth + 1);
    tangent_act.push(direction);
    for (l, layer) in layers.iter().enumerate() {
        let dz = &layer.weight * &tangent_act[l];
        let act = layer.activation;
        tangent_act.push(map_pairs(&dz, &cache.pre_activations[l], |t, z| t * act.derivative(z)));
        tangent_pre.push(dz);
    }

    // Reverse pass over primal and tangent. The tangent adjoint at each
    // pre-activation is the ordinary backward vector `deltas[l]`; the primal
    // adjoint picks up second-derivative terms.
    let mut weights = vec![DMatrix::zeros(0, 0); depth];
    let mut biases = Vec::with_capacity(depth);
    biases.resize(depth, nalgebra::DVector::zeros(0));
    let mut primal_adj_act = DMatrix::zeros(1, batch);
    let mut tangent_adj_act = DMatrix::from_element(1, batch, 1.0);
    for l in (0..depth).rev() {
        let act = layers[l].activation;
        let z = &cache.pre_activations[l];
        let mut primal_adj = map_pairs(&primal_adj_act, z, |a, z| a * act.derivative(z));
        if !act.is_piecewise_linear() {
            let curvature = map_pairs(&tangent_pre[l], z, |t, z| t * act.second_derivative(z));
            primal_adj += curvature.component_mul(&tangent_adj_act);
        }
        let tangent_adj = &deltas[l];
        weights[l] = tangent_adj * tangent_act[l].transpose() + &primal_adj * cache.activations[l].transpose();
        biases[l] = primal_adj.column_sum();
        if l > 0 {
            tangent_adj_act = layers[l].weight.tr_mul(tangent_adj);
            primal_adj_act = layers[l].weight.tr_mul(&primal_adj);
        }
    }

    Ok(PenaltyBatch {
        values,
        grad_norms,
        grads: MlpGrads { weights, biases },
        zero_norm,
    })
}

/// Single-point gradient penalty.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub value: f64,
    pub grads: MlpGrads,
    /// Set when `||grad_x D|| = 0` exactly.
    pub zero_norm: bool,
}

pub fn grad_penalty_params(critic: &MlpParams, x_tilde: &[f64], lambda: f64) -> Result<Penalty> {
    let points = DMatrix::from_column_slice(x_tilde.len(), 1, x_tilde);
    let out = gradient_penalty_batch(critic, &points, lambda, 1.0)?;
    Ok(Penalty {
        value: out.values[0],
        grads: out.grads,
        zero_norm: out.zero_norm > 0,
    })
}
