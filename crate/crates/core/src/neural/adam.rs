use serde::{Deserialize, Serialize};

use super::mlp::{MlpGrads, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.5,
            beta2: 0.9,
            eps: default_eps(),
        }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: MlpGrads,
    second: MlpGrads,
    step: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        Self {
            config,
            first: MlpGrads::zeros_like(params),
            second: MlpGrads::zeros_like(params),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    ///
    /// An all-zero gradient is not an update: parameters, moments and the
    /// step counter stay unchanged.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        if grads.is_zero() {
            return;
        }
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |theta: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= alpha * m_hat / (v_hat.sqrt() + eps);
        };
        for (l, layer) in params.layers_mut().iter_mut().enumerate() {
            let (m, v, g) = (&mut self.first.weights[l], &mut self.second.weights[l], &grads.weights[l]);
            for (((theta, m), v), g) in layer.weight.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.iter()) {
                update(theta, m, v, *g);
            }
            let (m, v, g) = (&mut self.first.biases[l], &mut self.second.biases[l], &grads.biases[l]);
            for (((theta, m), v), g) in layer.bias.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.iter()) {
                update(theta, m, v, *g);
            }
        }
    }
}

/// Functional form: returns the updated parameters and state.
pub fn adam_step(mut state: AdamState, mut params: MlpParams, grads: &MlpGrads) -> (MlpParams, AdamState) {
    state.step(&mut params, grads);
    (params, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp::{Activation, Dense};
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grad(g: f64) -> MlpGrads {
        MlpGrads {
            weights: vec![DMatrix::from_element(1, 1, g)],
            biases: vec![DVector::zeros(1)],
        }
    }

    fn one_weight(theta: f64) -> MlpParams {
        MlpParams::new(vec![Dense {
            weight: DMatrix::from_element(1, 1, theta),
            bias: DVector::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn first_step_by_hand() {
        let params = one_weight(0.0);
        let state = AdamState::new(&params, AdamConfig::default());
        let (params, state) = adam_step(state, params, &grad(1.0));
        let want = -0.001 / (1.0 + 1e-8);
        assert!((params.layers()[0].weight[(0, 0)] - want).abs() < 1e-18);
        assert!((want + 0.000999999990).abs() < 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = MlpParams::critic(3, &mut rng);
        let zero = MlpGrads::zeros_like(&params);
        let mut state = AdamState::new(&params, AdamConfig::default());
        let mut p = params.clone();
        assert_eq!(state.step_count(), 0);
        state.step(&mut p, &zero);
        assert_eq!(p, params);
        // also after moments have built up
        let mut g = MlpGrads::zeros_like(&params);
        g.weights[0][(0, 0)] = 1.0;
        state.step(&mut p, &g);
        let snapshot = p.clone();
        state.step(&mut p, &zero);
        assert_eq!(p, snapshot);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn quadratic_descent_is_monotone() {
        let mut params = one_weight(1.0);
        let mut state = AdamState::new(&params, AdamConfig::default());
        let mut last = 1.0f64;
        for _ in 0..2 {
            let theta = params.layers()[0].weight[(0, 0)];
            state.step(&mut params, &grad(theta));
            let now = params.layers()[0].weight[(0, 0)];
            assert!(now.abs() < last.abs());
            last = now;
        }
        assert_eq!(state.step_count(), 2);
    }
}
