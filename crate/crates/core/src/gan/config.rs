use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::AdamConfig;

/// Hyperparameters for both imputers.
///
/// Missing fields in a JSON document fall back to the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Gradient-penalty weight.
    pub lambda_gp: f64,
    /// Reconstruction (L1) weight in the generator loss.
    pub lambda_rec: f64,
    /// Batch size; shrinks to the training pool size when the pool is smaller.
    pub batch_size: usize,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub adam: AdamConfig,
    /// Direct imputer budget, in passes over the complete cases.
    pub epochs: usize,
    /// Relative change of the windowed mean generator loss that counts as a plateau.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    /// Number of imputations `M`.
    pub imputations: usize,
    /// Burn-in sweeps `N` of the iterative imputer.
    pub burn_in: usize,
    /// Thinning interval `T` of the iterative imputer.
    pub thinning: usize,
    /// Training rounds per (sweep, pattern) cell of the iterative imputer.
    pub cell_rounds: usize,
    /// Patterns with fewer rows trigger a warning.
    pub min_pattern_rows: usize,
    /// Hidden-layer width of both networks; `None` uses the column count.
    pub hidden_width: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_gp: 10.0,
            lambda_rec: 0.1,
            batch_size: 256,
            n_critic: 5,
            adam: AdamConfig::default(),
            epochs: 200,
            plateau_tol: 1e-3,
            plateau_window: 20,
            imputations: 10,
            burn_in: 3,
            thinning: 1,
            cell_rounds: 20,
            min_pattern_rows: 5,
            hidden_width: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_owned()));
        if !(self.lambda_gp >= 0.0) {
            return fail("lambda_gp must be >= 0");
        }
        if !(self.lambda_rec >= 0.0) {
            return fail("lambda_rec must be >= 0");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.n_critic == 0 {
            return fail("n_critic must be >= 1");
        }
        if self.imputations == 0 {
            return fail("imputations must be >= 1");
        }
        if self.thinning == 0 {
            return fail("thinning must be >= 1");
        }
        if self.hidden_width == Some(0) {
            return fail("hidden_width must be >= 1");
        }
        if self.plateau_window == 0 {
            return fail("plateau_window must be >= 1");
        }
        let a = &self.adam;
        if !(a.alpha > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return fail("adam needs alpha > 0, beta1 and beta2 in [0, 1), eps > 0");
        }
        Ok(())
    }

    /// Sweeps run by the iterative imputer: `N + M * T`.
    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.imputations * self.thinning
    }

    /// Minimum complete-case count for a GAN-based initial imputation.
    pub fn gan_init_threshold(&self) -> usize {
        (self.batch_size / 8).max(2)
    }
}
