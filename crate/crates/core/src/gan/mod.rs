//! Per-pattern conditional GAN imputers.
//!
//! * [`direct`]: one GAN per incomplete pattern, trained on complete cases only.
//! * [`iterative`]: GANs trained on the currently imputed complement of each
//!   pattern, sweeping over patterns with burn-in and thinning.

pub mod config;
pub mod direct;
pub mod iterative;
pub mod pattern_gan;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use config::TrainConfig;
pub use direct::{impute_migan1, multiple_impute_migan1, train_migan1};
pub use iterative::{drive_sweeps, emits_at, impute_migan2, initial_imputation, train_impute_migan2};
pub use pattern_gan::{generator_impute, LossAndGrads, PatternGan, TrainStats};

use crate::error::{Error, Result};
use crate::missing_patterns::{IncompleteMatrix, PatternPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Complete-case training, repeated per imputation.
    Migan1,
    /// Iterative all-case training with burn-in and thinning.
    Migan2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config: TrainConfig,
}

/// `M` completed copies of one incomplete matrix.
#[derive(Debug, Clone)]
pub struct ImputationSet {
    pub imputations: Vec<DMatrix<f64>>,
    pub source: IncompleteMatrix,
    pub provenance: Provenance,
}

impl ImputationSet {
    /// Fails if any matrix disagrees with an observed cell or is not finite.
    pub fn new(imputations: Vec<DMatrix<f64>>, source: IncompleteMatrix, provenance: Provenance) -> Result<Self> {
        if let Some(bad) = imputations.iter().position(|m| !source.agrees_with(m)) {
            return Err(Error::Numeric(format!(
                "imputation {} is non-finite or alters observed cells",
                bad + 1
            )));
        }
        Ok(Self {
            imputations,
            source,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.imputations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imputations.is_empty()
    }
}

/// Rejects rows that have no observed column at all.
pub(crate) fn check_trainable(part: &PatternPartition) -> Result<()> {
    for (k, pat) in part.patterns().iter().enumerate() {
        if !pat.is_trainable() {
            return Err(Error::FullyMissingPattern { pattern: k });
        }
    }
    Ok(())
}

pub(crate) fn warn_small_patterns(part: &PatternPartition, floor: usize) {
    for k in part.small_patterns(floor) {
        log::warn!(
            "pattern {k} has {} rows (< {floor}); its GAN is fitted to very few cases",
            part.patterns()[k].rows.len()
        );
    }
}

pub(crate) fn check_shape(data: &IncompleteMatrix, part: &PatternPartition) -> Result<()> {
    if data.nrows() != part.nrows() || data.ncols() != part.ncols() {
        return Err(Error::Dimension {
            context: "partition does not match data",
            expected: part.nrows() * part.ncols(),
            actual: data.nrows() * data.ncols(),
        });
    }
    Ok(())
}
