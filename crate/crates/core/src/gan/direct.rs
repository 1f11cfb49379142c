//! Direct imputation: every incomplete pattern gets its own GAN, trained on
//! the complete cases with that pattern's mask applied.

use nalgebra::DMatrix;
use rand::Rng;

use super::pattern_gan::PatternGan;
use super::{check_shape, check_trainable, warn_small_patterns, Algorithm, ImputationSet, Provenance, TrainConfig};
use crate::error::{Error, Result};
use crate::missing_patterns::{IncompleteMatrix, PatternPartition};
use crate::rng::{ids, stream};

/// Training rounds allowed by the epoch budget for a pool of `pool` rows.
pub fn round_budget(cfg: &TrainConfig, pool: usize) -> usize {
    let batch = cfg.batch_size.min(pool).max(1);
    (cfg.epochs * pool).div_ceil(batch)
}

/// Trains one GAN per incomplete pattern on the complete cases.
///
/// Returns an empty list when the data has no missing cells.
pub fn train_migan1(data: &IncompleteMatrix, part: &PatternPartition, cfg: &TrainConfig) -> Result<Vec<PatternGan>> {
    cfg.validate()?;
    check_shape(data, part)?;
    check_trainable(part)?;
    if part.incomplete_patterns().next().is_none() {
        return Ok(Vec::new());
    }
    let complete = part.complete_rows();
    if complete.len() < 2 {
        return Err(Error::NoCompleteCases {
            found: complete.len(),
            required: 2,
        });
    }
    warn_small_patterns(part, cfg.min_pattern_rows);

    let pool = data.values().select_rows(complete).transpose();
    let rounds = round_budget(cfg, pool.ncols());
    let seed = cfg.seed;
    part.incomplete_patterns()
        .map(|k| {
            let k64 = k as u64;
            let mut gan = PatternGan::for_pattern(
                k,
                &part.patterns()[k],
                cfg,
                &mut stream(seed, ids::GENERATOR_INIT + k64),
                &mut stream(seed, ids::CRITIC_INIT + k64),
            );
            let stats = gan.train(&pool, cfg, rounds, &mut stream(seed, ids::PATTERN_TRAIN + k64))?;
            log::debug!(
                "pattern {k}: {} rounds (plateau: {}), generator loss {:.4}",
                stats.rounds,
                stats.plateaued,
                stats.last_generator_loss
            );
            Ok(gan)
        })
        .collect()
}

/// Fills every incomplete row with its pattern's generator and fresh noise.
pub fn impute_migan1<R: Rng + ?Sized>(
    data: &IncompleteMatrix,
    part: &PatternPartition,
    gans: &[PatternGan],
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    check_shape(data, part)?;
    let mut out = data.values().clone();
    for k in part.incomplete_patterns() {
        let rows = &part.patterns()[k].rows;
        if rows.is_empty() {
            continue;
        }
        let gan = gans
            .iter()
            .find(|g| g.pattern == k && g.mask() == part.patterns()[k].mask.as_slice())
            .ok_or(Error::MissingGenerator { pattern: k })?;
        gan.impute_rows(&mut out, rows, rng)?;
    }
    Ok(out)
}

/// `M` independent train-and-impute runs seeded `seed + 1 ..= seed + M`.
pub fn multiple_impute_migan1(data: &IncompleteMatrix, part: &PatternPartition, cfg: &TrainConfig) -> Result<ImputationSet> {
    cfg.validate()?;
    let imputations = (1..=cfg.imputations as u64)
        .map(|r| {
            let run = TrainConfig {
                seed: cfg.seed.wrapping_add(r),
                ..cfg.clone()
            };
            let gans = train_migan1(data, part, &run)?;
            impute_migan1(data, part, &gans, &mut stream(run.seed, ids::IMPUTE))
        })
        .collect::<Result<Vec<_>>>()?;
    ImputationSet::new(
        imputations,
        data.clone(),
        Provenance {
            algorithm: Algorithm::Migan1,
            seed: cfg.seed,
            config: cfg.clone(),
        },
    )
}
