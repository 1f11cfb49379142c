//! Iterative imputation.
//!
//! Starting from a complete initial fill, each sweep visits the incomplete
//! patterns in order. Pattern `k`'s GAN is trained on every row outside the
//! pattern (using current imputations), then the pattern's rows are
//! re-imputed in place, so later patterns see the refreshed values. After
//! `N` burn-in sweeps a snapshot is kept every `T` sweeps until `M` exist.

use nalgebra::DMatrix;

use super::direct::{impute_migan1, train_migan1};
use super::pattern_gan::PatternGan;
use super::{check_shape, check_trainable, warn_small_patterns, Algorithm, ImputationSet, Provenance, TrainConfig};
use crate::baselines::colmean_impute;
use crate::error::{Error, Result};
use crate::missing_patterns::{partition_patterns, IncompleteMatrix, PatternPartition};
use crate::rng::{ids, stream};

/// Whether sweep `s` (1-based) emits a snapshot.
pub fn emits_at(sweep: usize, burn_in: usize, thinning: usize) -> bool {
    sweep > burn_in && (sweep - burn_in) % thinning == 0
}

/// Runs sweeps `1 ..= burn_in + imputations * thinning`, calling
/// `step(s, emit)` for each; `emit` says whether a snapshot is due after
/// the sweep.
pub fn drive_sweeps(
    burn_in: usize,
    thinning: usize,
    imputations: usize,
    mut step: impl FnMut(usize, bool) -> Result<()>,
) -> Result<()> {
    if thinning == 0 {
        return Err(Error::Config("thinning must be >= 1".into()));
    }
    for s in 1..=burn_in + imputations * thinning {
        step(s, emits_at(s, burn_in, thinning))?;
    }
    Ok(())
}

/// GAN-based fill when enough complete cases exist, column means otherwise.
pub fn initial_imputation(data: &IncompleteMatrix, part: &PatternPartition, cfg: &TrainConfig) -> Result<DMatrix<f64>> {
    check_shape(data, part)?;
    if data.is_complete() {
        return Ok(data.values().clone());
    }
    if part.complete_rows().len() >= cfg.gan_init_threshold() {
        let gans = train_migan1(data, part, cfg)?;
        impute_migan1(data, part, &gans, &mut stream(cfg.seed, ids::IMPUTE))
    } else {
        colmean_impute(data)
    }
}

/// Iterative training and imputation from a complete `initial` fill.
pub fn train_impute_migan2(
    data: &IncompleteMatrix,
    initial: DMatrix<f64>,
    part: &PatternPartition,
    cfg: &TrainConfig,
) -> Result<ImputationSet> {
    cfg.validate()?;
    check_shape(data, part)?;
    if !data.agrees_with(&initial) {
        return Err(Error::Data(
            "initial imputation must be finite and match every observed cell".into(),
        ));
    }
    check_trainable(part)?;
    warn_small_patterns(part, cfg.min_pattern_rows);

    let seed = cfg.seed;
    let targets: Vec<usize> = part.incomplete_patterns().collect();
    let mut cells = Vec::with_capacity(targets.len());
    for &k in &targets {
        let complement = part.complement_rows(k)?;
        if complement.len() < 2 {
            return Err(Error::SmallTrainingPool {
                pattern: k,
                rows: complement.len(),
            });
        }
        let gan = PatternGan::for_pattern(
            k,
            &part.patterns()[k],
            cfg,
            &mut stream(seed, ids::GENERATOR_INIT + k as u64),
            &mut stream(seed, ids::CRITIC_INIT + k as u64),
        );
        cells.push((gan, complement));
    }

    let mut train_rng = stream(seed, ids::TRAIN);
    let mut impute_rng = stream(seed, ids::IMPUTE);
    let mut current = initial;
    let mut snapshots = Vec::with_capacity(cfg.imputations);
    drive_sweeps(cfg.burn_in, cfg.thinning, cfg.imputations, |sweep, emit| {
        for (gan, complement) in cells.iter_mut() {
            let k = gan.pattern;
            let pool = current.select_rows(complement.iter()).transpose();
            let stats = gan.train(&pool, cfg, cfg.cell_rounds, &mut train_rng)?;
            log::trace!("sweep {sweep} pattern {k}: generator loss {:.4}", stats.last_generator_loss);
            gan.impute_rows(&mut current, &part.patterns()[k].rows, &mut impute_rng)?;
        }
        if emit {
            snapshots.push(current.clone());
        }
        Ok(())
    })?;

    ImputationSet::new(
        snapshots,
        data.clone(),
        Provenance {
            algorithm: Algorithm::Migan2,
            seed,
            config: cfg.clone(),
        },
    )
}

/// Partition, initial fill and iterative imputation in one call.
pub fn impute_migan2(data: &IncompleteMatrix, cfg: &TrainConfig) -> Result<ImputationSet> {
    let part = partition_patterns(data);
    let initial = initial_imputation(data, &part, cfg)?;
    train_impute_migan2(data, initial, &part, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_schedule_emits_sweeps_four_to_thirteen() {
        let mut emitted = Vec::new();
        drive_sweeps(3, 1, 10, |s, e| {
            if e {
                emitted.push(s);
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(emitted, (4..=13).collect::<Vec<_>>());
    }

    #[test]
    fn thinned_schedule() {
        let emitted: Vec<usize> = (1..=2 + 3 * 2).filter(|&s| emits_at(s, 2, 2)).collect();
        assert_eq!(emitted, vec![4, 6, 8]);
    }

    #[test]
    fn single_pattern_returns_initial_untrained() {
        let data = IncompleteMatrix::from_complete(DMatrix::from_fn(3, 2, |i, j| (i + j) as f64));
        let part = partition_patterns(&data);
        let cfg = TrainConfig {
            burn_in: 0,
            thinning: 1,
            imputations: 1,
            ..Default::default()
        };
        let set = train_impute_migan2(&data, data.values().clone(), &part, &cfg).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(&set.imputations[0], data.values());
    }

    #[test]
    fn rejects_bad_initial_fill() {
        let data = IncompleteMatrix::from_rows(&[vec![Some(1.0), None], vec![Some(2.0), Some(3.0)], vec![Some(2.0), Some(4.0)]]).unwrap();
        let part = partition_patterns(&data);
        let mut init = colmean_impute(&data).unwrap();
        init[(1, 1)] = 99.0;
        assert!(matches!(
            train_impute_migan2(&data, init, &part, &TrainConfig::default()),
            Err(Error::Data(_))
        ));
        let nan = data.values().clone();
        assert!(train_impute_migan2(&data, nan, &part, &TrainConfig::default()).is_err());
    }

    #[test]
    fn tiny_complement_is_rejected() {
        let data = IncompleteMatrix::from_rows(&[vec![Some(1.0), None], vec![Some(2.0), Some(3.0)], vec![Some(2.5), None]]).unwrap();
        let part = partition_patterns(&data);
        let init = colmean_impute(&data).unwrap();
        assert!(matches!(
            train_impute_migan2(&data, init, &part, &TrainConfig::default()),
            Err(Error::SmallTrainingPool { pattern: 1, rows: 1 })
        ));
    }

    #[test]
    fn initial_fill_paths() {
        // no complete cases: column means
        let data = IncompleteMatrix::from_rows(&[vec![Some(1.0), None], vec![None, Some(3.0)], vec![Some(3.0), None]]).unwrap();
        let part = partition_patterns(&data);
        let init = initial_imputation(&data, &part, &TrainConfig::default()).unwrap();
        assert_eq!(init[(1, 0)], 2.0);
        assert_eq!(init[(0, 1)], 3.0);

        // enough complete cases: GAN path, still mask-preserving
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let values = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let mask = (0..n * 2).map(|c| c % 2 == 0 || c / 2 < 34).collect();
        let data = IncompleteMatrix::new(values, mask).unwrap();
        let part = partition_patterns(&data);
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 1,
            ..Default::default()
        };
        assert!(part.complete_rows().len() >= cfg.gan_init_threshold());
        let init = initial_imputation(&data, &part, &cfg).unwrap();
        assert!(data.agrees_with(&init));
        let colmean = colmean_impute(&data).unwrap();
        assert_ne!(init, colmean);
    }

    #[test]
    fn runs_end_to_end_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let values = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mask = (0..n * 3)
            .map(|c| {
                let (i, j) = (c / 3, c % 3);
                !(j == 2 && i % 3 == 0) && !(j == 1 && i % 3 == 1)
            })
            .collect();
        let data = IncompleteMatrix::new(values, mask).unwrap();
        let cfg = TrainConfig {
            batch_size: 8,
            cell_rounds: 2,
            burn_in: 1,
            thinning: 2,
            imputations: 3,
            ..Default::default()
        };
        let a = impute_migan2(&data, &cfg).unwrap();
        let b = impute_migan2(&data, &cfg).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a.imputations, b.imputations);
        assert!(a.imputations.iter().all(|m| data.agrees_with(m)));
        assert_ne!(a.imputations[0], a.imputations[1]);
    }
}
