//! One conditional WGAN-GP per missing-data pattern.
//!
//! The generator sees the observed coordinates of a row with noise in the
//! missing slots, and its output is spliced back so that observed
//! coordinates pass through untouched. Batches are stored column-wise
//! (`p x batch`).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::missing_patterns::Pattern;
use crate::neural::checkpoint::{read_mlp, write_mlp, LineCursor};
use crate::neural::{gradient_penalty_batch, AdamState, MlpGrads, MlpParams};
use crate::rng::standard_normal_matrix;

pub const GAN_MAGIC: &str = "migan-pattern-gan";
pub const GAN_VERSION: u32 = 1;

/// Generator, critic and their optimizer state for one pattern.
#[derive(Debug, Clone)]
pub struct PatternGan {
    pub pattern: usize,
    /// `true` on observed columns.
    mask: Vec<bool>,
    pub generator: MlpParams,
    pub critic: MlpParams,
    pub gen_adam: AdamState,
    pub critic_adam: AdamState,
}

/// Summary of a training call.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub rounds: usize,
    pub plateaued: bool,
    pub last_generator_loss: f64,
    pub last_critic_loss: f64,
    /// Interpolates whose critic input gradient was exactly zero.
    pub zero_norm_events: usize,
}

/// Loss value plus gradients with respect to one network.
#[derive(Debug, Clone)]
pub struct LossAndGrads {
    pub loss: f64,
    pub grads: MlpGrads,
    pub zero_norm_events: usize,
}

/// `out[j] = if mask[j] { keep[j] } else { fill[j] }` column by column.
pub(crate) fn splice(mask: &[bool], keep: &DMatrix<f64>, fill: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = fill.clone();
    for (j, &m) in mask.iter().enumerate() {
        if m {
            out.row_mut(j).copy_from(&keep.row(j));
        }
    }
    out
}

fn check_batch(p: usize, a: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if a.ncols() == 0 {
        return Err(Error::EmptyBatch);
    }
    if a.nrows() != p {
        return Err(Error::Dimension {
            context,
            expected: p,
            actual: a.nrows(),
        });
    }
    Ok(())
}

impl PatternGan {
    /// Fresh networks for `pattern`; `p` is taken from the mask length.
    pub fn new<R: Rng + ?Sized>(
        pattern: usize,
        mask: Vec<bool>,
        cfg: &TrainConfig,
        gen_rng: &mut R,
        critic_rng: &mut R,
    ) -> Self {
        let p = mask.len();
        let h = cfg.hidden_width.unwrap_or(p);
        let generator = MlpParams::generator_with_width(p, h, gen_rng);
        let critic = MlpParams::critic_with_width(p, h, critic_rng);
        Self::from_networks(pattern, mask, generator, critic, cfg)
    }

    pub fn for_pattern<R: Rng + ?Sized>(
        index: usize,
        pattern: &Pattern,
        cfg: &TrainConfig,
        gen_rng: &mut R,
        critic_rng: &mut R,
    ) -> Self {
        Self::new(index, pattern.mask.clone(), cfg, gen_rng, critic_rng)
    }

    pub fn from_networks(
        pattern: usize,
        mask: Vec<bool>,
        generator: MlpParams,
        critic: MlpParams,
        cfg: &TrainConfig,
    ) -> Self {
        let gen_adam = AdamState::new(&generator, cfg.adam);
        let critic_adam = AdamState::new(&critic, cfg.adam);
        Self {
            pattern,
            mask,
            generator,
            critic,
            gen_adam,
            critic_adam,
        }
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.mask.iter().map(|&m| f64::from(u8::from(m))))
    }

    /// Raw generator output for rows `x` (missing slots may hold anything,
    /// including NaN) and noise `z`.
    pub fn raw_output(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_batch(self.dim(), x, "generator input")?;
        check_batch(self.dim(), z, "generator noise")?;
        self.generator.predict_batch(&splice(&self.mask, x, z))
    }

    /// Batched two-step generator: observed coordinates of `x` are copied
    /// through, missing ones come from the network.
    pub fn impute_batch(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(splice(&self.mask, x, &self.raw_output(x, z)?))
    }

    /// Critic loss `mean D(fake) - mean D(real) + lambda * mean (||grad D(interp)|| - 1)^2`
    /// with `interp = eps * real + (1 - eps) * fake`, one `eps` per sample.
    pub fn critic_loss_with_eps(
        &self,
        real: &DMatrix<f64>,
        fake: &DMatrix<f64>,
        eps: &[f64],
        lambda_gp: f64,
    ) -> Result<LossAndGrads> {
        let p = self.dim();
        check_batch(p, real, "critic real batch")?;
        check_batch(p, fake, "critic fake batch")?;
        let b = real.ncols();
        if fake.ncols() != b || eps.len() != b {
            return Err(Error::Dimension {
                context: "critic batch lengths",
                expected: b,
                actual: if fake.ncols() != b { fake.ncols() } else { eps.len() },
            });
        }
        let inv = 1.0 / b as f64;

        let mut both = DMatrix::zeros(p, 2 * b);
        both.columns_mut(0, b).copy_from(fake);
        both.columns_mut(b, b).copy_from(real);
        let cache = self.critic.forward_batch(&both)?;
        let scores = cache.output();
        let fake_mean = scores.columns(0, b).sum() * inv;
        let real_mean = scores.columns(b, b).sum() * inv;
        let upstream = DMatrix::from_fn(1, 2 * b, |_, c| if c < b { inv } else { -inv });
        let (mut grads, _, _) = self.critic.backward_batch(&cache, &upstream)?;

        let mut interp = fake.clone();
        for (c, &e) in eps.iter().enumerate() {
            let mut col = interp.column_mut(c);
            col *= 1.0 - e;
            col.axpy(e, &real.column(c), 1.0);
        }
        let pen = gradient_penalty_batch(&self.critic, &interp, lambda_gp, inv)?;
        grads.add_assign(&pen.grads);
        let penalty_mean = pen.values.iter().sum::<f64>() * inv;
        Ok(LossAndGrads {
            loss: fake_mean - real_mean + penalty_mean,
            grads,
            zero_norm_events: pen.zero_norm,
        })
    }

    /// As [`PatternGan::critic_loss_with_eps`], drawing `eps ~ U[0, 1]`.
    pub fn critic_loss_batch<R: Rng + ?Sized>(
        &self,
        real: &DMatrix<f64>,
        fake: &DMatrix<f64>,
        lambda_gp: f64,
        rng: &mut R,
    ) -> Result<LossAndGrads> {
        let eps: Vec<f64> = (0..real.ncols()).map(|_| rng.gen::<f64>()).collect();
        self.critic_loss_with_eps(real, fake, &eps, lambda_gp)
    }

    /// Generator loss `-mean D(x_hat) + lambda_rec * mean ||x - G_raw(x, z)||_1`
    /// for fully observed rows `x`.
    pub fn generator_loss_batch(
        &self,
        x: &DMatrix<f64>,
        z: &DMatrix<f64>,
        lambda_rec: f64,
    ) -> Result<LossAndGrads> {
        let p = self.dim();
        check_batch(p, x, "generator batch")?;
        check_batch(p, z, "generator noise")?;
        if z.ncols() != x.ncols() {
            return Err(Error::Dimension {
                context: "generator noise batch",
                expected: x.ncols(),
                actual: z.ncols(),
            });
        }
        let b = x.ncols();
        let inv = 1.0 / b as f64;

        let gen_cache = self.generator.forward_batch(&splice(&self.mask, x, z))?;
        let raw = gen_cache.output();
        let x_hat = splice(&self.mask, x, raw);
        let critic_cache = self.critic.forward_batch(&x_hat)?;
        let adversarial = -critic_cache.output().sum() * inv;
        let (_, critic_input_grad, _) = self
            .critic
            .backward_batch(&critic_cache, &DMatrix::from_element(1, b, -inv))?;

        let diff = raw - x;
        let reconstruction = diff.iter().map(|d| d.abs()).sum::<f64>() * inv;
        let mut upstream = diff.map(|d| {
            if d > 0.0 {
                lambda_rec * inv
            } else if d < 0.0 {
                -lambda_rec * inv
            } else {
                0.0
            }
        });
        for (j, &m) in self.mask.iter().enumerate() {
            if !m {
                let mut row = upstream.row_mut(j);
                row += critic_input_grad.row(j);
            }
        }
        let (grads, _, _) = self.generator.backward_batch(&gen_cache, &upstream)?;
        Ok(LossAndGrads {
            loss: adversarial + lambda_rec * reconstruction,
            grads,
            zero_norm_events: 0,
        })
    }

    /// `n_critic` critic updates followed by one generator update, with
    /// batches drawn with replacement from the columns of `pool`.
    pub fn train_round<R: Rng + ?Sized>(
        &mut self,
        pool: &DMatrix<f64>,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<(f64, f64, usize)> {
        let size = pool.ncols();
        if size < 2 {
            return Err(Error::SmallTrainingPool {
                pattern: self.pattern,
                rows: size,
            });
        }
        let p = self.dim();
        let b = cfg.batch_size.min(size);
        let draw = |rng: &mut R| -> DMatrix<f64> {
            let idx: Vec<usize> = (0..b).map(|_| rng.gen_range(0..size)).collect();
            pool.select_columns(&idx)
        };

        let mut critic_loss = 0.0;
        let mut zero_norm = 0;
        for _ in 0..cfg.n_critic {
            let x = draw(rng);
            let real = draw(rng);
            let z = standard_normal_matrix(p, b, rng);
            let fake = self.impute_batch(&x, &z)?;
            let out = self.critic_loss_batch(&real, &fake, cfg.lambda_gp, rng)?;
            self.critic_adam.step(&mut self.critic, &out.grads);
            critic_loss = out.loss;
            zero_norm += out.zero_norm_events;
        }

        let x = draw(rng);
        let z = standard_normal_matrix(p, b, rng);
        let out = self.generator_loss_batch(&x, &z, cfg.lambda_rec)?;
        self.gen_adam.step(&mut self.generator, &out.grads);
        if !out.loss.is_finite() || !critic_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss while training pattern {}",
                self.pattern
            )));
        }
        Ok((out.loss, critic_loss, zero_norm))
    }

    /// Trains for at most `max_rounds` rounds, stopping early when the mean
    /// generator loss over the last `plateau_window` rounds moves by less
    /// than `plateau_tol` (relative) from the window before it.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        pool: &DMatrix<f64>,
        cfg: &TrainConfig,
        max_rounds: usize,
        rng: &mut R,
    ) -> Result<TrainStats> {
        let w = cfg.plateau_window;
        let mut history = Vec::with_capacity(max_rounds);
        let mut stats = TrainStats::default();
        for _ in 0..max_rounds {
            let (g, c, zero) = self.train_round(pool, cfg, rng)?;
            history.push(g);
            stats.rounds += 1;
            stats.last_generator_loss = g;
            stats.last_critic_loss = c;
            stats.zero_norm_events += zero;
            if history.len() >= 2 * w {
                let n = history.len();
                let recent = history[n - w..].iter().sum::<f64>() / w as f64;
                let before = history[n - 2 * w..n - w].iter().sum::<f64>() / w as f64;
                if (recent - before).abs() <= cfg.plateau_tol * before.abs() {
                    stats.plateaued = true;
                    break;
                }
            }
        }
        if stats.zero_norm_events > 0 {
            log::debug!(
                "pattern {}: {} interpolates had a zero critic gradient",
                self.pattern,
                stats.zero_norm_events
            );
        }
        Ok(stats)
    }

    /// Replaces the missing cells of `rows` in `data` (`n x p`) with fresh
    /// draws. Observed cells are never written.
    pub fn impute_rows<R: Rng + ?Sized>(
        &self,
        data: &mut DMatrix<f64>,
        rows: &[usize],
        rng: &mut R,
    ) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let x = data.select_rows(rows).transpose();
        let z = standard_normal_matrix(self.dim(), rows.len(), rng);
        let raw = self.raw_output(&x, &z)?;
        for (b, &i) in rows.iter().enumerate() {
            for (j, &m) in self.mask.iter().enumerate() {
                if !m {
                    data[(i, j)] = raw[(j, b)];
                }
            }
        }
        Ok(())
    }

    /// Networks plus a pattern descriptor (index, `p`, observed columns).
    /// Optimizer moments are not saved.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{GAN_MAGIC} {GAN_VERSION}");
        let _ = writeln!(out, "pattern {}", self.pattern);
        let _ = writeln!(out, "p {}", self.dim());
        out.push_str("obs");
        for (j, &m) in self.mask.iter().enumerate() {
            if m {
                let _ = write!(out, " {j}");
            }
        }
        out.push('\n');
        out.push_str("generator\n");
        write_mlp(&mut out, &self.generator);
        out.push_str("critic\n");
        write_mlp(&mut out, &self.critic);
        out
    }

    pub fn from_checkpoint(text: &str, cfg: &TrainConfig) -> Result<Self> {
        let mut cur = LineCursor::new(text);
        let header = cur.expect(GAN_MAGIC)?;
        let version: u32 = cur.parse(header.first().copied().unwrap_or(""))?;
        if version != GAN_VERSION {
            return Err(cur.error(format!("unsupported checkpoint version {version}")));
        }
        let t = cur.expect("pattern")?;
        let pattern: usize = cur.parse(t.first().copied().unwrap_or(""))?;
        let t = cur.expect("p")?;
        let p: usize = cur.parse(t.first().copied().unwrap_or(""))?;
        let obs = cur.expect("obs")?;
        let mut mask = vec![false; p];
        for tok in obs {
            let j: usize = cur.parse(tok)?;
            if j >= p {
                return Err(cur.error(format!("observed column {j} out of range")));
            }
            mask[j] = true;
        }
        cur.expect("generator")?;
        let generator = read_mlp(&mut cur)?;
        cur.expect("critic")?;
        let critic = read_mlp(&mut cur)?;
        if generator.input_dim() != p || generator.output_dim() != p || critic.input_dim() != p || critic.output_dim() != 1 {
            return Err(cur.error("network shapes do not match the pattern dimension"));
        }
        Ok(Self::from_networks(pattern, mask, generator, critic, cfg))
    }
}

/// Single-row form of the two-step generator.
pub fn generator_impute(gan: &PatternGan, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let p = gan.dim();
    for (len, ctx) in [(x.len(), "generator row"), (z.len(), "generator noise")] {
        if len != p {
            return Err(Error::Dimension {
                context: ctx,
                expected: p,
                actual: len,
            });
        }
    }
    let out = gan.impute_batch(
        &DMatrix::from_column_slice(p, 1, x),
        &DMatrix::from_column_slice(p, 1, z),
    )?;
    Ok(out.as_slice().to_vec())
}
