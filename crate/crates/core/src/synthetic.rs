//! Simulated blockwise-missing regression data.
//!
//! Features follow a per-row AR(1) recursion and are then reordered so that
//! every fifth column pair lands in the trailing blocks. The response is a
//! sparse linear model and is always observed. Two logistic indicators,
//! driven by the always-observed leading columns and the response, blank
//! the two trailing feature blocks.
//!
//! Column indices in [`SyntheticSpec`] are 1-based feature positions; every
//! other API here is 0-based.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::missing_patterns::IncompleteMatrix;
use crate::rng::{ids, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Total columns including the response; must be 1 mod 5.
    pub p: usize,
    pub rho: f64,
    pub noise_sd: f64,
    /// 1-based feature columns entering the response.
    pub predictors: Vec<usize>,
    pub beta: Vec<f64>,
    pub sigma1: f64,
    /// `(intercept, feature weight, response weight)` for each block's indicator.
    pub mar_coeffs: [[f64; 3]; 2],
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 200,
            p: 251,
            rho: 0.9,
            noise_sd: 0.1,
            predictors: vec![210, 220, 230],
            beta: vec![1.0, 1.0, 1.0],
            sigma1: 1.0,
            mar_coeffs: [[1.0, -2.0, 3.0], [0.0, 2.0, -2.0]],
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Reduced design with 50 features; predictors sit at the same relative
    /// depth inside the first trailing-group region as in the full design.
    pub fn small() -> Self {
        Self {
            p: 51,
            predictors: vec![42, 44, 46],
            ..Self::default()
        }
    }

    pub fn features(&self) -> usize {
        self.p - 1
    }

    /// Number of always-observed leading feature columns.
    pub fn observed_block(&self) -> usize {
        3 * self.features() / 5
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 6 || self.p % 5 != 1 {
            return Err(Error::Config(format!("p = {} must be at least 6 and 1 mod 5", self.p)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.predictors.len() != self.beta.len() || self.predictors.is_empty() {
            return Err(Error::Config("predictors and beta must be non-empty and of equal length".into()));
        }
        if let Some(q) = self.predictors.iter().find(|&&q| q == 0 || q > self.features()) {
            return Err(Error::Config(format!("predictor {q} outside 1..={}", self.features())));
        }
        let finite = [self.rho, self.noise_sd, self.sigma1]
            .iter()
            .chain(self.beta.iter())
            .chain(self.mar_coeffs.iter().flatten())
            .all(|v| v.is_finite());
        if !finite || self.noise_sd < 0.0 || self.sigma1 < 0.0 {
            return Err(Error::Config("spec parameters must be finite with non-negative SDs".into()));
        }
        Ok(())
    }

    /// 0-based predictor columns.
    pub fn predictor_columns(&self) -> Vec<usize> {
        self.predictors.iter().map(|q| q - 1).collect()
    }

    /// The two indicator groups with the feature weight rescaled onto the plain sum.
    pub fn mar_groups(&self) -> Vec<MarGroup> {
        let d = self.features();
        let lead = self.observed_block();
        let scale = 5.0 / (3 * d) as f64;
        let blocks = [lead..4 * d / 5, 4 * d / 5..d];
        blocks
            .into_iter()
            .zip(self.mar_coeffs)
            .map(|(block, [intercept, weight, y_slope])| MarGroup {
                block: block.collect(),
                drivers: (0..lead).collect(),
                intercept,
                slope: weight * scale,
                y_slope,
            })
            .collect()
    }
}

/// Per-row AR(1) features: `a_1 ~ N(0, 1)`, `a_j = rho a_{j-1} + N(0, noise_sd^2)`.
pub fn gen_ar1<R: Rng + ?Sized>(n: usize, d: usize, rho: f64, noise_sd: f64, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut prev: f64 = StandardNormal.sample(rng);
        if d > 0 {
            a[(i, 0)] = prev;
        }
        for j in 1..d {
            let eps: f64 = StandardNormal.sample(rng);
            prev = rho * prev + noise_sd * eps;
            a[(i, j)] = prev;
        }
    }
    a
}

/// 0-based source column for each output column of [`reorder_features`].
pub fn reorder_permutation(d: usize) -> Vec<usize> {
    let keep = (0..d).filter(|j| !matches!((j + 1) % 5, 4 | 0));
    let fours = (0..d).filter(|j| (j + 1) % 5 == 4);
    let fives = (0..d).filter(|j| (j + 1) % 5 == 0);
    keep.chain(fours).chain(fives).collect()
}

pub fn reorder_features(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.select_columns(&reorder_permutation(a.ncols()))
}

/// `y = X[:, q] beta + N(0, sigma1^2)` with 0-based `q`.
pub fn gen_response<R: Rng + ?Sized>(x: &DMatrix<f64>, q: &[usize], beta: &[f64], sigma1: f64, rng: &mut R) -> Result<DVector<f64>> {
    if q.len() != beta.len() {
        return Err(Error::Config("predictor and coefficient counts differ".into()));
    }
    if let Some(&bad) = q.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::Config(format!("predictor column {bad} out of range")));
    }
    Ok(DVector::from_fn(x.nrows(), |i, _| {
        let signal: f64 = q.iter().zip(beta).map(|(&j, b)| b * x[(i, j)]).sum();
        let noise: f64 = StandardNormal.sample(rng);
        signal + sigma1 * noise
    }))
}

/// One logistic indicator: `logit = intercept + slope * sum(drivers) + y_slope * y`.
/// When it fires the `block` columns of that row are blanked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarGroup {
    pub block: Vec<usize>,
    pub drivers: Vec<usize>,
    pub intercept: f64,
    pub slope: f64,
    pub y_slope: f64,
}

impl MarGroup {
    pub fn logit(&self, x: &DMatrix<f64>, y: &DVector<f64>, i: usize) -> f64 {
        let sum: f64 = self.drivers.iter().map(|&j| x[(i, j)]).sum();
        self.intercept + self.slope * sum + self.y_slope * y[i]
    }

    pub fn probability(&self, x: &DMatrix<f64>, y: &DVector<f64>, i: usize) -> f64 {
        sigmoid(self.logit(x, y, i))
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Row-major feature mask plus the per-group indicator draws.
#[derive(Debug, Clone, PartialEq)]
pub struct MarMask {
    pub mask: Vec<bool>,
    pub indicators: Vec<Vec<bool>>,
}

/// Draws each group's indicator per row (groups in order within a row).
pub fn gen_logit_mar<R: Rng + ?Sized>(x: &DMatrix<f64>, y: &DVector<f64>, groups: &[MarGroup], rng: &mut R) -> Result<MarMask> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(Error::Dimension {
            context: "response length",
            expected: n,
            actual: y.len(),
        });
    }
    for (g, group) in groups.iter().enumerate() {
        if let Some(&j) = group.block.iter().chain(&group.drivers).find(|&&j| j >= d) {
            return Err(Error::Config(format!("group {g} references column {j} of {d}")));
        }
        if group.drivers.iter().any(|j| group.block.contains(j)) {
            return Err(Error::Config(format!("group {g} drivers overlap its own block")));
        }
    }
    let mut mask = vec![true; n * d];
    let mut indicators = vec![vec![false; n]; groups.len()];
    for i in 0..n {
        for (g, group) in groups.iter().enumerate() {
            let fired = rng.gen::<f64>() < group.probability(x, y, i);
            indicators[g][i] = fired;
            if fired {
                for &j in &group.block {
                    mask[i * d + j] = false;
                }
            }
        }
    }
    Ok(MarMask { mask, indicators })
}

/// The two-block masker defined by `spec.mar_coeffs`.
pub fn gen_mar_masks<R: Rng + ?Sized>(x: &DMatrix<f64>, y: &DVector<f64>, spec: &SyntheticSpec, rng: &mut R) -> Result<MarMask> {
    spec.validate()?;
    if x.ncols() != spec.features() {
        return Err(Error::Dimension {
            context: "feature columns",
            expected: spec.features(),
            actual: x.ncols(),
        });
    }
    gen_logit_mar(x, y, &spec.mar_groups(), rng)
}

/// Two groups over 700 features: blocks 1..=200 and 201..=400, driven by
/// 401..=500 and 601..=700 respectively, each with weight -3/100 on the sum.
pub fn wide_design_groups() -> Vec<MarGroup> {
    vec![
        MarGroup {
            block: (0..200).collect(),
            drivers: (400..500).collect(),
            intercept: -1.0,
            slope: -0.03,
            y_slope: 3.0,
        },
        MarGroup {
            block: (200..400).collect(),
            drivers: (600..700).collect(),
            intercept: -1.0,
            slope: -0.03,
            y_slope: 2.0,
        },
    ]
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub spec: SyntheticSpec,
    /// Reordered features, `n x (p - 1)`.
    pub features: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Features with the response appended as the last column.
    pub truth: DMatrix<f64>,
    pub data: IncompleteMatrix,
    pub r1: Vec<bool>,
    pub r2: Vec<bool>,
    pub beta_true: Vec<f64>,
}

impl GeneratedDataset {
    /// 0-based predictor columns of `truth` / `data`.
    pub fn predictor_columns(&self) -> Vec<usize> {
        self.spec.predictor_columns()
    }

    pub fn response_column(&self) -> usize {
        self.spec.p - 1
    }
}

/// Features, response and masks from independent streams of `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<GeneratedDataset> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.features());
    let features = reorder_features(&gen_ar1(n, d, spec.rho, spec.noise_sd, &mut stream(spec.seed, ids::FEATURES)));
    let y = gen_response(&features, &spec.predictor_columns(), &spec.beta, spec.sigma1, &mut stream(spec.seed, ids::RESPONSE))?;
    let masks = gen_mar_masks(&features, &y, spec, &mut stream(spec.seed, ids::MASKS))?;

    let mut truth = DMatrix::zeros(n, d + 1);
    truth.columns_mut(0, d).copy_from(&features);
    truth.set_column(d, &y);
    let mut mask = Vec::with_capacity(n * (d + 1));
    for row in masks.mask.chunks(d) {
        mask.extend_from_slice(row);
        mask.push(true);
    }
    let data = IncompleteMatrix::new(truth.clone(), mask)?;
    let mut indicators = masks.indicators.into_iter();
    Ok(GeneratedDataset {
        spec: spec.clone(),
        features,
        y,
        truth,
        data,
        r1: indicators.next().unwrap_or_default(),
        r2: indicators.next().unwrap_or_default(),
        beta_true: spec.beta.clone(),
    })
}
