//! Experiment orchestration: per-replicate imputation, analysis and pooling,
//! Monte-Carlo aggregation and report files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{colmean_impute, complete_case_fit};
use crate::error::{Error, Result};
use crate::gan::{impute_migan2, multiple_impute_migan1, TrainConfig};
use crate::inference::{compute_metrics, ols_fit, rubin_pool, MetricsReport, OlsFit, PooledEstimate, RunSummary};
use crate::io::read_csv;
use crate::missing_patterns::{partition_patterns, IncompleteMatrix};
use crate::synthetic::{generate, SyntheticSpec};

/// Environment variable holding the worker count for parallel replicates.
pub const THREADS_ENV: &str = "MIGAN_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Migan1,
    Migan2,
    Colmean,
    CompleteCase,
    CompleteData,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Migan1 => "migan1",
            Method::Migan2 => "migan2",
            Method::Colmean => "colmean",
            Method::CompleteCase => "complete-case",
            Method::CompleteData => "complete-data",
        }
    }

    /// Whether the method produces completed matrices.
    pub fn imputes(self) -> bool {
        matches!(self, Method::Migan1 | Method::Migan2 | Method::Colmean)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }
}

/// Runs `method` on `data`; truth is never consulted.
pub fn impute(method: Method, data: &IncompleteMatrix, cfg: &TrainConfig) -> Result<Vec<DMatrix<f64>>> {
    match method {
        Method::Migan1 => Ok(multiple_impute_migan1(data, &partition_patterns(data), cfg)?.imputations),
        Method::Migan2 => Ok(impute_migan2(data, cfg)?.imputations),
        Method::Colmean => Ok(vec![colmean_impute(data)?]),
        Method::CompleteCase | Method::CompleteData => Err(Error::Config(format!("{} does not impute", method.name()))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Fresh simulated data per replicate, seeded `seed + replicate`.
    Synthetic(SyntheticSpec),
    /// A fixed incomplete dataset and its complete counterpart.
    Csv {
        data: PathBuf,
        truth: PathBuf,
        #[serde(default = "default_true")]
        header: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub method: Method,
    #[serde(default)]
    pub train: TrainConfig,
    pub mc_replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// 1-based predictor columns; defaults to the synthetic spec's.
    #[serde(default)]
    pub predictors: Option<Vec<usize>>,
    /// True coefficients; defaults to the synthetic spec's.
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    /// Position within `predictors` of the coefficient being evaluated.
    #[serde(default)]
    pub target: usize,
    #[serde(default)]
    pub parallel: bool,
    /// Excluded from the config hash.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_replicates == 0 {
            return Err(Error::Config("mc_replicates must be >= 1".into()));
        }
        if matches!(self.method, Method::Migan1 | Method::Migan2) {
            self.train.validate()?;
        }
        if let Scenario::Synthetic(spec) = &self.scenario {
            spec.validate()?;
        }
        let predictors = self.predictors()?;
        let beta = self.beta()?;
        if predictors.len() != beta.len() || predictors.is_empty() {
            return Err(Error::Config("predictors and beta must be non-empty and of equal length".into()));
        }
        if predictors.contains(&0) {
            return Err(Error::Config("predictor columns are 1-based".into()));
        }
        if self.target >= predictors.len() {
            return Err(Error::Config(format!("target {} out of range", self.target)));
        }
        Ok(())
    }

    pub fn predictors(&self) -> Result<Vec<usize>> {
        match (&self.predictors, &self.scenario) {
            (Some(q), _) => Ok(q.clone()),
            (None, Scenario::Synthetic(spec)) => Ok(spec.predictors.clone()),
            (None, Scenario::Csv { .. }) => Err(Error::Config("csv scenarios need explicit predictors".into())),
        }
    }

    pub fn beta(&self) -> Result<Vec<f64>> {
        match (&self.beta, &self.scenario) {
            (Some(b), _) => Ok(b.clone()),
            (None, Scenario::Synthetic(spec)) => Ok(spec.beta.clone()),
            (None, Scenario::Csv { .. }) => Err(Error::Config("csv scenarios need explicit beta".into())),
        }
    }

    /// SHA-256 of the canonical JSON form (output directory excluded).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Fits `y ~ predictors` on every matrix and pools coefficient `target`.
/// Columns are 0-based; a single matrix is reported without pooling.
pub fn analyze(imputations: &[DMatrix<f64>], predictors: &[usize], response: usize, target: usize) -> Result<PooledEstimate> {
    let fits = imputations
        .iter()
        .map(|m| ols_fit(&m.select_columns(predictors), m.column(response).as_slice()))
        .collect::<Result<Vec<OlsFit>>>()?;
    pool_fits(&fits, target)
}

fn pool_fits(fits: &[OlsFit], target: usize) -> Result<PooledEstimate> {
    match fits {
        [] => Err(Error::TooFewImputations(0)),
        [fit] => {
            let (est, var) = fit.coefficient(target);
            Ok(PooledEstimate::from_single_fit(est, var, fit.df as f64))
        }
        _ => {
            let (est, var): (Vec<f64>, Vec<f64>) = fits.iter().map(|f| f.coefficient(target)).unzip();
            rubin_pool(&est, &var)
        }
    }
}

/// One Monte-Carlo replicate as written to `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replicate: usize,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub method: Method,
    /// `None` on success.
    pub error: Option<String>,
    pub pooled: Option<PooledEstimate>,
    pub imp_mse: Option<f64>,
    pub seconds_per_imputation: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub runs: Vec<RunRecord>,
    pub metrics: MetricsReport,
    pub failed: usize,
}

struct Replicate {
    data: IncompleteMatrix,
    truth: DMatrix<f64>,
}

fn load_replicate(cfg: &ExperimentConfig, seed: u64) -> Result<Replicate> {
    match &cfg.scenario {
        Scenario::Synthetic(spec) => {
            let ds = generate(&SyntheticSpec { seed, ..spec.clone() })?;
            Ok(Replicate {
                data: ds.data,
                truth: ds.truth,
            })
        }
        Scenario::Csv { data, truth, header } => {
            let data = read_csv(data, *header)?.data;
            let truth = read_csv(truth, *header)?.data;
            if !truth.is_complete() || truth.values().shape() != data.values().shape() || !data.agrees_with(truth.values()) {
                return Err(Error::Data("truth must be complete and agree with the observed data".into()));
            }
            Ok(Replicate {
                data,
                truth: truth.values().clone(),
            })
        }
    }
}

fn run_replicate(cfg: &ExperimentConfig, replicate: usize) -> Result<RunSummary> {
    let seed = cfg.seed.wrapping_add(replicate as u64);
    let Replicate { data, truth } = load_replicate(cfg, seed)?;
    let p = data.ncols();
    let predictors: Vec<usize> = cfg.predictors()?.iter().map(|q| q - 1).collect();
    if let Some(&bad) = predictors.iter().find(|&&q| q + 1 >= p) {
        return Err(Error::Config(format!("predictor column {} out of range", bad + 1)));
    }
    let response = p - 1;

    if !cfg.method.imputes() {
        let fit = match cfg.method {
            Method::CompleteCase => complete_case_fit(&data, &predictors, response)?,
            _ => ols_fit(&truth.select_columns(&predictors), truth.column(response).as_slice())?,
        };
        return Ok(RunSummary {
            pooled: pool_fits(&[fit], cfg.target)?,
            imp_mse: None,
            seconds_per_imputation: None,
        });
    }

    let train = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let start = Instant::now();
    let imputations = impute(cfg.method, &data, &train)?;
    let seconds = start.elapsed().as_secs_f64() / imputations.len() as f64;
    let pooled = analyze(&imputations, &predictors, response, cfg.target)?;
    Ok(RunSummary::new(pooled, &imputations, &truth, data.mask(), Some(seconds)))
}

fn worker_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

/// Runs every replicate and aggregates the successful ones.
///
/// A failing replicate is logged and counted; the experiment fails only
/// when no replicate succeeds.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let beta = cfg.beta()?[cfg.target];
    let hash = cfg.hash();
    let outcomes: Vec<Result<RunSummary>> = if cfg.parallel {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(worker_threads()?)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| (0..cfg.mc_replicates).into_par_iter().map(|r| run_replicate(cfg, r)).collect())
    } else {
        (0..cfg.mc_replicates).map(|r| run_replicate(cfg, r)).collect()
    };

    let mut runs = Vec::with_capacity(outcomes.len());
    let mut summaries = Vec::new();
    let mut last_error = None;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        let mut record = RunRecord {
            replicate: r,
            seed: cfg.seed.wrapping_add(r as u64),
            config_hash: hash.clone(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            method: cfg.method,
            error: None,
            pooled: None,
            imp_mse: None,
            seconds_per_imputation: None,
        };
        match outcome {
            Ok(summary) => {
                record.pooled = Some(summary.pooled.clone());
                record.imp_mse = summary.imp_mse;
                record.seconds_per_imputation = summary.seconds_per_imputation;
                summaries.push(summary);
            }
            Err(e) => {
                log::error!("replicate {r} failed: {e}");
                record.error = Some(e.to_string());
                last_error = Some(e);
            }
        }
        runs.push(record);
    }
    let failed = runs.len() - summaries.len();
    if summaries.is_empty() {
        return Err(last_error.unwrap_or_else(|| Error::Numeric("no replicate succeeded".into())));
    }
    if failed > 0 {
        log::warn!("{failed} of {} replicates failed; metrics cover the rest", runs.len());
    }
    let metrics = compute_metrics(&summaries, beta)?;
    if metrics.degenerate_se {
        log::warn!("some replicate has a zero standard error; coverage is degenerate");
    }
    Ok(ExperimentResult {
        config_hash: hash,
        runs,
        metrics,
        failed,
    })
}

pub const REPORT_HEADER: [&str; 10] = [
    "Time(s)",
    "Imp MSE",
    "Rel Bias",
    "CR",
    "SE",
    "SD",
    "Method",
    "Replicates",
    "Failed",
    "Config Hash",
];

/// Writes `metrics.csv`, `runs.jsonl` and `provenance.json` into `dir`.
pub fn write_reports(cfg: &ExperimentConfig, result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    w.write_record(REPORT_HEADER)?;
    let mut row = result.metrics.csv_fields().to_vec();
    row.extend([
        cfg.method.name().to_owned(),
        result.runs.len().to_string(),
        result.failed.to_string(),
        result.config_hash.clone(),
    ]);
    w.write_record(&row)?;
    w.flush()?;

    let mut runs = fs::File::create(dir.join("runs.jsonl"))?;
    for record in &result.runs {
        writeln!(runs, "{}", serde_json::to_string(record)?)?;
    }

    let provenance = serde_json::json!({
        "config": cfg,
        "config_hash": result.config_hash,
        "version": env!("CARGO_PKG_VERSION"),
        "replicates": result.runs.len(),
        "failed": result.failed,
        "absolute_bias": result.metrics.absolute_bias,
        "degenerate_se": result.metrics.degenerate_se,
    });
    fs::write(dir.join("provenance.json"), serde_json::to_string_pretty(&provenance)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colmean_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "scenario": {"synthetic": {"n": 120, "p": 51, "predictors": [42, 44, 46]}},
                "method": "colmean",
                "mc_replicates": 2,
                "seed": 9
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Migan1, Method::Migan2, Method::Colmean, Method::CompleteCase, Method::CompleteData] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("mice".parse::<Method>().is_err());
    }

    #[test]
    fn colmean_runs_are_reproducible() {
        let cfg = colmean_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.runs.len(), 2);
        assert_eq!(a.failed, 0);
        let strip = |r: &ExperimentResult| -> Vec<RunRecord> {
            r.runs
                .iter()
                .cloned()
                .map(|mut x| {
                    x.seconds_per_imputation = None;
                    x
                })
                .collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.metrics.imp_mse.unwrap() > 0.0);
    }

    #[test]
    fn parallel_matches_sequential() {
        let seq = colmean_config();
        let par = ExperimentConfig {
            parallel: true,
            ..seq.clone()
        };
        let a = run_experiment(&seq).unwrap();
        let b = run_experiment(&par).unwrap();
        assert_eq!(a.metrics.rel_bias, b.metrics.rel_bias);
        assert_eq!(a.metrics.mean_se, b.metrics.mean_se);
    }

    #[test]
    fn noiseless_complete_data_is_unbiased_and_degenerate() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "scenario": {"synthetic": {"n": 60, "p": 51, "predictors": [42, 44, 46], "sigma1": 0.0}},
                "method": "complete-data",
                "mc_replicates": 2
            }"#,
        )
        .unwrap();
        let r = run_experiment(&cfg).unwrap();
        assert!(r.metrics.rel_bias.abs() < 1e-8);
        assert!(r.metrics.mean_se < 1e-8);
    }

    #[test]
    fn complete_case_differs_from_complete_data() {
        let mut cfg = colmean_config();
        cfg.mc_replicates = 1;
        cfg.method = Method::CompleteCase;
        let cc = run_experiment(&cfg).unwrap();
        cfg.method = Method::CompleteData;
        let full = run_experiment(&cfg).unwrap();
        let est = |r: &ExperimentResult| r.runs[0].pooled.as_ref().unwrap().estimate;
        assert_ne!(est(&cc), est(&full));
    }

    #[test]
    fn failing_replicates_are_counted() {
        // 40 rows leave too few complete cases for a three-predictor fit in
        // some replicates but not all
        let cfg = ExperimentConfig::from_json(
            r#"{
                "scenario": {"synthetic": {"n": 40, "p": 51, "predictors": [42, 44, 46]}},
                "method": "complete-case",
                "mc_replicates": 20
            }"#,
        )
        .unwrap();
        match run_experiment(&cfg) {
            Ok(r) => {
                assert_eq!(r.runs.len(), 20);
                assert_eq!(r.failed, r.runs.iter().filter(|x| x.error.is_some()).count());
                assert!(r.failed > 0);
            }
            Err(e) => assert!(matches!(e, Error::TooFewRows { .. })),
        }
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = colmean_config();
        let b = ExperimentConfig {
            output_dir: Some("elsewhere".into()),
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { seed: 10, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            r#"{"scenario": {"synthetic": {}}, "method": "colmean", "mc_replicates": 0}"#,
            r#"{"scenario": {"synthetic": {"p": 50}}, "method": "colmean", "mc_replicates": 1}"#,
            r#"{"scenario": {"synthetic": {}}, "method": "colmean", "mc_replicates": 1, "target": 3}"#,
            r#"{"scenario": {"synthetic": {}}, "method": "migan2", "mc_replicates": 1, "train": {"thinning": 0}}"#,
            r#"{"scenario": {"csv": {"data": "a.csv", "truth": "b.csv"}}, "method": "colmean", "mc_replicates": 1}"#,
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))), "{text}");
        }
        assert!(matches!(ExperimentConfig::from_json("{"), Err(Error::Json(_))));
    }

    #[test]
    fn analyze_pools_multiple_and_wraps_single() {
        let m = DMatrix::from_fn(8, 2, |i, j| if j == 0 { i as f64 } else { 2.0 * i as f64 + ((i * 3) % 5) as f64 });
        let single = analyze(&[m.clone()], &[0], 1, 0).unwrap();
        assert_eq!(single.imputations, 1);
        let pooled = analyze(&[m.clone(), m], &[0], 1, 0).unwrap();
        assert_eq!(pooled.between, 0.0);
        assert!((pooled.estimate - single.estimate).abs() < 1e-12);
    }
}
