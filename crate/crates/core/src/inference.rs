//! Downstream analysis: least squares on each completed dataset, Rubin's
//! rules across imputations, and Monte-Carlo summary metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Least-squares fit with an intercept in position 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_variance: f64,
    pub df: usize,
}

impl OlsFit {
    /// Estimate and sampling variance of predictor `j` (0-based, intercept excluded).
    pub fn coefficient(&self, j: usize) -> (f64, f64) {
        (self.coefficients[j + 1], self.std_errors[j + 1].powi(2))
    }
}

const RANK_TOL: f64 = 1e-10;

/// Fits `y ~ 1 + design` by Householder QR.
///
/// Rank is decided by a column-pivoted QR; when deficient, the error names
/// the first predictor (0-based) that lies in the span of the intercept
/// and the predictors before it.
pub fn ols_fit(design: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (n, d) = design.shape();
    if y.len() != n {
        return Err(Error::Dimension {
            context: "response length",
            expected: n,
            actual: y.len(),
        });
    }
    if n <= d + 1 {
        return Err(Error::TooFewRows {
            rows: n,
            required: d + 2,
        });
    }
    let mut x = DMatrix::from_element(n, d + 1, 1.0);
    x.columns_mut(1, d).copy_from(design);
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("regression inputs must be finite".into()));
    }

    let pivoted = x.clone().col_piv_qr();
    let r_piv = pivoted.r();
    let lead = r_piv[(0, 0)].abs();
    let rank = (0..=d).filter(|&i| r_piv[(i, i)].abs() > RANK_TOL * lead).count();

    let qr = x.clone().qr();
    let r = qr.r();
    if rank <= d {
        let dependent = (0..=d)
            .find(|&j| r[(j, j)].abs() <= RANK_TOL * x.column(j).norm().max(f64::MIN_POSITIVE))
            .unwrap_or(rank);
        return Err(Error::RankDeficient {
            column: dependent.saturating_sub(1),
        });
    }

    let yv = DVector::from_column_slice(y);
    let qty = qr.q().tr_mul(&yv);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numeric("singular triangular factor".into()))?;
    let resid = &yv - &x * &beta;
    let df = n - (d + 1);
    let sigma2 = resid.norm_squared() / df as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(d + 1, d + 1))
        .ok_or_else(|| Error::Numeric("singular triangular factor".into()))?;
    // (X'X)^-1 = R^-1 R^-T; its diagonal is the squared row norms of R^-1.
    let std_errors = (0..=d)
        .map(|j| (sigma2 * r_inv.row(j).norm_squared()).sqrt())
        .collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        std_errors,
        residual_variance: sigma2,
        df,
    })
}

/// Rubin-pooled scalar estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub estimate: f64,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    pub se: f64,
    /// Degrees of freedom; infinite when the between variance is zero.
    pub df: f64,
    pub ci95: (f64, f64),
    pub imputations: usize,
}

impl PooledEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.ci95.0 <= value && value <= self.ci95.1
    }

    /// Wraps a single fit (no imputation uncertainty) using its own t quantile.
    pub fn from_single_fit(estimate: f64, variance: f64, df: f64) -> Self {
        let se = variance.sqrt();
        let half = t_quantile_975(df) * se;
        Self {
            estimate,
            within: variance,
            between: 0.0,
            total: variance,
            se,
            df,
            ci95: (estimate - half, estimate + half),
            imputations: 1,
        }
    }
}

/// 97.5% quantile of Student's t, or of the standard normal for infinite `df`.
pub fn t_quantile_975(df: f64) -> f64 {
    if df.is_infinite() {
        Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975)
    } else {
        StudentsT::new(0.0, 1.0, df)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975)
    }
}

/// Rubin's rules with the classic large-sample degrees of freedom.
pub fn rubin_pool(estimates: &[f64], variances: &[f64]) -> Result<PooledEstimate> {
    let m = estimates.len();
    if variances.len() != m {
        return Err(Error::Dimension {
            context: "pooling inputs",
            expected: m,
            actual: variances.len(),
        });
    }
    if m < 2 {
        return Err(Error::TooFewImputations(m));
    }
    let mf = m as f64;
    let q_bar = estimates.iter().sum::<f64>() / mf;
    let within = variances.iter().sum::<f64>() / mf;
    let between = estimates.iter().map(|q| (q - q_bar).powi(2)).sum::<f64>() / (mf - 1.0);
    let inflated = (1.0 + 1.0 / mf) * between;
    let total = within + inflated;
    let df = if between > 0.0 {
        (mf - 1.0) * (1.0 + within / inflated).powi(2)
    } else {
        f64::INFINITY
    };
    let se = total.sqrt();
    let half = t_quantile_975(df) * se;
    Ok(PooledEstimate {
        estimate: q_bar,
        within,
        between,
        total,
        se,
        df,
        ci95: (q_bar - half, q_bar + half),
        imputations: m,
    })
}

/// Mean squared error over originally missing cells, averaged over the
/// completed matrices. `None` when nothing was missing.
pub fn imputation_mse(imputed: &[DMatrix<f64>], truth: &DMatrix<f64>, observed: &[bool]) -> Option<f64> {
    let p = truth.ncols();
    let missing: Vec<(usize, usize)> = (0..truth.nrows())
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .filter(|&(i, j)| !observed[i * p + j])
        .collect();
    if missing.is_empty() || imputed.is_empty() {
        return None;
    }
    let per = imputed.iter().map(|m| {
        missing
            .iter()
            .map(|&(i, j)| (m[(i, j)] - truth[(i, j)]).powi(2))
            .sum::<f64>()
            / missing.len() as f64
    });
    Some(per.sum::<f64>() / imputed.len() as f64)
}

/// What one Monte-Carlo replicate contributes to the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pooled: PooledEstimate,
    pub imp_mse: Option<f64>,
    pub seconds_per_imputation: Option<f64>,
}

impl RunSummary {
    pub fn new(
        pooled: PooledEstimate,
        imputed: &[DMatrix<f64>],
        truth: &DMatrix<f64>,
        observed: &[bool],
        seconds_per_imputation: Option<f64>,
    ) -> Self {
        Self {
            imp_mse: imputation_mse(imputed, truth, observed),
            pooled,
            seconds_per_imputation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seconds_per_imputation: Option<f64>,
    pub imp_mse: Option<f64>,
    /// Relative bias, or absolute bias when `absolute_bias` is set.
    pub rel_bias: f64,
    pub absolute_bias: bool,
    pub coverage_rate: f64,
    pub mean_se: f64,
    /// Sample SD of the pooled estimates; `None` with a single replicate.
    pub sd_across_mc: Option<f64>,
    pub replicates: usize,
    /// Some replicate had a zero standard error, so its interval is a point.
    pub degenerate_se: bool,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn compute_metrics(runs: &[RunSummary], beta_true: f64) -> Result<MetricsReport> {
    if runs.is_empty() {
        return Err(Error::Data("no Monte-Carlo runs to summarize".into()));
    }
    let r = runs.len() as f64;
    let mean_est = runs.iter().map(|s| s.pooled.estimate).sum::<f64>() / r;
    let absolute_bias = beta_true == 0.0;
    let rel_bias = if absolute_bias {
        mean_est - beta_true
    } else {
        (mean_est - beta_true) / beta_true
    };
    let covered = runs.iter().filter(|s| s.pooled.contains(beta_true)).count();
    let sd_across_mc = (runs.len() > 1).then(|| {
        (runs
            .iter()
            .map(|s| (s.pooled.estimate - mean_est).powi(2))
            .sum::<f64>()
            / (r - 1.0))
            .sqrt()
    });
    Ok(MetricsReport {
        seconds_per_imputation: mean(runs.iter().filter_map(|s| s.seconds_per_imputation)),
        imp_mse: mean(runs.iter().filter_map(|s| s.imp_mse)),
        rel_bias,
        absolute_bias,
        coverage_rate: covered as f64 / r,
        mean_se: runs.iter().map(|s| s.pooled.se).sum::<f64>() / r,
        sd_across_mc,
        replicates: runs.len(),
        degenerate_se: runs.iter().any(|s| s.pooled.se == 0.0),
    })
}

impl MetricsReport {
    pub const CSV_HEADER: [&'static str; 6] = ["Time(s)", "Imp MSE", "Rel Bias", "CR", "SE", "SD"];

    pub fn csv_fields(&self) -> [String; 6] {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), |x| x.to_string());
        [
            opt(self.seconds_per_imputation),
            opt(self.imp_mse),
            self.rel_bias.to_string(),
            self.coverage_rate.to_string(),
            self.mean_se.to_string(),
            opt(self.sd_across_mc),
        ]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        w.write_record(self.csv_fields())?;
        w.flush()?;
        Ok(())
    }
}
