//! Reference methods: column-mean fill and complete-case regression.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::inference::{ols_fit, OlsFit};
use crate::missing_patterns::IncompleteMatrix;

/// Replaces each missing cell with the mean of its column's observed values.
pub fn colmean_impute(data: &IncompleteMatrix) -> Result<DMatrix<f64>> {
    let (n, p) = (data.nrows(), data.ncols());
    let mut out = data.values().clone();
    for j in 0..p {
        let observed: Vec<f64> = (0..n).filter_map(|i| data.get(i, j)).collect();
        if observed.len() == n {
            continue;
        }
        if observed.is_empty() {
            return Err(Error::EmptyColumn { column: j });
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for i in (0..n).filter(|&i| !data.is_observed(i, j)) {
            out[(i, j)] = mean;
        }
    }
    Ok(out)
}

/// OLS of column `response` on `predictors` using only fully observed rows.
pub fn complete_case_fit(data: &IncompleteMatrix, predictors: &[usize], response: usize) -> Result<OlsFit> {
    let p = data.ncols();
    if let Some(&bad) = predictors.iter().chain([&response]).find(|&&j| j >= p) {
        return Err(Error::Config(format!("column {bad} out of range for {p} columns")));
    }
    let rows: Vec<usize> = (0..data.nrows())
        .filter(|&i| data.mask_row(i).iter().all(|&o| o))
        .collect();
    let required = predictors.len() + 2;
    if rows.len() < required {
        return Err(Error::TooFewRows {
            rows: rows.len(),
            required,
        });
    }
    let design = DMatrix::from_fn(rows.len(), predictors.len(), |r, c| data.values()[(rows[r], predictors[c])]);
    let y: Vec<f64> = rows.iter().map(|&i| data.values()[(i, response)]).collect();
    ols_fit(&design, &y)
}
