//! Univariate F-test feature selection and ordinary least squares.
//!
//! Selection scores each column by `F = r² / (1 - r²) · (N - 2)` where `r` is
//! its Pearson correlation with the target, so ranking by `F` is ranking by
//! `|r|`. Regression solves the normal equations of `[1 X] β ≈ y` with a
//! `1e-8` ridge term on the Gram diagonal, which keeps dead (constant)
//! columns from making the system singular. A few refinement sweeps against
//! the unregularized Gram matrix then remove the ridge bias; on a singular
//! system they converge to the minimum-norm solution.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{Dimension, Matrix};
use crate::stats::pearson;

pub const STD_FLOOR: f64 = 1e-12;
pub const RIDGE_JITTER: f64 = 1e-8;
const REFINEMENT_SWEEPS: usize = 3;
const R2_CLAMP: f64 = 1.0 - 1e-12;

/// Per-column standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Result<Scaler> {
        if x.rows == 0 {
            return Err(Error::TooFewSamples { needed: 1, found: 0 });
        }
        let n = x.rows as f64;
        let mut means = vec![0.0; x.cols];
        let mut stds = vec![0.0; x.cols];
        for j in 0..x.cols {
            let col = x.column(j);
            // exact mean for constant columns so they standardize to exact zeros
            let mean = if col.iter().all(|&v| v == col[0]) {
                col[0]
            } else {
                col.iter().sum::<f64>() / n
            };
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            means[j] = mean;
            stds[j] = var.sqrt().max(STD_FLOOR);
        }
        Ok(Scaler { means, stds })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "scaler fitted on {} columns, got {}",
                self.means.len(),
                x.cols
            )));
        }
        let data = x
            .data
            .chunks_exact(x.cols.max(1))
            .flat_map(|row| {
                row.iter()
                    .zip(self.means.iter().zip(&self.stds))
                    .map(|(v, (m, s))| (v - m) / s)
            })
            .collect();
        Matrix::new(data, x.rows, x.cols)
    }
}

/// F statistic of every column of `x` against `y`. Zero-variance columns
/// score 0.
pub fn univariate_f_scores(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let all: Vec<usize> = (0..x.cols).collect();
    univariate_f_scores_for(x, y, &all)
}

/// Scores for `columns` only, in the same order.
pub fn univariate_f_scores_for(x: &Matrix, y: &[f64], columns: &[usize]) -> Result<Vec<f64>> {
    if x.rows < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            found: x.rows,
        });
    }
    if y.len() != x.rows {
        return Err(Error::LengthMismatch {
            left: x.rows,
            right: y.len(),
        });
    }
    let dof = (x.rows - 2) as f64;
    columns
        .iter()
        .map(|&j| match pearson(&x.column(j), y) {
            Ok(r) => {
                let r2 = (r * r).min(R2_CLAMP);
                Ok(r2 / (1.0 - r2) * dof)
            }
            Err(Error::ZeroVariance) => Ok(0.0),
            Err(e) => Err(e),
        })
        .collect()
}

/// Indices of the `k` highest-scoring candidates, sorted ascending. Ties go
/// to the lower index.
pub fn select_top_k(scores: &[f64], k: usize, candidates: &[usize]) -> Result<Vec<usize>> {
    if k > candidates.len() {
        return Err(Error::KTooLarge {
            k,
            available: candidates.len(),
        });
    }
    if let Some(&bad) = candidates.iter().find(|&&j| j >= scores.len()) {
        return Err(Error::DimensionMismatch(format!(
            "candidate {bad} beyond {} scores",
            scores.len()
        )));
    }
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    ranked.truncate(k);
    ranked.sort_unstable();
    ranked.dedup();
    if ranked.len() != k {
        return Err(Error::InvalidConfig("duplicate candidate indices".into()));
    }
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsSolution {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
}

impl OlsSolution {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coeffs.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }
}

/// Lower Cholesky factor of a symmetric positive definite matrix, in place.
fn cholesky(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "Gram matrix not positive definite at pivot {j}"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(a)
}

fn cholesky_solve(l: &[f64], n: usize, mut b: Vec<f64>) -> Vec<f64> {
    let a = l;
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    b
}

/// Least squares fit of `y ≈ intercept + x β`.
pub fn ols_fit(x: &Matrix, y: &[f64]) -> Result<OlsSolution> {
    if x.rows == 0 {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    if y.len() != x.rows {
        return Err(Error::LengthMismatch {
            left: x.rows,
            right: y.len(),
        });
    }
    let p = x.cols + 1;
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut aug = vec![1.0; p];
    for (i, &target) in y.iter().enumerate() {
        aug[1..].copy_from_slice(x.row(i));
        for a in 0..p {
            rhs[a] += aug[a] * target;
            for b in 0..=a {
                gram[a * p + b] += aug[a] * aug[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }
    let mut jittered = gram.clone();
    for a in 0..p {
        jittered[a * p + a] += RIDGE_JITTER;
    }
    let factor = cholesky(jittered, p)?;
    let mut beta = cholesky_solve(&factor, p, rhs.clone());
    for _ in 0..REFINEMENT_SWEEPS {
        let residual: Vec<f64> = (0..p)
            .map(|a| {
                rhs[a]
                    - gram[a * p..(a + 1) * p]
                        .iter()
                        .zip(&beta)
                        .map(|(g, b)| g * b)
                        .sum::<f64>()
            })
            .collect();
        let step = cholesky_solve(&factor, p, residual);
        beta.iter_mut().zip(step).for_each(|(b, d)| *b += d);
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite regression coefficients".into()));
    }
    Ok(OlsSolution {
        intercept: beta[0],
        coeffs: beta[1..].to_vec(),
    })
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Scaler + selected columns + linear map, applied to raw feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    pub selected_indices: Vec<usize>,
    pub scaler: Scaler,
    pub target: Dimension,
}

/// Fits scaler, selection (top `k` of `candidates`) and OLS on training rows.
pub fn fit_model(
    x_raw: &Matrix,
    y: &[f64],
    k: usize,
    candidates: &[usize],
    target: Dimension,
) -> Result<RegressionModel> {
    let scaler = Scaler::fit(x_raw)?;
    let z = scaler.transform(x_raw)?;
    let scores = univariate_f_scores_for(&z, y, candidates)?;
    // scores are indexed by candidate position; map back to feature indices
    let positions: Vec<usize> = (0..candidates.len()).collect();
    let picked = select_top_k(&scores, k, &positions)?;
    let selected: Vec<usize> = {
        let mut s: Vec<usize> = picked.iter().map(|&p| candidates[p]).collect();
        s.sort_unstable();
        s
    };
    let solution = ols_fit(&z.select_columns(&selected), y)?;
    Ok(RegressionModel {
        intercept: solution.intercept,
        coeffs: solution.coeffs,
        selected_indices: selected,
        scaler,
        target,
    })
}

pub fn predict(m: &RegressionModel, x_raw: &Matrix) -> Result<Vec<f64>> {
    if x_raw.cols != m.scaler.means.len() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, got {}",
            m.scaler.means.len(),
            x_raw.cols
        )));
    }
    Ok((0..x_raw.rows)
        .map(|i| {
            let row = x_raw.row(i);
            m.intercept
                + m.selected_indices
                    .iter()
                    .zip(&m.coeffs)
                    .map(|(&j, b)| b * (row[j] - m.scaler.means[j]) / m.scaler.stds[j])
                    .sum::<f64>()
        })
        .collect())
}

/// Audit dump: intercept row, then `index,coefficient,mean,std` per
/// selected feature.
pub fn write_model_csv(m: &RegressionModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "# target={}", m.target).map_err(io)?;
    writeln!(w, "index,coefficient,mean,std").map_err(io)?;
    writeln!(w, "intercept,{:?},,", m.intercept).map_err(io)?;
    for (&j, b) in m.selected_indices.iter().zip(&m.coeffs) {
        writeln!(w, "{j},{b:?},{:?},{:?}", m.scaler.means[j], m.scaler.stds[j]).map_err(io)?;
    }
    w.flush().map_err(io)
}
