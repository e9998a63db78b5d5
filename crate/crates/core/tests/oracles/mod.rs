//! Straight-line reference implementations used to check the library.
//!
//! Each function is written from the defining formula with no shared code
//! and no attempt at speed: direct DFT, explicit triple loops, exact
//! rational arithmetic.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num::{BigInt, BigRational, One, ToPrimitive, Zero};

pub struct MfccParams {
    pub sample_rate: f64,
    pub frame_len: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub floor: f64,
}

impl Default for MfccParams {
    fn default() -> Self {
        MfccParams {
            sample_rate: 16000.0,
            frame_len: 512,
            hop: 160,
            n_mels: 40,
            n_mfcc: 20,
            fmin: 0.0,
            fmax: 8000.0,
            floor: 1e-10,
        }
    }
}

/// MFCC matrix as `n_mfcc` rows of `T` values.
pub fn mfcc_reference(x: &[f64], p: &MfccParams) -> Vec<Vec<f64>> {
    let n = x.len() as i64;
    let pad = (p.frame_len / 2) as i64;
    let t_count = 1 + (x.len() - 1) / p.hop;

    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv_mel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let step = (mel(p.fmax) - mel(p.fmin)) / (p.n_mels + 1) as f64;
    let edge = |i: usize| inv_mel(mel(p.fmin) + step * i as f64);
    let n_bins = p.frame_len / 2 + 1;

    let mut out = vec![vec![0.0; t_count]; p.n_mfcc];
    for t in 0..t_count {
        let mut frame = vec![0.0; p.frame_len];
        for (j, slot) in frame.iter_mut().enumerate() {
            let mut i = t as i64 * p.hop as i64 - pad + j as i64;
            // mirror about the end samples until inside
            loop {
                if n == 1 {
                    i = 0;
                    break;
                } else if i < 0 {
                    i = -i;
                } else if i >= n {
                    i = 2 * (n - 1) - i;
                } else {
                    break;
                }
            }
            let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / p.frame_len as f64).cos();
            *slot = x[i as usize] * w;
        }

        let mut power = vec![0.0; n_bins];
        for (k, pk) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in frame.iter().enumerate() {
                let angle = -2.0 * PI * (k * j % p.frame_len) as f64 / p.frame_len as f64;
                re += v * angle.cos();
                im += v * angle.sin();
            }
            *pk = re * re + im * im;
        }

        let mut log_mel = vec![0.0; p.n_mels];
        for (m, lm) in log_mel.iter_mut().enumerate() {
            let (a, b, c) = (edge(m), edge(m + 1), edge(m + 2));
            let mut e = 0.0;
            for (k, pk) in power.iter().enumerate() {
                let f = k as f64 * p.sample_rate / p.frame_len as f64;
                let w = if f > a && f <= b {
                    (f - a) / (b - a)
                } else if f > b && f < c {
                    (c - f) / (c - b)
                } else {
                    0.0
                };
                e += w * pk;
            }
            *lm = if e > p.floor { e.ln() } else { p.floor.ln() };
        }

        let nm = p.n_mels as f64;
        for (q, row) in out.iter_mut().enumerate() {
            let scale = if q == 0 { (1.0 / nm).sqrt() } else { (2.0 / nm).sqrt() };
            let mut s = 0.0;
            for (m, v) in log_mel.iter().enumerate() {
                s += v * (PI * q as f64 * (m as f64 + 0.5) / nm).cos();
            }
            row[t] = scale * s;
        }
    }
    out
}

/// Same-length dilated convolution by the definition
/// `y[o,t] = b[o] + Σ_i Σ_k w[o,i,k] · x[i, t + (k - k/2)·d]`, zero outside.
/// Accumulates in `f32` in the order bias, input channel, tap.
pub fn conv_reference(x: &[Vec<f32>], w: &[Vec<Vec<f32>>], bias: &[f32], d: usize) -> Vec<Vec<f32>> {
    let frames = x[0].len() as i64;
    let mut y = vec![vec![0.0f32; frames as usize]; w.len()];
    for o in 0..w.len() {
        for t in 0..frames {
            let mut acc = bias[o];
            for i in 0..x.len() {
                let k_len = w[o][i].len() as i64;
                for k in 0..k_len {
                    let src = t + (k - k_len / 2) * d as i64;
                    if src >= 0 && src < frames {
                        acc += w[o][i][k as usize] * x[i][src as usize];
                    }
                }
            }
            y[o][t as usize] = acc;
        }
    }
    y
}

/// `(mantissa, exponent)` with `v = mantissa · 2^exponent` exactly.
fn decode(v: f64) -> (BigInt, i64) {
    let (m, e, sign) = num::Float::integer_decode(v);
    (BigInt::from(m) * BigInt::from(sign), e as i64)
}

/// Least squares `[intercept, β…]` from the normal equations solved
/// exactly. All inputs are scaled to integers by a common power of two,
/// the Gram system is reduced by fraction-free (Bareiss) elimination, and
/// the triangular system is back-substituted in rationals. Requires
/// `[1 X]` to have full column rank.
pub fn ols_exact(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let decoded: Vec<Vec<(BigInt, i64)>> = x
        .iter()
        .zip(y)
        .map(|(r, &t)| {
            std::iter::once(1.0)
                .chain(r.iter().copied())
                .chain([t])
                .map(decode)
                .collect()
        })
        .collect();
    let e_min = decoded.iter().flatten().map(|(_, e)| *e).min().unwrap();
    let ints: Vec<Vec<BigInt>> = decoded
        .into_iter()
        .map(|r| r.into_iter().map(|(m, e)| m << (e - e_min) as usize).collect())
        .collect();
    // augmented [AᵀA | Aᵀy], A = [1 X] scaled
    let mut m = vec![vec![BigInt::zero(); p + 1]; p];
    for r in &ints {
        for a in 0..p {
            for b in 0..=p {
                m[a][b] += &r[a] * &r[b];
            }
        }
    }
    let mut prev = BigInt::one();
    for col in 0..p {
        let pivot = (col..p).find(|&r| !m[r][col].is_zero()).expect("rank deficient design");
        m.swap(col, pivot);
        for r in col + 1..p {
            for c in col + 1..=p {
                let v = (&m[col][col] * &m[r][c] - &m[r][col] * &m[col][c]) / &prev;
                m[r][c] = v;
            }
            m[r][col] = BigInt::zero();
        }
        prev = m[col][col].clone();
    }
    let mut beta = vec![BigRational::zero(); p];
    for i in (0..p).rev() {
        let mut s = BigRational::from_integer(m[i][p].clone());
        for j in i + 1..p {
            s -= BigRational::from_integer(m[i][j].clone()) * &beta[j];
        }
        beta[i] = s / BigRational::from_integer(m[i][i].clone());
    }
    beta.iter().map(to_f64).collect()
}

fn to_f64(v: &BigRational) -> f64 {
    // keep the top 64 bits of numerator and denominator, then rescale
    let (n, d) = (v.numer(), v.denom());
    let ns = (n.bits() as i64 - 64).max(0);
    let ds = (d.bits() as i64 - 64).max(0);
    let nf = (n >> ns as usize).to_f64().unwrap();
    let df = (d >> ds as usize).to_f64().unwrap();
    nf / df * 2f64.powi((ns - ds) as i32)
}

/// Minimum-norm least squares `[intercept, β…]` through the SVD
/// pseudo-inverse of `[1 X]`.
pub fn ols_pinv(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let p = x[0].len() + 1;
    let a = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let pinv = a.pseudo_inverse(1e-12).expect("svd converged");
    let b = pinv * DMatrix::from_column_slice(n, 1, y);
    b.iter().copied().collect()
}

/// Two-pass sample Pearson correlation.
pub fn pearson_reference(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
