//! Small dense vector kernels and helpers used by the Krylov solvers.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `||a - b|| / max(||b||, tiny)`
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(&sub(a, b));
    let s = norm(b);
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

/// Linear combination `sum_i coeffs[i] * basis[i]`.
pub fn combine(basis: &[Vec<f64>], coeffs: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (v, &c) in basis.iter().zip(coeffs) {
        axpy(c, v, &mut out);
    }
    out
}

/// Solves `H y = rhs` for a square upper Hessenberg matrix given column-wise
/// (`cols[k][i] = H[i][k]`, column `k` holding at least `k + 2` entries except
/// possibly the last). Gaussian elimination with pivoting between adjacent rows.
pub fn solve_hessenberg(cols: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let k = rhs.len();
    let mut a = vec![vec![0.0; k]; k];
    for (j, col) in cols.iter().take(k).enumerate() {
        for (i, &v) in col.iter().enumerate().take(k) {
            a[i][j] = v;
        }
    }
    let mut b = rhs.to_vec();
    for i in 0..k.saturating_sub(1) {
        if a[i + 1][i].abs() > a[i][i].abs() {
            a.swap(i, i + 1);
            b.swap(i, i + 1);
        }
        let piv = a[i][i];
        if piv == 0.0 {
            return Err(Error::Breakdown("singular Hessenberg matrix".into()));
        }
        let f = a[i + 1][i] / piv;
        if f != 0.0 {
            for j in i..k {
                a[i + 1][j] -= f * a[i][j];
            }
            b[i + 1] -= f * b[i];
        }
    }
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in i + 1..k {
            s -= a[i][j] * y[j];
        }
        if a[i][i] == 0.0 {
            return Err(Error::Breakdown("singular Hessenberg matrix".into()));
        }
        y[i] = s / a[i][i];
    }
    Ok(y)
}

/// Ratio of the extreme eigenvalues of a symmetric matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}
