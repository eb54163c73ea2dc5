//! Dense matrix kernels shared by all solver updates.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major storage). Every
//! public operation here expects finite entries and returns finite
//! entries; routines that can fail numerically report [`Error::Numerical`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense, column-major, double-precision matrix.
pub type Mat = DMatrix<f64>;

/// Thin SVD factors `A = U * diag(sigma) * Vt`.
///
/// `sigma` is non-negative and sorted non-increasing; `U` is `rows x r`,
/// `Vt` is `r x cols` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Mat,
    pub sigma: DVector<f64>,
    pub vt: Mat,
}

impl SvdFactors {
    /// Reassembles `U * diag(sigma) * Vt`.
    pub fn reconstruct(&self) -> Mat {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.sigma[j];
        }
        us * &self.vt
    }
}

/// Thin SVD with singular values sorted non-increasing.
pub fn svd(a: &Mat) -> Result<SvdFactors> {
    if !is_finite(a) {
        return Err(Error::numerical("svd", "input has non-finite entries"));
    }
    let fact = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| {
            Error::numerical(
                "svd",
                format!("did not converge for a {}x{} matrix", a.nrows(), a.ncols()),
            )
        })?;
    let u = fact.u.expect("u requested");
    let vt = fact.v_t.expect("v_t requested");
    let sigma = fact.singular_values;

    // nalgebra returns descending values; re-sort if an implementation
    // detail ever changes that.
    let sorted = sigma.as_slice().windows(2).all(|w| w[0] >= w[1]);
    if sorted {
        return Ok(SvdFactors { u, sigma, vt });
    }
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let u2 = Mat::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, order[c])]);
    let vt2 = Mat::from_fn(vt.nrows(), vt.ncols(), |r, c| vt[(order[r], c)]);
    let s2 = DVector::from_fn(sigma.len(), |i, _| sigma[order[i]]);
    Ok(SvdFactors {
        u: u2,
        sigma: s2,
        vt: vt2,
    })
}

/// Solves `A * X = B` for symmetric positive definite `A` via Cholesky.
pub fn solve_spd(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.nrows() != a.ncols() {
        return Err(Error::argument(format!(
            "solve_spd needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.nrows() {
        return Err(Error::argument(format!(
            "solve_spd shape mismatch: A is {}x{}, B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::numerical("solve_spd", "matrix is not symmetric"));
            }
        }
    }
    let chol = a.clone().cholesky().ok_or_else(|| {
        Error::numerical("solve_spd", "matrix is not positive definite")
    })?;
    Ok(chol.solve(b))
}

/// Entrywise maximum absolute value (the `inf` norm used by the stopping test).
pub fn inf_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        0.0
    } else {
        a.amax()
    }
}

/// Sum of absolute values of all entries.
pub fn l1_norm(a: &Mat) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Mat) -> Result<f64> {
    if !is_finite(a) {
        return Err(Error::numerical("nuclear_norm", "input has non-finite entries"));
    }
    let sv = a.clone().singular_values();
    Ok(sv.iter().sum())
}

/// True when every entry is finite.
pub fn is_finite(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Largest singular value, estimated by power iteration on `AᵀA`.
///
/// Deterministic: starts from the all-ones vector. Good to a few digits,
/// which is all the dictionary step-size heuristic needs.
pub fn spectral_norm_est(a: &Mat) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..150 {
        let w = a.transpose() * (a * &v);
        let norm = w.norm();
        if norm <= f64::MIN_POSITIVE {
            return 0.0;
        }
        est = norm.sqrt();
        v = w / norm;
    }
    est
}
