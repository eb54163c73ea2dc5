//! Proximal operators and column projections used by the solver updates.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Entrywise shrinkage `sign(a) * max(|a| - eps, 0)`, the proximal
/// operator of `eps * |.|_1`.
pub fn soft_threshold(a: &Mat, eps: f64) -> Result<Mat> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::argument(format!(
            "soft_threshold needs a non-negative threshold, got {eps}"
        )));
    }
    Ok(a.map(|v| shrink(v, eps)))
}

#[inline]
pub(crate) fn shrink(v: f64, eps: f64) -> f64 {
    v.signum() * (v.abs() - eps).max(0.0)
}

/// Shrinks the singular values of `a` by `tau`, the proximal operator of
/// `tau * ||.||_*`. Output rank never exceeds the input rank.
pub fn singular_value_threshold(a: &Mat, tau: f64) -> Result<Mat> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::argument(format!(
            "singular_value_threshold needs a non-negative threshold, got {tau}"
        )));
    }
    let f = linalg::svd(a)?;
    let kept = f.sigma.iter().take_while(|&&s| s > tau).count();
    if kept == 0 {
        return Ok(Mat::zeros(a.nrows(), a.ncols()));
    }
    let mut us = f.u.columns(0, kept).into_owned();
    for (j, mut col) in us.column_iter_mut().enumerate() {
        col *= f.sigma[j] - tau;
    }
    Ok(us * f.vt.rows(0, kept))
}

/// Shrinks a singular-value vector; used by tests and diagnostics.
pub fn shrink_singular_values(sigma: &DVector<f64>, tau: f64) -> DVector<f64> {
    sigma.map(|s| (s - tau).max(0.0))
}

/// Which set dictionary columns are projected onto after a gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColumnProjection {
    /// Rescale only columns with norm > 1 (the default).
    #[default]
    UnitBall,
    /// Normalize every nonzero column to norm exactly 1.
    UnitSphere,
}

/// Maps every column into the l2 unit ball: columns with norm <= 1 pass
/// through unchanged, longer columns are rescaled to norm exactly 1.
pub fn project_columns_unit_ball(d: &Mat) -> Mat {
    let mut out = d.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 1.0 {
            col /= n;
        }
    }
    out
}

/// Normalizes every nonzero column to norm exactly 1; zero columns stay zero.
pub fn project_columns_unit_sphere(d: &Mat) -> Mat {
    let mut out = d.clone();
    for mut col in out.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    out
}

/// Applies the chosen column projection.
pub fn project_columns(d: &Mat, projection: ColumnProjection) -> Mat {
    match projection {
        ColumnProjection::UnitBall => project_columns_unit_ball(d),
        ColumnProjection::UnitSphere => project_columns_unit_sphere(d),
    }
}
