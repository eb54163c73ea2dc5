//! Ridge-regression linear classifier on learned code columns.
//!
//! Training solves `min ||H - W*X||_F² + eta*||W||_F²` in closed form;
//! prediction takes the row index of the largest score per column.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// One-hot label matrix: `C x n` with exactly one 1 per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    h: Mat,
}

impl LabelMatrix {
    /// Builds the one-hot matrix from class indices in `[0, n_classes)`.
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::argument("need at least one class"));
        }
        let mut h = Mat::zeros(n_classes, labels.len());
        for (j, &c) in labels.iter().enumerate() {
            if c >= n_classes {
                return Err(Error::argument(format!(
                    "label {c} out of range for {n_classes} classes"
                )));
            }
            h[(c, j)] = 1.0;
        }
        Ok(LabelMatrix { h })
    }

    /// Validates an existing matrix: entries in {0, 1}, one 1 per column.
    pub fn from_matrix(h: Mat) -> Result<Self> {
        for j in 0..h.ncols() {
            let mut ones = 0;
            for i in 0..h.nrows() {
                let v = h[(i, j)];
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return Err(Error::argument(format!(
                        "label matrix entry ({i}, {j}) = {v} is not 0 or 1"
                    )));
                }
            }
            if ones != 1 {
                return Err(Error::argument(format!(
                    "label matrix column {j} has {ones} ones, expected exactly 1"
                )));
            }
        }
        Ok(LabelMatrix { h })
    }

    pub fn matrix(&self) -> &Mat {
        &self.h
    }

    pub fn n_classes(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.h.ncols()
    }

    /// Class index of each column.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.h.ncols())
            .map(|j| (0..self.h.nrows()).find(|&i| self.h[(i, j)] == 1.0).unwrap())
            .collect()
    }
}

/// Fitted linear map `W: C x m` with its ridge weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub w: Mat,
    pub eta_ridge: f64,
}

/// Closed-form ridge fit: `W = H*Xᵀ*(X*Xᵀ + eta*I)⁻¹`, computed by a
/// Cholesky solve of the (always SPD for eta > 0) normal equations.
pub fn fit(x_train: &Mat, h: &LabelMatrix, eta_ridge: f64) -> Result<ClassifierModel> {
    if eta_ridge.is_nan() || eta_ridge <= 0.0 {
        return Err(Error::argument(format!(
            "ridge weight must be positive, got {eta_ridge}"
        )));
    }
    if x_train.ncols() != h.n_samples() {
        return Err(Error::argument(format!(
            "{} code columns but {} labels",
            x_train.ncols(),
            h.n_samples()
        )));
    }
    let m = x_train.nrows();
    let lhs = x_train * x_train.transpose() + Mat::identity(m, m) * eta_ridge;
    let rhs = x_train * h.matrix().transpose();
    // Solve (X*Xᵀ + eta*I) Wᵀ = X*Hᵀ; the system matrix is symmetric.
    let wt = linalg::solve_spd(&lhs, &rhs)?;
    Ok(ClassifierModel {
        w: wt.transpose(),
        eta_ridge,
    })
}

/// Predicted class per test column: the row with the largest score in
/// `W * X`. Ties resolve to the lowest class index.
pub fn predict(model: &ClassifierModel, x_test: &Mat) -> Result<Vec<usize>> {
    if model.w.ncols() != x_test.nrows() {
        return Err(Error::argument(format!(
            "model expects {} code rows, got {}",
            model.w.ncols(),
            x_test.nrows()
        )));
    }
    let scores = &model.w * x_test;
    let mut out = Vec::with_capacity(scores.ncols());
    for j in 0..scores.ncols() {
        let mut best = 0;
        for i in 1..scores.nrows() {
            if scores[(i, j)] > scores[(best, j)] {
                best = i;
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Fraction of predictions matching `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / truth.len() as f64
}

impl ClassifierModel {
    /// Writes `W` as plain text: a `"C m"` header line, then one row of
    /// space-separated decimals per class.
    pub fn export(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{} {}", self.w.nrows(), self.w.ncols())?;
        for i in 0..self.w.nrows() {
            let row: Vec<String> = (0..self.w.ncols()).map(|j| self.w[(i, j)].to_string()).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a matrix written by [`ClassifierModel::export`].
    pub fn import_w(path: &Path) -> Result<Mat> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::argument("empty model file"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::argument(format!("bad header '{header}'"))))
            .collect::<Result<_>>()?;
        if dims.len() != 2 {
            return Err(Error::argument(format!("bad header '{header}'")));
        }
        let (c, m) = (dims[0], dims[1]);
        let mut w = Mat::zeros(c, m);
        for i in 0..c {
            let line = lines
                .next()
                .ok_or_else(|| Error::argument(format!("model file ends at row {i}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::argument(format!("bad value '{t}'"))))
                .collect::<Result<_>>()?;
            if vals.len() != m {
                return Err(Error::argument(format!(
                    "row {i} has {} values, expected {m}",
                    vals.len()
                )));
            }
            for (j, v) in vals.into_iter().enumerate() {
                w[(i, j)] = v;
            }
        }
        Ok(w)
    }
}
