//! Semi-supervised low-rank + sparse representation learning over a
//! learned incoherent dictionary.
//!
//! Codes for labeled training images and unlabeled test images are learned
//! jointly by an inexact augmented-Lagrangian solver that splits the data
//! as `Y = D*X + E` with a nuclear-norm + l1 penalty on the codes `X`, an
//! l1 penalty on the error `E`, and a correlation penalty pushing the
//! dictionary `D` toward incoherent (near-orthonormal) atoms. A ridge
//! classifier trained on the code columns of the training images labels
//! the test images.
//!
//! Modules:
//! - [`linalg`]: dense kernels (SVD, SPD solve, norms).
//! - [`prox`]: shrinkage, singular-value thresholding, column projections.
//! - [`solver`]: the alternating-direction solver and its special cases.
//! - [`classifier`]: ridge classifier on learned codes.
//! - [`dataset`]: image ingestion, preprocessing, corruption, splits.
//! - [`experiment`]: benchmark protocols, reports, and file outputs.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod prox;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::Mat;
