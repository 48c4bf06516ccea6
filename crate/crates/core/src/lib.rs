//! Robust independent component analysis.
//!
//! The estimator whitens the observations with the Minimum Covariance
//! Determinant scatter, then searches for the orthogonal separating matrix
//! that minimizes the distance correlation between bowl-transformed recovered
//! sources. The separating matrix is parametrized by Givens angles and the
//! angle blocks are estimated one component at a time.
//!
//! Module map:
//!
//! * [`distcorr`]: empirical distance covariance / correlation.
//! * [`transforms`]: biloop and bowl transforms, robust standardization.
//! * [`robustcov`]: sample covariance, FastMCD and whitening.
//! * [`rotation`]: Givens parametrization of orthogonal matrices.
//! * [`optimizer`]: bound-constrained derivative-free minimization.
//! * [`ica`]: the robust estimator and the dCovICA baseline.
//! * [`evalsim`]: source catalogue, contamination, Amari error, harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distcorr;
pub mod error;
pub mod evalsim;
pub mod ica;
pub mod optimizer;
pub mod par;
pub mod robustcov;
pub mod rotation;
pub mod transforms;

pub use error::{Error, Result};

/// n x d observation matrix, one observation per row.
pub type DataMatrix = nalgebra::DMatrix<f64>;

pub(crate) fn ensure_finite(x: &DataMatrix, what: &str) -> Result<()> {
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % x.nrows(), pos / x.nrows());
        return Err(Error::Validation(format!(
            "{what}: non-finite entry at row {r}, column {c}"
        )));
    }
    Ok(())
}
