//! Givens-angle parametrization of orthogonal separating matrices.
//!
//! `U(theta) = Q^{d-1} * ... * Q^1` with `Q^k = Q_{k,d} * ... * Q_{k,k+1}`.
//! Row `k` of `U` depends only on the blocks `Q^1 .. Q^k`, which is what
//! allows the angle blocks to be estimated one component at a time.
//!
//! Indices are zero-based here: block `k` holds the angles `theta_{k,j}` for
//! `k < j < d`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Largest allowed `|U U^T - I|` entry for an [`OrthogonalMatrix`].
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMatrix(DMatrix<f64>);

impl OrthogonalMatrix {
    pub fn identity(d: usize) -> Self {
        OrthogonalMatrix(DMatrix::identity(d, d))
    }

    /// Wraps `u` after checking `|U U^T - I|_max <= tol`.
    pub fn new(u: DMatrix<f64>, tol: f64) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::Dimension("orthogonal matrix must be square".into()));
        }
        let err = orthogonality_error(&u);
        if !(err <= tol) {
            return Err(Error::Validation(format!(
                "matrix is not orthogonal: max |UU^T - I| = {err:.3e}"
            )));
        }
        Ok(OrthogonalMatrix(u))
    }

    pub(crate) fn from_trusted(u: DMatrix<f64>) -> Self {
        debug_assert!(orthogonality_error(&u) <= 1e-9);
        OrthogonalMatrix(u)
    }

    /// Permutation matrix with `P[k, perm[k]] = 1`, so that `(S P^T)[:, k] = S[:, perm[k]]`.
    pub fn permutation(perm: &[usize]) -> Result<Self> {
        let d = perm.len();
        let mut seen = vec![false; d];
        let mut p = DMatrix::zeros(d, d);
        for (k, &j) in perm.iter().enumerate() {
            if j >= d || seen[j] {
                return Err(Error::Validation(format!("{perm:?} is not a permutation")));
            }
            seen[j] = true;
            p[(k, j)] = 1.0;
        }
        Ok(OrthogonalMatrix(p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn compose(&self, rhs: &OrthogonalMatrix) -> OrthogonalMatrix {
        OrthogonalMatrix(&self.0 * &rhs.0)
    }

    pub fn transpose(&self) -> OrthogonalMatrix {
        OrthogonalMatrix(self.0.transpose())
    }
}

pub fn orthogonality_error(u: &DMatrix<f64>) -> f64 {
    let d = u.nrows();
    (u * u.transpose() - DMatrix::<f64>::identity(d, d))
        .abs()
        .max()
}

/// Doubly-indexed Givens angles, stored block by block:
/// `(0,1), (0,2), .., (0,d-1), (1,2), .., (d-2,d-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleVector {
    d: usize,
    theta: Vec<f64>,
}

/// Offset of block `k` in the flat storage.
fn block_offset(d: usize, k: usize) -> usize {
    // sum_{i<k} (d - 1 - i)
    k * (2 * d - k - 1) / 2
}

impl AngleVector {
    pub fn zeros(d: usize) -> Self {
        AngleVector {
            d,
            theta: vec![0.0; d * d.saturating_sub(1) / 2],
        }
    }

    pub fn from_flat(d: usize, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != d * d.saturating_sub(1) / 2 {
            return Err(Error::Dimension(format!(
                "d = {d} needs {} angles, got {}",
                d * d.saturating_sub(1) / 2,
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("angles must be finite".into()));
        }
        Ok(AngleVector { d, theta })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    fn index(&self, i: usize, j: usize) -> usize {
        assert!(
            i < j && j < self.d,
            "angle index ({i},{j}) out of range for d = {}",
            self.d
        );
        block_offset(self.d, i) + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.theta[self.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self.index(i, j);
        self.theta[k] = value;
    }

    /// Angles `theta_{k, k+1..d}` of block `k`.
    pub fn block(&self, k: usize) -> &[f64] {
        let start = block_offset(self.d, k);
        &self.theta[start..start + (self.d - k - 1)]
    }

    pub fn set_block(&mut self, k: usize, values: &[f64]) {
        let start = block_offset(self.d, k);
        let len = self.d - k - 1;
        assert_eq!(values.len(), len, "block {k} has {len} angles");
        self.theta[start..start + len].copy_from_slice(values);
    }

    /// Upper end of the legal range of block `k`: 2pi for the first block, pi otherwise.
    pub fn block_period(k: usize) -> f64 {
        if k == 0 {
            2.0 * PI
        } else {
            PI
        }
    }

    /// Whether every angle lies in its half-open legal range.
    pub fn in_range(&self) -> bool {
        (0..self.d.saturating_sub(1)).all(|k| {
            let top = Self::block_period(k);
            self.block(k).iter().all(|&t| (0.0..top).contains(&t))
        })
    }

    /// Reduces every angle into its legal range by periodicity. First-block
    /// angles are reduced mod 2pi, which leaves `compose` unchanged; the
    /// others mod pi, which may flip the signs of two rows of the factor.
    pub fn canonicalize(&self) -> AngleVector {
        let mut out = self.clone();
        for k in 0..self.d.saturating_sub(1) {
            let top = Self::block_period(k);
            let block: Vec<f64> = self.block(k).iter().map(|t| wrap(*t, top)).collect();
            out.set_block(k, &block);
        }
        out
    }
}

fn wrap(t: f64, period: f64) -> f64 {
    let r = t.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Identity with `(i,i) = (j,j) = cos`, `(i,j) = sin`, `(j,i) = -sin`.
pub fn givens(d: usize, i: usize, j: usize, angle: f64) -> Result<OrthogonalMatrix> {
    if !(i < j && j < d) {
        return Err(Error::Validation(format!(
            "Givens indices need i < j < d, got ({i}, {j}) with d = {d}"
        )));
    }
    let mut q = DMatrix::identity(d, d);
    let (s, c) = angle.sin_cos();
    q[(i, i)] = c;
    q[(j, j)] = c;
    q[(i, j)] = s;
    q[(j, i)] = -s;
    Ok(OrthogonalMatrix(q))
}

/// Right-multiplies `m` by the Givens rotation `Q_{i,j}(angle)` in place.
fn apply_givens_right(m: &mut DMatrix<f64>, i: usize, j: usize, angle: f64) {
    let (s, c) = angle.sin_cos();
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = c * a - s * b;
        m[(r, j)] = s * a + c * b;
    }
}

/// `U(theta)`, accumulated left to right in the order
/// `Q_{d-2,d-1} * .. * Q_{0,d-1} * .. * Q_{0,1}`.
pub fn compose(angles: &AngleVector) -> OrthogonalMatrix {
    let d = angles.dim();
    let mut u = DMatrix::identity(d, d);
    for k in (0..d.saturating_sub(1)).rev() {
        for j in ((k + 1)..d).rev() {
            apply_givens_right(&mut u, k, j, angles.get(k, j));
        }
    }
    OrthogonalMatrix(u)
}

/// True iff perturbing any angle block after `k` leaves row `k` of
/// `compose(angles)` unchanged within 1e-14.
pub fn row_dependency_check(angles: &AngleVector, k: usize) -> bool {
    let d = angles.dim();
    if k >= d {
        return false;
    }
    let base = compose(angles);
    for blk in (k + 1)..d.saturating_sub(1) {
        for (idx, _) in angles.block(blk).iter().enumerate() {
            let mut moved = angles.clone();
            let j = blk + 1 + idx;
            moved.set(blk, j, angles.get(blk, j) + 0.7318);
            let u = compose(&moved);
            let diff = (base.matrix().row(k) - u.matrix().row(k)).abs().max();
            if diff > 1e-14 {
                return false;
            }
        }
    }
    true
}
