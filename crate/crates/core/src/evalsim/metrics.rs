use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Upper bound on the condition number of a benchmark mixing matrix.
pub const MAX_MIXING_CONDITION: f64 = 2.0;
const MAX_MIXING_DRAWS: usize = 1_000_000;

/// Amari error of `p`, the product of an estimated unmixing matrix and the
/// true mixing matrix:
///
/// `[sum_i (sum_j |p_ij| / max_k |p_ik| - 1) + sum_j (sum_i |p_ij| / max_k |p_kj| - 1)] / (2d(d-1))`
///
/// Zero exactly for scaled permutation matrices, at most one.
pub fn amari_error(p: &DMatrix<f64>) -> Result<f64> {
    let d = p.nrows();
    if d < 2 || !p.is_square() {
        return Err(Error::Dimension(format!(
            "Amari error needs a square matrix with d >= 2, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let a = p.abs();
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "Amari error of a non-finite matrix".into(),
        ));
    }
    let mut total = 0.0;
    for (i, row) in a.row_iter().enumerate() {
        let m = row.max();
        if !(m > 0.0) {
            return Err(Error::Validation(format!("row {i} is zero")));
        }
        total += row.sum() / m - 1.0;
    }
    for (j, col) in a.column_iter().enumerate() {
        let m = col.max();
        if !(m > 0.0) {
            return Err(Error::Validation(format!("column {j} is zero")));
        }
        total += col.sum() / m - 1.0;
    }
    Ok(total / (2.0 * d as f64 * (d as f64 - 1.0)))
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// A random matrix plus the number of rejected draws before it.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDraw {
    pub matrix: DMatrix<f64>,
    pub draws: usize,
}

/// Standard-normal d x d matrix with condition number in `[1, 2]`, by rejection.
pub fn random_mixing_matrix(d: usize, seed: u64) -> Result<DMatrix<f64>> {
    Ok(random_mixing_draw(d, seed)?.matrix)
}

pub fn random_mixing_draw(d: usize, seed: u64) -> Result<MixingDraw> {
    if d < 2 {
        return Err(Error::Dimension(format!(
            "mixing matrices need d >= 2, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draws in 1..=MAX_MIXING_DRAWS {
        let a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        if condition_number(&a) <= MAX_MIXING_CONDITION {
            return Ok(MixingDraw { matrix: a, draws });
        }
    }
    Err(Error::Generation(format!(
        "no {d}x{d} matrix with condition number <= {MAX_MIXING_CONDITION} in {MAX_MIXING_DRAWS} draws"
    )))
}
