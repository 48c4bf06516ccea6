//! Empirical distance covariance, variance and correlation.
//!
//! The estimator is the sum `T1 + T2 - T3` of pairwise and triple-wise
//! U-statistic terms built from the Euclidean distance matrices
//! `a_ij = |x_i - x_j|` and `b_ij = |y_i - y_j|`:
//!
//! * `T1 = C(n,2)^-1 * sum_{i<j} a_ij b_ij`
//! * `T2 = [C(n,2)^-1 * sum_{i<j} a_ij] * [C(n,2)^-1 * sum_{i<j} b_ij]`
//! * `T3 = (3 C(n,3))^-1 * sum_{i<j<k} (six cross products)`
//!
//! The six-term triple sum equals `sum_i a_i. b_i. - sum_{i!=j} a_ij b_ij`
//! (row sums `a_i.`), so the fast path is a single O(n^2) pass that never
//! stores the distance matrices. [`dcov_n_bruteforce`] evaluates the
//! literal triple sum and is kept as the reference for the fast path.

use crate::{ensure_finite, DataMatrix, Error, Result};

/// dVar values below this (after clamping at zero) mark a degenerate sample.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Row-major point cloud: `n` points of dimension `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn from_rows(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension(
                "points must have at least one coordinate".into(),
            ));
        }
        if data.len() != n * dim {
            return Err(Error::Dimension(format!(
                "expected {} values for {n} points of dimension {dim}, got {}",
                n * dim,
                data.len()
            )));
        }
        Ok(PointSet { n, dim, data })
    }

    pub fn from_matrix(x: &DataMatrix) -> Self {
        let (n, dim) = x.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(x.row(i).iter());
        }
        PointSet { n, dim, data }
    }

    /// Selected columns of `x`, in the given order.
    pub fn from_columns(x: &DataMatrix, cols: &[usize]) -> Self {
        let n = x.nrows();
        let mut data = Vec::with_capacity(n * cols.len());
        for i in 0..n {
            data.extend(cols.iter().map(|&c| x[(i, c)]));
        }
        PointSet {
            n,
            dim: cols.len(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn dist(&self, i: usize, j: usize) -> f64 {
        if self.dim == 1 {
            return (self.data[i] - self.data[j]).abs();
        }
        let (a, b) = (self.row(i), self.row(j));
        a.iter()
            .zip(b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Two samples sharing the same observations (rows).
#[derive(Debug, Clone)]
pub struct PairSample {
    x: PointSet,
    y: PointSet,
}

impl PairSample {
    pub fn new(x: &DataMatrix, y: &DataMatrix) -> Result<Self> {
        ensure_finite(x, "x")?;
        ensure_finite(y, "y")?;
        Self::from_points(PointSet::from_matrix(x), PointSet::from_matrix(y))
    }

    pub fn from_points(x: PointSet, y: PointSet) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "x has {} rows but y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 3 {
            return Err(Error::Dimension(format!(
                "distance covariance needs at least 3 observations, got {}",
                x.len()
            )));
        }
        if x.as_slice()
            .iter()
            .chain(y.as_slice())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Validation("non-finite entry in sample".into()));
        }
        Ok(PairSample { x, y })
    }

    pub fn x(&self) -> &PointSet {
        &self.x
    }

    pub fn y(&self) -> &PointSet {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Unclamped estimator values, kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMoments {
    pub dcov: f64,
    pub dvar_x: f64,
    pub dvar_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DependenceStats {
    /// dCov clamped at zero.
    pub dcov: f64,
    /// dVar of x clamped at zero.
    pub dvar_x: f64,
    /// dVar of y clamped at zero.
    pub dvar_y: f64,
    /// Distance correlation in `[0, 1]`; zero when either side is degenerate.
    pub dcor: f64,
    pub degenerate_x: bool,
    pub degenerate_y: bool,
    pub raw: RawMoments,
}

impl DependenceStats {
    /// `raw.dcov / sqrt(raw.dvar_x * raw.dvar_y)` without any clamping; NaN
    /// when a raw dVar is not positive.
    pub fn raw_dcor(&self) -> f64 {
        let denom = self.raw.dvar_x * self.raw.dvar_y;
        if denom > 0.0 {
            self.raw.dcov / denom.sqrt()
        } else {
            f64::NAN
        }
    }
}

/// Accumulated sums of one O(n^2) pass. Pair sums run over `i < j`.
#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    n: usize,
    ab: f64,
    aa: f64,
    bb: f64,
    a: f64,
    b: f64,
    rows_ab: f64,
    rows_aa: f64,
    rows_bb: f64,
}

fn pair_sums(x: &PointSet, y: &PointSet) -> PairSums {
    let n = x.len();
    let mut row_a = vec![0.0; n];
    let mut row_b = vec![0.0; n];
    let mut s = PairSums {
        n,
        ..PairSums::default()
    };
    for i in 0..n {
        let mut ra = 0.0;
        let mut rb = 0.0;
        let mut ab = 0.0;
        let mut aa = 0.0;
        let mut bb = 0.0;
        for j in (i + 1)..n {
            let a = x.dist(i, j);
            let b = y.dist(i, j);
            ra += a;
            rb += b;
            ab += a * b;
            aa += a * a;
            bb += b * b;
            row_a[j] += a;
            row_b[j] += b;
        }
        row_a[i] += ra;
        row_b[i] += rb;
        s.a += ra;
        s.b += rb;
        s.ab += ab;
        s.aa += aa;
        s.bb += bb;
    }
    for (ra, rb) in row_a.iter().zip(&row_b) {
        s.rows_ab += ra * rb;
        s.rows_aa += ra * ra;
        s.rows_bb += rb * rb;
    }
    s
}

fn combine(n: usize, pair_prod: f64, sum_a: f64, sum_b: f64, rows_prod: f64) -> f64 {
    let nf = n as f64;
    let pairs = nf * (nf - 1.0) / 2.0;
    let triples = pairs * (nf - 2.0) / 3.0;
    let t1 = pair_prod / pairs;
    let t2 = (sum_a / pairs) * (sum_b / pairs);
    let six = rows_prod - 2.0 * pair_prod;
    let t3 = six / (3.0 * triples);
    t1 + t2 - t3
}

impl PairSums {
    fn dcov(&self) -> f64 {
        combine(self.n, self.ab, self.a, self.b, self.rows_ab)
    }

    fn dvar_x(&self) -> f64 {
        combine(self.n, self.aa, self.a, self.a, self.rows_aa)
    }

    fn dvar_y(&self) -> f64 {
        combine(self.n, self.bb, self.b, self.b, self.rows_bb)
    }
}

/// Raw (unclamped) empirical distance covariance.
pub fn dcov_n(sample: &PairSample) -> f64 {
    pair_sums(&sample.x, &sample.y).dcov()
}

/// Empirical distance variance of a single sample.
pub fn dvar_n(x: &PointSet) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::Dimension(format!(
            "distance variance needs at least 3 observations, got {}",
            x.len()
        )));
    }
    Ok(pair_sums(x, x).dvar_x())
}

pub fn dcor_n(sample: &PairSample) -> DependenceStats {
    let sums = pair_sums(&sample.x, &sample.y);
    stats_from_raw(RawMoments {
        dcov: sums.dcov(),
        dvar_x: sums.dvar_x(),
        dvar_y: sums.dvar_y(),
    })
}

fn stats_from_raw(raw: RawMoments) -> DependenceStats {
    let dcov = raw.dcov.max(0.0);
    let dvar_x = raw.dvar_x.max(0.0);
    let dvar_y = raw.dvar_y.max(0.0);
    let degenerate_x = dvar_x < DEGENERACY_TOL;
    let degenerate_y = dvar_y < DEGENERACY_TOL;
    let dcor = if degenerate_x || degenerate_y {
        0.0
    } else {
        (dcov / (dvar_x.sqrt() * dvar_y.sqrt())).clamp(0.0, 1.0)
    };
    DependenceStats {
        dcov,
        dvar_x,
        dvar_y,
        dcor,
        degenerate_x,
        degenerate_y,
        raw,
    }
}

/// Literal evaluation of `T1 + T2 - T3` by explicit pair and triple sums.
///
/// O(n^3); meant as the reference for [`dcov_n`] on small samples.
pub fn dcov_n_bruteforce(sample: &PairSample) -> f64 {
    let (x, y) = (&sample.x, &sample.y);
    let n = x.len();
    let nf = n as f64;
    let pairs = nf * (nf - 1.0) / 2.0;
    let triples = nf * (nf - 1.0) * (nf - 2.0) / 6.0;

    let mut t1 = 0.0;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            t1 += x.dist(i, j) * y.dist(i, j);
            sum_a += x.dist(i, j);
            sum_b += y.dist(i, j);
        }
    }
    t1 /= pairs;
    let t2 = (sum_a / pairs) * (sum_b / pairs);

    let mut t3 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let (xij, xik, xjk) = (x.dist(i, j), x.dist(i, k), x.dist(j, k));
                let (yij, yik, yjk) = (y.dist(i, j), y.dist(i, k), y.dist(j, k));
                t3 += xij * yik + xik * yij + xij * yjk + xjk * yij + xik * yjk + xjk * yik;
            }
        }
    }
    t3 /= 3.0 * triples;
    t1 + t2 - t3
}
