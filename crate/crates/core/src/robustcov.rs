//! Classical and Minimum Covariance Determinant scatter estimation, and
//! whitening `Z = (X - center) * Sigma^{-1/2}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par::{map_indexed, Execution};
use crate::transforms::{chi2_cdf, chi2_quantile};
use crate::{ensure_finite, DataMatrix, Error, Result};

/// Scatter matrices whose smallest/largest eigenvalue ratio falls below this
/// are refused by [`whiten`].
pub const CONDITION_THRESHOLD: f64 = 1e-10;

pub fn column_means(x: &DataMatrix) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Unbiased (n - 1 denominator) covariance matrix.
pub fn sample_covariance(x: &DataMatrix) -> Result<DMatrix<f64>> {
    if x.nrows() < 2 {
        return Err(Error::Dimension(format!(
            "covariance needs at least 2 observations, got {}",
            x.nrows()
        )));
    }
    ensure_finite(x, "covariance input")?;
    let mean = column_means(x);
    Ok(covariance_about(x, &mean))
}

fn covariance_about(x: &DataMatrix, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let mut cov = centered.tr_mul(&centered) / (x.nrows() as f64 - 1.0);
    symmetrize(&mut cov);
    cov
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McdConfig {
    /// Subset size as a fraction of n; 0.75 gives a 25% breakdown value.
    pub h_fraction: f64,
    /// Number of random elemental starts.
    pub starts: usize,
    /// Concentration steps applied to every start before screening.
    pub initial_steps: usize,
    /// Starts iterated to convergence after screening.
    pub finalists: usize,
    pub max_steps: usize,
    /// Relative log-determinant change that counts as converged.
    pub tolerance: f64,
    /// Refit on all points within the 0.975 chi-square cutoff of the raw fit.
    #[serde(default)]
    pub reweight: bool,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for McdConfig {
    fn default() -> Self {
        McdConfig {
            h_fraction: 0.75,
            starts: 500,
            initial_steps: 2,
            finalists: 10,
            max_steps: 100,
            tolerance: 1e-9,
            reweight: false,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustCovResult {
    pub location: DVector<f64>,
    /// Consistency-corrected scatter.
    pub scatter: DMatrix<f64>,
    /// Covariance of the best subset before the consistency correction.
    pub raw_scatter: DMatrix<f64>,
    /// Sorted indices of the best h-subset.
    pub subset: Vec<usize>,
    pub raw_determinant: f64,
    pub consistency_factor: f64,
    /// Log-determinants along the winning start's concentration path.
    pub log_det_trace: Vec<f64>,
    /// Points kept by the reweighting step, when it ran.
    pub reweighted_count: Option<usize>,
}

/// Mean, covariance, Cholesky factor and log-determinant of one subset.
struct SubsetFit {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

fn fit_subset(x: &DataMatrix, idx: &[usize]) -> Option<SubsetFit> {
    let d = x.ncols();
    let m = idx.len() as f64;
    let mut mean = DVector::zeros(d);
    for &i in idx {
        mean += x.row(i).transpose();
    }
    mean /= m;
    let mut cov = DMatrix::zeros(d, d);
    for &i in idx {
        let r = x.row(i).transpose() - &mean;
        cov.ger(1.0, &r, &r, 1.0);
    }
    cov /= m - 1.0;
    symmetrize(&mut cov);
    let chol = Cholesky::new(cov.clone())?;
    let diag = chol.l_dirty().diagonal();
    if diag.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let log_det = 2.0 * diag.iter().map(|v| v.ln()).sum::<f64>();
    // relative singularity guard
    let scale: f64 = cov.diagonal().iter().map(|v| v.ln()).sum();
    if !log_det.is_finite() || log_det - scale < -30.0 {
        return None;
    }
    Some(SubsetFit {
        mean,
        cov,
        chol,
        log_det,
    })
}

fn mahalanobis_sq(x: &DataMatrix, fit: &SubsetFit) -> Vec<f64> {
    let d = x.ncols();
    let l = fit.chol.l_dirty();
    let mut r = vec![0.0; d];
    (0..x.nrows())
        .map(|i| {
            // forward substitution L y = x_i - mean, distance = |y|^2
            for a in 0..d {
                let mut s = x[(i, a)] - fit.mean[a];
                for b in 0..a {
                    s -= l[(a, b)] * r[b];
                }
                r[a] = s / l[(a, a)];
            }
            r.iter().map(|v| v * v).sum()
        })
        .collect()
}

fn h_smallest(dist: &[f64], h: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order.truncate(h);
    order.sort_unstable();
    order
}

/// One concentration step: refit on the h points closest under `fit`.
fn concentrate(x: &DataMatrix, fit: &SubsetFit, h: usize) -> Option<(Vec<usize>, SubsetFit)> {
    let subset = h_smallest(&mahalanobis_sq(x, fit), h);
    let next = fit_subset(x, &subset)?;
    Some((subset, next))
}

struct Candidate {
    start: usize,
    subset: Vec<usize>,
    fit: SubsetFit,
    trace: Vec<f64>,
}

fn iterate(x: &DataMatrix, mut cand: Candidate, h: usize, steps: usize, tol: f64) -> Candidate {
    for _ in 0..steps {
        let Some((subset, next)) = concentrate(x, &cand.fit, h) else {
            break;
        };
        let prev = cand.fit.log_det;
        let unchanged = subset == cand.subset;
        // C-step never increases the determinant; guard against round-off.
        if next.log_det > prev {
            break;
        }
        cand.trace.push(next.log_det);
        cand.subset = subset;
        cand.fit = next;
        if unchanged || (prev - cand.fit.log_det).abs() <= tol * prev.abs().max(1.0) {
            break;
        }
    }
    cand
}

fn elemental_start(x: &DataMatrix, h: usize, seed: u64) -> Option<(Vec<usize>, SubsetFit)> {
    let (n, d) = x.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample_indices(&mut rng, n, d + 1).into_vec();
    loop {
        if let Some(fit) = fit_subset(x, &idx) {
            return Some((idx, fit));
        }
        if idx.len() >= h {
            return None;
        }
        // singular elemental set: grow it by one random point
        loop {
            let j = rng.random_range(0..n);
            if !idx.contains(&j) {
                idx.push(j);
                break;
            }
        }
    }
}

/// FastMCD: random elemental starts refined by concentration steps.
pub fn fast_mcd(x: &DataMatrix, config: &McdConfig, seed: u64) -> Result<RobustCovResult> {
    let (n, d) = x.shape();
    ensure_finite(x, "MCD input")?;
    if d == 0 {
        return Err(Error::Dimension("MCD needs at least one column".into()));
    }
    if n < 2 * (d + 1) {
        return Err(Error::Dimension(format!(
            "MCD needs n >= 2(d+1) = {}, got n = {n}",
            2 * (d + 1)
        )));
    }
    if !(config.h_fraction > 0.0 && config.h_fraction <= 1.0) {
        return Err(Error::Validation(format!(
            "h_fraction must lie in (0, 1], got {}",
            config.h_fraction
        )));
    }
    let h = ((config.h_fraction * n as f64).floor() as usize).min(n);
    if h < d + 1 || 2 * h < n {
        return Err(Error::Validation(format!(
            "subset size h = {h} must satisfy max(d+1, n/2) <= h <= n"
        )));
    }
    if config.starts == 0 {
        return Err(Error::Validation("MCD needs at least one start".into()));
    }

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..config.starts).map(|_| master.random()).collect();

    let screened: Vec<Option<Candidate>> = map_indexed(config.starts, config.execution, |s| {
        let (subset, fit) = elemental_start(x, h, seeds[s])?;
        let cand = Candidate {
            start: s,
            trace: vec![fit.log_det],
            subset,
            fit,
        };
        // the elemental subset has d+1 points; the first step brings it to h
        let (subset, fit) = concentrate(x, &cand.fit, h)?;
        let cand = Candidate {
            start: s,
            trace: vec![fit.log_det],
            subset,
            fit,
        };
        Some(iterate(
            x,
            cand,
            h,
            config.initial_steps.saturating_sub(1),
            0.0,
        ))
    });

    let mut pool: Vec<Candidate> = screened.into_iter().flatten().collect();
    if pool.is_empty() {
        return Err(Error::ExactFit);
    }
    pool.sort_by(|a, b| {
        a.fit
            .log_det
            .total_cmp(&b.fit.log_det)
            .then(a.start.cmp(&b.start))
    });
    pool.truncate(config.finalists.max(1));

    let finalists: Vec<Candidate> = pool
        .into_iter()
        .map(|c| iterate(x, c, h, config.max_steps, config.tolerance))
        .collect();
    let best = finalists
        .into_iter()
        .min_by(|a, b| {
            a.fit
                .log_det
                .total_cmp(&b.fit.log_det)
                .then(a.start.cmp(&b.start))
        })
        .expect("non-empty pool");

    let factor = consistency_factor(h, n, d)?;
    let mut result = RobustCovResult {
        location: best.fit.mean.clone(),
        scatter: &best.fit.cov * factor,
        raw_scatter: best.fit.cov.clone(),
        subset: best.subset,
        raw_determinant: best.fit.log_det.exp(),
        consistency_factor: factor,
        log_det_trace: best.trace,
        reweighted_count: None,
    };
    if config.reweight {
        reweight(x, &best.fit, factor, &mut result)?;
    }
    Ok(result)
}

/// Share of clean Gaussian points kept by the reweighting cutoff.
pub const REWEIGHT_QUANTILE: f64 = 0.975;

fn reweight(
    x: &DataMatrix,
    raw: &SubsetFit,
    factor: f64,
    result: &mut RobustCovResult,
) -> Result<()> {
    let d = x.ncols();
    let cutoff = chi2_quantile(REWEIGHT_QUANTILE, d)?;
    let dist = mahalanobis_sq(x, raw);
    let kept: Vec<usize> = (0..x.nrows())
        .filter(|&i| dist[i] / factor <= cutoff)
        .collect();
    // too few survivors to refit: keep the raw estimate
    let Some(fit) = (kept.len() > d + 1).then(|| fit_subset(x, &kept)).flatten() else {
        return Ok(());
    };
    let c = REWEIGHT_QUANTILE / chi2_cdf(cutoff, d + 2);
    result.location = fit.mean;
    result.scatter = fit.cov * c;
    result.reweighted_count = Some(kept.len());
    Ok(())
}

/// `(h/n) / P(chi2_{d+2} <= chi2_{d, h/n})`; one when `h = n`.
pub fn consistency_factor(h: usize, n: usize, d: usize) -> Result<f64> {
    let alpha = h as f64 / n as f64;
    if alpha >= 1.0 {
        return Ok(1.0);
    }
    let q = chi2_quantile(alpha, d)?;
    Ok(alpha / chi2_cdf(q, d + 2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedData {
    pub z: DataMatrix,
    /// Symmetric inverse square root of the scatter.
    pub whitening_matrix: DMatrix<f64>,
    pub center: DVector<f64>,
}

/// Symmetric inverse square root via the eigendecomposition.
pub fn inverse_sqrt(scatter: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = scatter.nrows();
    if scatter.ncols() != d || d == 0 {
        return Err(Error::Dimension(
            "scatter must be a non-empty square matrix".into(),
        ));
    }
    if scatter.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("scatter has non-finite entries".into()));
    }
    let mut sym = scatter.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let ratio = if max > 0.0 {
        min / max
    } else {
        f64::NEG_INFINITY
    };
    if !(ratio > CONDITION_THRESHOLD) {
        return Err(Error::Conditioning {
            ratio,
            threshold: CONDITION_THRESHOLD,
        });
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let v = &eig.eigenvectors;
    let mut w = v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose();
    symmetrize(&mut w);
    Ok(w)
}

pub fn whiten(
    x: &DataMatrix,
    center: &DVector<f64>,
    scatter: &DMatrix<f64>,
) -> Result<WhitenedData> {
    if center.len() != x.ncols() || scatter.nrows() != x.ncols() {
        return Err(Error::Dimension(format!(
            "data has {} columns, center {} and scatter {}x{}",
            x.ncols(),
            center.len(),
            scatter.nrows(),
            scatter.ncols()
        )));
    }
    let w = inverse_sqrt(scatter)?;
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-center[j]);
    }
    Ok(WhitenedData {
        z: centered * &w,
        whitening_matrix: w,
        center: center.clone(),
    })
}

/// Sample-mean / sample-covariance whitening.
pub fn whiten_classical(x: &DataMatrix) -> Result<WhitenedData> {
    let cov = sample_covariance(x)?;
    whiten(x, &column_means(x), &cov)
}

/// MCD-location / MCD-scatter whitening.
pub fn whiten_mcd(
    x: &DataMatrix,
    config: &McdConfig,
    seed: u64,
) -> Result<(WhitenedData, RobustCovResult)> {
    let mcd = fast_mcd(x, config, seed)?;
    let white = whiten(x, &mcd.location, &mcd.scatter)?;
    Ok((white, mcd))
}
