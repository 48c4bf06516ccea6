//! Redescending data transforms applied before measuring dependence.
//!
//! * [`bowl`] maps `R^p -> R^{p+1}`; bounded, continuous, one-to-one and
//!   redescending, and equivariant under rotations of its input.
//! * [`biloop`] maps `R -> R^2` with the same four properties; it is used
//!   coordinate-wise after [`robust_standardize`].

mod special;

pub use special::{chi2_cdf, chi2_quantile, ln_gamma, regularized_lower_gamma};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::distcorr::{dcor_n, DependenceStats, PairSample, PointSet};
use crate::{DataMatrix, Error, Result};

/// Quantile level of the bowl scaling constant.
pub const BOWL_QUANTILE: f64 = 0.9975;

/// Normal-consistency factor for the median absolute deviation.
pub const MAD_NORMAL_FACTOR: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BowlParams {
    pub p: usize,
    pub q: f64,
}

impl BowlParams {
    /// Default parameters for `p`-dimensional input, `q = sqrt(chi2_{0.9975, p})`.
    pub fn for_dim(p: usize) -> Result<Self> {
        let q = chi2_quantile(BOWL_QUANTILE, p)?.sqrt();
        Ok(BowlParams { p, q })
    }

    pub fn new(p: usize, q: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::Validation("bowl dimension must be positive".into()));
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Validation(format!(
                "bowl scale must be positive, got {q}"
            )));
        }
        Ok(BowlParams { p, q })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiloopParams {
    pub c: f64,
}

impl Default for BiloopParams {
    fn default() -> Self {
        BiloopParams { c: 4.0 }
    }
}

impl BiloopParams {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Validation(format!(
                "biloop constant must be positive, got {c}"
            )));
        }
        Ok(BiloopParams { c })
    }
}

/// Writes `bowl(x)` into `out` (length `p + 1`). `x` must be finite.
#[inline]
pub fn bowl_into(x: &[f64], q: f64, out: &mut [f64]) {
    let p = x.len();
    debug_assert_eq!(out.len(), p + 1);
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u = (r / q).tanh();
    let w = 1.0 - u;
    let u2 = u * u;
    let scale = 10.0 * u2 * w * w;
    for (o, v) in out[..p].iter_mut().zip(x) {
        *o = scale * v;
    }
    out[p] = 10.0 * u2 * u2 * u2 * w * w;
}

pub fn bowl(x: &[f64], params: &BowlParams) -> Result<Vec<f64>> {
    if x.len() != params.p {
        return Err(Error::Dimension(format!(
            "bowl configured for p = {}, got a vector of length {}",
            params.p,
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("bowl input must be finite".into()));
    }
    let mut out = vec![0.0; x.len() + 1];
    bowl_into(x, params.q, &mut out);
    Ok(out)
}

/// Row-wise bowl transform of a point cloud (dimension `p -> p + 1`).
pub fn bowl_points(points: &PointSet, params: &BowlParams) -> Result<PointSet> {
    let p = points.dim();
    if p != params.p {
        return Err(Error::Dimension(format!(
            "bowl configured for p = {}, points have dimension {p}",
            params.p
        )));
    }
    let n = points.len();
    let mut data = vec![0.0; n * (p + 1)];
    for (i, out) in data.chunks_exact_mut(p + 1).enumerate() {
        bowl_into(points.row(i), params.q, out);
    }
    PointSet::from_rows(n, p + 1, data)
}

/// `(u(x), v(x))` of the biloop transform.
pub fn biloop(x: f64, params: &BiloopParams) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::Validation("biloop input must be finite".into()));
    }
    let c = params.c;
    let t = 2.0 * PI * (x / c).tanh();
    let u = if x >= 0.0 {
        c * (1.0 + (t + PI).cos())
    } else {
        -c * (1.0 + (t - PI).cos())
    };
    Ok((u, t.sin()))
}

/// How the median absolute deviation is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MadScale {
    /// Plain median of absolute deviations.
    #[default]
    Raw,
    /// Multiplied by 1.4826 (consistent for the normal standard deviation).
    Normal,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// `(x - median) / MAD` per entry.
pub fn robust_standardize(column: &[f64], scale: MadScale) -> Result<Vec<f64>> {
    if column.is_empty() {
        return Err(Error::Dimension(
            "cannot standardize an empty column".into(),
        ));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("column must be finite".into()));
    }
    let med = median(column);
    let dev: Vec<f64> = column.iter().map(|v| (v - med).abs()).collect();
    let mut mad = median(&dev);
    if scale == MadScale::Normal {
        mad *= MAD_NORMAL_FACTOR;
    }
    if !(mad > 0.0) {
        return Err(Error::DegenerateScale);
    }
    Ok(column.iter().map(|v| (v - med) / mad).collect())
}

/// Distance correlation after bowl-transforming both samples, with the
/// default scaling constant for each dimension.
pub fn bowl_dcor(x: &DataMatrix, y: &DataMatrix) -> Result<f64> {
    Ok(bowl_dcor_stats(x, y)?.dcor)
}

pub fn bowl_dcor_stats(x: &DataMatrix, y: &DataMatrix) -> Result<DependenceStats> {
    let pair = PairSample::new(x, y)?;
    bowl_dcor_points(pair.x(), pair.y())
}

pub fn bowl_dcor_points(x: &PointSet, y: &PointSet) -> Result<DependenceStats> {
    let bx = bowl_points(x, &BowlParams::for_dim(x.dim())?)?;
    let by = bowl_points(y, &BowlParams::for_dim(y.dim())?)?;
    Ok(dcor_n(&PairSample::from_points(bx, by)?))
}

/// Robustly standardizes every column, then applies the biloop transform
/// coordinate-wise (dimension `p -> 2p`).
pub fn biloop_points(x: &DataMatrix, params: &BiloopParams, scale: MadScale) -> Result<PointSet> {
    let (n, p) = x.shape();
    let mut data = vec![0.0; n * 2 * p];
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let z = robust_standardize(&col, scale)?;
        for (i, v) in z.into_iter().enumerate() {
            let (u, w) = biloop(v, params)?;
            data[i * 2 * p + 2 * j] = u;
            data[i * 2 * p + 2 * j + 1] = w;
        }
    }
    PointSet::from_rows(n, 2 * p, data)
}

pub fn biloop_dcor_stats(
    x: &DataMatrix,
    y: &DataMatrix,
    params: &BiloopParams,
    scale: MadScale,
) -> Result<DependenceStats> {
    let bx = biloop_points(x, params, scale)?;
    let by = biloop_points(y, params, scale)?;
    Ok(dcor_n(&PairSample::from_points(bx, by)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{StandardNormal, Uniform};

    #[test]
    fn bowl_of_zero_is_zero() {
        for p in 1..5 {
            let params = BowlParams::for_dim(p).unwrap();
            let out = bowl(&vec![0.0; p], &params).unwrap();
            assert_eq!(out, vec![0.0; p + 1]);
        }
    }

    #[test]
    fn bowl_vanishes_far_away() {
        let params = BowlParams::for_dim(2).unwrap();
        let out = bowl(&[1e4, -3e4], &params).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn bowl_height_peaks_at_three_quarters() {
        // v2 = 10 u^6 (1-u)^2 is maximal at u = 3/4.
        let peak = 10.0 * 0.75f64.powi(6) * 0.25f64.powi(2);
        assert!((peak - 0.11124).abs() < 1e-5);
        let params = BowlParams::for_dim(1).unwrap();
        let best = (0..200_000)
            .map(|k| bowl(&[k as f64 * 1e-4], &params).unwrap()[1])
            .fold(0.0, f64::max);
        assert!((best - peak).abs() < 1e-8, "{best}");
    }

    #[test]
    fn bowl_rejects_bad_input() {
        let params = BowlParams::for_dim(2).unwrap();
        assert!(matches!(
            bowl(&[f64::INFINITY, 0.0], &params),
            Err(Error::Validation(_))
        ));
        assert!(matches!(bowl(&[1.0], &params), Err(Error::Dimension(_))));
        assert!(BowlParams::new(1, 0.0).is_err());
    }

    #[test]
    fn biloop_limits() {
        let params = BiloopParams::default();
        let (u, v) = biloop(0.0, &params).unwrap();
        assert!(u.abs() < 1e-15 && v.abs() < 1e-15);
        let (u, v) = biloop(1e6, &params).unwrap();
        assert!(u.abs() < 1e-12 && v.abs() < 1e-12);
        assert!(biloop(f64::NAN, &params).is_err());
        assert!(BiloopParams::new(-1.0).is_err());
    }

    #[test]
    fn biloop_injective_on_grid() {
        let params = BiloopParams::default();
        let mut outs: Vec<(f64, f64)> = (0..10_000)
            .map(|k| -50.0 + 100.0 * k as f64 / 9_999.0)
            .map(|x| biloop(x, &params).unwrap())
            .collect();
        outs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        outs.dedup();
        assert_eq!(outs.len(), 10_000);
    }

    #[test]
    fn robust_standardize_cases() {
        assert_eq!(
            robust_standardize(&[1.0, 2.0, 3.0], MadScale::Raw).unwrap(),
            vec![-1.0, 0.0, 1.0]
        );
        assert_eq!(
            robust_standardize(&[4.0; 5], MadScale::Raw),
            Err(Error::DegenerateScale)
        );
        assert_eq!(
            robust_standardize(&[0.0, 0.0, 0.0, 100.0], MadScale::Raw),
            Err(Error::DegenerateScale)
        );
        let z = robust_standardize(&[1.0, 2.0, 3.0], MadScale::Normal).unwrap();
        assert!((z[2] - 1.0 / MAD_NORMAL_FACTOR).abs() < 1e-15);
    }

    #[test]
    fn bowl_dcor_self_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DataMatrix::from_fn(300, 2, |_, _| rng.sample(StandardNormal));
        assert!((bowl_dcor(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bowl_dcor_keeps_sign_flip_dependence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DataMatrix::from_fn(1000, 1, |_, _| rng.sample(StandardNormal));
        let y = -x.clone();
        assert!(bowl_dcor(&x, &y).unwrap() > 0.5);
    }

    #[test]
    fn bowl_dcor_independent_uniforms_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let unif = Uniform::new(0.0, 1.0).unwrap();
        let x = DataMatrix::from_fn(1000, 1, |_, _| rng.sample(unif));
        let y = DataMatrix::from_fn(1000, 1, |_, _| rng.sample(unif));
        assert!(bowl_dcor(&x, &y).unwrap() < 0.1);
    }
}
