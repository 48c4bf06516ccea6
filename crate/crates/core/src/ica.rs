//! The robust ICA estimator and the dCovICA baseline.
//!
//! Both estimators whiten the data, then search for an orthogonal matrix
//! `U` such that the columns of `S = Z U^T` are as independent as possible,
//! measured by the sum over `k` of the dependence between column `k` and the
//! block of columns after it. Row `k` of `U` only depends on the first `k`
//! angle blocks, so the blocks are estimated one at a time ("stages"). A
//! sweep permutes the recovered columns and re-runs every stage; a sweep is
//! kept only when it lowers the full objective.
//!
//! | estimator | whitening | dependence term |
//! |-----------|-----------|-----------------|
//! | robust    | MCD       | dCor of bowl-transformed columns |
//! | dCovICA   | sample    | raw dCov |

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distcorr::{dcor_n, dcov_n, PairSample, PointSet};
use crate::evalsim::amari_error;
use crate::optimizer::{minimize, multistart_minimize, OptProblem, OptResult};
use crate::par::Execution;
use crate::robustcov::{whiten_classical, whiten_mcd, McdConfig, WhitenedData};
use crate::rotation::{compose, AngleVector, OrthogonalMatrix};
use crate::transforms::{bowl_points, BowlParams};
use crate::{ensure_finite, DataMatrix, Error, Result};

/// Half-open angle ranges are closed this far below their upper end.
pub const ANGLE_EPS: f64 = 1e-9;

/// Dependence measure used for every stage term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// dCor between bowl-transformed component and remainder.
    BowlDcor,
    /// Raw empirical dCov, no transform.
    Dcov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerBudget {
    pub radius_init: f64,
    pub radius_final: f64,
    /// Evaluation budget per angle, per local search.
    pub evals_per_angle: usize,
    /// Lattice starts per angle, before the cap.
    pub starts_per_angle: usize,
    pub max_starts: usize,
    /// How many of the best lattice points seed a local search.
    pub local_starts: usize,
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        OptimizerBudget {
            radius_init: 0.5,
            radius_final: 1e-4,
            evals_per_angle: 100,
            starts_per_angle: 4,
            max_starts: 16,
            local_starts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicaConfig {
    /// Number of sweeps; `None` means `d + 1`.
    pub sweeps: Option<usize>,
    /// MCD whitening for the robust estimator (classical when off).
    pub use_mcd_whitening: bool,
    pub mcd: McdConfig,
    pub seed: u64,
    pub budget: OptimizerBudget,
}

impl Default for RicaConfig {
    fn default() -> Self {
        RicaConfig {
            sweeps: None,
            use_mcd_whitening: true,
            mcd: McdConfig {
                reweight: true,
                execution: Execution::Sequential,
                ..McdConfig::default()
            },
            seed: 0,
            budget: OptimizerBudget::default(),
        }
    }
}

impl RicaConfig {
    /// Settings for the dCovICA baseline: no sweeps.
    pub fn dcovica_baseline() -> Self {
        RicaConfig {
            sweeps: Some(0),
            use_mcd_whitening: false,
            ..RicaConfig::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn sweeps_for(&self, d: usize) -> usize {
        self.sweeps.unwrap_or(d + 1)
    }
}

/// One pass over all stages, plus whether it was kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0 for the initial pass.
    pub sweep: usize,
    /// Column order fed to this pass, as indices into the previous sources.
    pub permutation: Vec<usize>,
    /// Optimized stage-term search values, one per stage.
    pub stage_values: Vec<f64>,
    /// Full search objective after the pass (see [`TermValue::search`]).
    pub objective: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnmixResult {
    /// Row-form unmixing matrix: `sources = (x - center) * unmixing`, equal
    /// to `whitening_matrix * separating^T`.
    pub unmixing: DMatrix<f64>,
    /// Cumulative orthogonal matrix, sweeps and permutations folded in.
    pub separating: OrthogonalMatrix,
    pub whitening_matrix: DMatrix<f64>,
    pub center: DVector<f64>,
    pub sources: DataMatrix,
    /// Full reported objective of `sources`, in `[0, d-1]` for bowl-dCor.
    pub objective: f64,
    pub objective_trace: Vec<TraceEntry>,
    /// Angles of the last accepted pass, relative to that pass's input.
    pub angles: AngleVector,
    pub criterion: Criterion,
    /// Terms of the final objective that hit a degenerate (constant) column.
    pub degenerate_terms: usize,
    pub evaluations: usize,
}

impl UnmixResult {
    /// Column-form unmixing estimate, `unmixing^T`.
    pub fn unmixing_estimate(&self) -> DMatrix<f64> {
        self.unmixing.transpose()
    }

    /// Amari error of `unmixing^T * mixing` for data generated as `S A^T`.
    pub fn amari_against(&self, mixing: &DMatrix<f64>) -> Result<f64> {
        amari_error(&(self.unmixing.transpose() * mixing))
    }
}

/// Value of one stage term, with the degenerate flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermValue {
    /// Reported value; dCor terms are clamped to `[0, 1]`.
    pub value: f64,
    /// Value the optimizer sees. For dCor terms this is the unclamped ratio,
    /// which keeps its ordering below zero where the clamped one is flat.
    pub search: f64,
    pub degenerate: bool,
}

/// Precomputed per-dimension transform constants for one estimator.
#[derive(Debug, Clone)]
pub struct Objective {
    criterion: Criterion,
    bowl: Vec<BowlParams>,
}

impl Objective {
    pub fn new(criterion: Criterion, d: usize) -> Result<Self> {
        let bowl = match criterion {
            Criterion::BowlDcor => (1..d.max(2))
                .map(BowlParams::for_dim)
                .collect::<Result<_>>()?,
            Criterion::Dcov => Vec::new(),
        };
        Ok(Objective { criterion, bowl })
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    /// Dependence between column `k` of `s` and columns `k+1..d`.
    pub fn term(&self, s: &DataMatrix, k: usize) -> Result<TermValue> {
        let d = s.ncols();
        let head = PointSet::from_columns(s, &[k]);
        let rest: Vec<usize> = ((k + 1)..d).collect();
        let tail = PointSet::from_columns(s, &rest);
        match self.criterion {
            Criterion::BowlDcor => {
                let bh = bowl_points(&head, &self.bowl[0])?;
                let bt = bowl_points(&tail, &self.bowl[rest.len() - 1])?;
                let st = dcor_n(&PairSample::from_points(bh, bt)?);
                let degenerate = st.degenerate_x || st.degenerate_y;
                let search = if degenerate { 0.0 } else { st.raw_dcor() };
                Ok(TermValue {
                    value: st.dcor,
                    search,
                    degenerate,
                })
            }
            Criterion::Dcov => {
                let v = dcov_n(&PairSample::from_points(head, tail)?);
                Ok(TermValue {
                    value: v,
                    search: v,
                    degenerate: false,
                })
            }
        }
    }

    /// Sum of all `d - 1` terms of `s` as given (identity separating matrix).
    pub fn full(&self, s: &DataMatrix) -> Result<(f64, usize)> {
        let mut total = 0.0;
        let mut degenerate = 0;
        for k in 0..s.ncols().saturating_sub(1) {
            let t = self.term(s, k)?;
            total += t.value;
            degenerate += t.degenerate as usize;
        }
        Ok((total, degenerate))
    }

    /// Sum of the search values of all terms; drives sweep acceptance.
    pub fn search_total(&self, s: &DataMatrix) -> Result<f64> {
        (0..s.ncols().saturating_sub(1))
            .map(|k| Ok(self.term(s, k)?.search))
            .sum()
    }
}

/// Full robust objective at `angles`: sum over `k` of the bowl-dCor between
/// column `k` of `z U(theta)^T` and the columns after it.
pub fn rica_objective(angles: &AngleVector, z: &DataMatrix) -> Result<f64> {
    check_angles(angles, z)?;
    let obj = Objective::new(Criterion::BowlDcor, z.ncols())?;
    let s = z * compose(angles).matrix().transpose();
    Ok(obj.full(&s)?.0)
}

/// Same as [`rica_objective`] with raw dCov terms.
pub fn dcov_objective(angles: &AngleVector, z: &DataMatrix) -> Result<f64> {
    check_angles(angles, z)?;
    let obj = Objective::new(Criterion::Dcov, z.ncols())?;
    let s = z * compose(angles).matrix().transpose();
    Ok(obj.full(&s)?.0)
}

fn check_angles(angles: &AngleVector, z: &DataMatrix) -> Result<()> {
    if angles.dim() != z.ncols() {
        return Err(Error::Dimension(format!(
            "angles are for d = {}, data has {} columns",
            angles.dim(),
            z.ncols()
        )));
    }
    Ok(())
}

/// Points of the `R_m` Kronecker sequence (generalized golden ratio) in the unit cube.
pub fn kronecker_lattice(m: usize, count: usize) -> Vec<Vec<f64>> {
    // phi_m is the unique positive root of x^(m+1) = x + 1
    let mut phi: f64 = 2.0;
    for _ in 0..100 {
        phi = (1.0 + phi).powf(1.0 / (m as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=m).map(|j| phi.powi(-(j as i32)).fract()).collect();
    (0..count)
        .map(|i| alpha.iter().map(|a| (0.5 + a * i as f64).fract()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub block: Vec<f64>,
    pub value: f64,
    /// Stage term at the best lattice point, before local refinement.
    pub initial_value: f64,
    pub evaluations: usize,
}

fn block_bounds(d: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let m = d - k - 1;
    let top = AngleVector::block_period(k) - ANGLE_EPS;
    (vec![0.0; m], vec![top; m])
}

/// Stage `k`: minimizes the `k`-th term over the angles of block `k`, with
/// `fixed` supplying every other block. Rows `0..k` of `U` do not move.
pub fn rica_stage(
    z: &DataMatrix,
    k: usize,
    fixed: &AngleVector,
    objective: &Objective,
    budget: &OptimizerBudget,
) -> Result<StageResult> {
    let d = z.ncols();
    check_angles(fixed, z)?;
    if k + 1 >= d {
        return Err(Error::Dimension(format!(
            "stage {k} does not exist for d = {d}"
        )));
    }
    let m = d - k - 1;
    let (lower, upper) = block_bounds(d, k);

    let mut angles = fixed.clone();
    let mut failure: Option<Error> = None;
    let mut eval = |block: &[f64]| -> f64 {
        angles.set_block(k, block);
        let u = compose(&angles);
        let rows = u.matrix().rows(k, d - k).transpose();
        let s_tail = z * rows;
        let mut s = DataMatrix::zeros(z.nrows(), d);
        s.columns_mut(k, d - k).copy_from(&s_tail);
        match objective.term(&s, k) {
            Ok(t) => t.search,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };

    let count = (budget.starts_per_angle * m).clamp(1, budget.max_starts.max(1));
    let lattice: Vec<Vec<f64>> = kronecker_lattice(m, count)
        .into_iter()
        .map(|p| p.iter().zip(&upper).map(|(t, u)| t * u).collect())
        .collect();
    let mut screened: Vec<(f64, usize)> = Vec::with_capacity(lattice.len());
    for (i, p) in lattice.iter().enumerate() {
        let v = eval(p);
        if !v.is_finite() {
            return Err(failure.unwrap_or(Error::Objective {
                point: p.clone(),
                value: v,
            }));
        }
        screened.push((v, i));
    }
    screened.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let initial_value = screened[0].0;
    let mut chosen: Vec<usize> = screened
        .iter()
        .take(budget.local_starts.max(1))
        .map(|&(_, i)| i)
        .collect();
    chosen.sort_unstable();
    let starts: Vec<Vec<f64>> = chosen.iter().map(|&i| lattice[i].clone()).collect();

    let problem = OptProblem {
        lower,
        upper,
        initial: starts[0].clone(),
        max_evals: (budget.evals_per_angle * m).max(m + 2),
        radius_init: budget.radius_init,
        radius_final: budget.radius_final,
    };
    let result: Result<OptResult> = if starts.len() == 1 {
        minimize(&problem, &mut eval)
    } else {
        multistart_minimize(&problem, &starts, &mut eval)
    };
    let result = match (result, failure) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    Ok(StageResult {
        block: result.minimizer,
        value: result.objective_value,
        initial_value,
        evaluations: result.evaluations + lattice.len(),
    })
}

struct Pass {
    angles: AngleVector,
    stage_values: Vec<f64>,
    evaluations: usize,
}

fn run_stages(z: &DataMatrix, objective: &Objective, budget: &OptimizerBudget) -> Result<Pass> {
    let d = z.ncols();
    let mut angles = AngleVector::zeros(d);
    let mut stage_values = Vec::with_capacity(d - 1);
    let mut evaluations = 0;
    for k in 0..d - 1 {
        let st = rica_stage(z, k, &angles, objective, budget)?;
        angles.set_block(k, &st.block);
        stage_values.push(st.value);
        evaluations += st.evaluations;
    }
    Ok(Pass {
        angles,
        stage_values,
        evaluations,
    })
}

fn check_input(x: &DataMatrix) -> Result<()> {
    let (n, d) = x.shape();
    if d < 2 {
        return Err(Error::Dimension(format!(
            "ICA needs at least 2 columns, got {d}"
        )));
    }
    if n < 2 * (d + 1) {
        return Err(Error::Dimension(format!(
            "ICA needs n >= 2(d+1) = {} observations, got {n}",
            2 * (d + 1)
        )));
    }
    ensure_finite(x, "ICA input")
}

fn fit_whitened(
    white: WhitenedData,
    criterion: Criterion,
    config: &RicaConfig,
) -> Result<UnmixResult> {
    let z = &white.z;
    let d = z.ncols();
    let objective = Objective::new(criterion, d)?;

    let first = run_stages(z, &objective, &config.budget)?;
    let mut evaluations = first.evaluations;
    let mut separating = compose(&first.angles);
    let mut sources = z * separating.matrix().transpose();
    let mut best = objective.search_total(&sources)?;
    let mut angles = first.angles;
    let mut trace = vec![TraceEntry {
        sweep: 0,
        permutation: (0..d).collect(),
        stage_values: first.stage_values,
        objective: best,
        accepted: true,
    }];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    for sweep in 1..=config.sweeps_for(d) {
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut rng);
        let p = OrthogonalMatrix::permutation(&perm)?;
        let permuted = &sources * p.matrix().transpose();
        let pass = run_stages(&permuted, &objective, &config.budget)?;
        evaluations += pass.evaluations;
        let u = compose(&pass.angles);
        let candidate = &permuted * u.matrix().transpose();
        let value = objective.search_total(&candidate)?;
        let accepted = value < best;
        if accepted {
            best = value;
            sources = candidate;
            separating = u.compose(&p).compose(&separating);
            angles = pass.angles;
        }
        trace.push(TraceEntry {
            sweep,
            permutation: perm,
            stage_values: pass.stage_values,
            objective: value,
            accepted,
        });
    }

    let separating = OrthogonalMatrix::from_trusted(separating.into_inner());
    let sources = z * separating.matrix().transpose();
    let (objective_value, degenerate_terms) = objective.full(&sources)?;
    Ok(UnmixResult {
        unmixing: &white.whitening_matrix * separating.matrix().transpose(),
        separating,
        whitening_matrix: white.whitening_matrix,
        center: white.center,
        sources,
        objective: objective_value,
        objective_trace: trace,
        angles,
        criterion,
        degenerate_terms,
        evaluations,
    })
}

/// Robust ICA: MCD whitening, bowl-dCor stages and improve-only sweeps.
pub fn rica_fit(x: &DataMatrix, config: &RicaConfig) -> Result<UnmixResult> {
    check_input(x)?;
    let white = if config.use_mcd_whitening {
        whiten_mcd(x, &config.mcd, config.seed)?.0
    } else {
        whiten_classical(x)?
    };
    fit_whitened(white, Criterion::BowlDcor, config)
}

/// dCovICA: sample-covariance whitening and raw dCov stages.
pub fn dcovica_fit(x: &DataMatrix, config: &RicaConfig) -> Result<UnmixResult> {
    check_input(x)?;
    fit_whitened(whiten_classical(x)?, Criterion::Dcov, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::givens;
    use rand::Rng;
    use rand_distr::Uniform;
    use std::f64::consts::PI;

    fn uniforms(seed: u64, n: usize, d: usize) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-3f64.sqrt(), 3f64.sqrt()).unwrap();
        DataMatrix::from_fn(n, d, |_, _| rng.sample(u))
    }

    fn quick() -> RicaConfig {
        RicaConfig {
            mcd: McdConfig {
                starts: 100,
                ..McdConfig::default()
            },
            ..RicaConfig::default()
        }
    }

    #[test]
    fn lattice_is_inside_unit_cube() {
        for m in 1..5 {
            let pts = kronecker_lattice(m, 16);
            assert_eq!(pts.len(), 16);
            assert!(pts.iter().flatten().all(|t| (0.0..1.0).contains(t)));
        }
        assert_eq!(kronecker_lattice(1, 1)[0], vec![0.5]);
    }

    #[test]
    fn objective_small_for_independent_columns() {
        let z = uniforms(1, 1000, 2);
        let v = rica_objective(&AngleVector::zeros(2), &z).unwrap();
        assert!(v < 0.1, "{v}");
    }

    #[test]
    fn objective_bounded_by_d_minus_one() {
        let z = uniforms(2, 200, 4);
        let a = AngleVector::from_flat(4, vec![0.3, 1.1, 2.0, 0.4, 0.9, 2.5]).unwrap();
        let v = rica_objective(&a, &z).unwrap();
        assert!((0.0..=3.0).contains(&v));
    }

    #[test]
    fn stage_leaves_earlier_sources_untouched() {
        let z = uniforms(3, 200, 3);
        let mut fixed = AngleVector::zeros(3);
        fixed.set_block(0, &[0.7, 1.9]);
        let obj = Objective::new(Criterion::BowlDcor, 3).unwrap();
        let before = (z.clone() * compose(&fixed).matrix().transpose())
            .column(0)
            .into_owned();
        let st = rica_stage(&z, 1, &fixed, &obj, &OptimizerBudget::default()).unwrap();
        let mut after_angles = fixed.clone();
        after_angles.set_block(1, &st.block);
        let after = (z * compose(&after_angles).matrix().transpose())
            .column(0)
            .into_owned();
        assert_eq!(before, after);
        assert!(st.value <= st.initial_value);
    }

    #[test]
    fn two_dimensional_rotation_is_undone() {
        let s = uniforms(4, 1000, 2);
        let mix = givens(2, 0, 1, PI / 4.0).unwrap();
        let x = &s * mix.matrix().transpose();
        let fit = rica_fit(&x, &quick().with_seed(9)).unwrap();
        let err = fit.amari_against(mix.matrix()).unwrap();
        assert!(err < 0.1, "amari {err}");
        assert!(fit.objective >= 0.0 && fit.objective <= 1.0);
    }

    #[test]
    fn sweeps_never_raise_the_accepted_objective() {
        let s = uniforms(5, 400, 3);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.2, -0.3, 1.0, 0.5, 0.1, 0.2, 1.0]);
        let fit = rica_fit(&(s * a.transpose()), &quick().with_seed(2)).unwrap();
        let mut best = f64::INFINITY;
        for t in &fit.objective_trace {
            if t.accepted {
                assert!(t.objective <= best);
                best = t.objective;
            }
        }
        assert_eq!(fit.objective_trace.len(), 1 + 4);
        assert!((fit.objective - best).abs() < 1e-9);
    }

    #[test]
    fn unmixing_reproduces_sources() {
        let s = uniforms(6, 300, 2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.3, 1.2]);
        let x = &s * a.transpose();
        let fit = rica_fit(&x, &quick()).unwrap();
        let mut centered = x.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-fit.center[j]);
        }
        assert!((centered * &fit.unmixing - &fit.sources).abs().max() < 1e-10);
        assert!(crate::rotation::orthogonality_error(fit.separating.matrix()) < 1e-12);
    }

    #[test]
    fn dcovica_is_deterministic() {
        let s = uniforms(7, 300, 2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.3, 1.2]);
        let x = &s * a.transpose();
        let cfg = RicaConfig::dcovica_baseline();
        let f1 = dcovica_fit(&x, &cfg).unwrap();
        let f2 = dcovica_fit(&x, &cfg).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.criterion, Criterion::Dcov);
        assert!(f1.amari_against(&a).unwrap() < 0.1);
    }

    #[test]
    fn rejects_bad_shapes() {
        let x = uniforms(8, 5, 2);
        assert!(matches!(rica_fit(&x, &quick()), Err(Error::Dimension(_))));
        let x = uniforms(8, 50, 1);
        assert!(matches!(rica_fit(&x, &quick()), Err(Error::Dimension(_))));
    }
}
