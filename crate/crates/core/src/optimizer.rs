//! Bound-constrained derivative-free minimization for small angle blocks.
//!
//! A trust-region method: each iteration fits a quadratic model to the
//! evaluated points near the incumbent (minimum-norm least squares, so the
//! model is usable before the set is fully determined), minimizes it over
//! the intersection of the box and an infinity-norm trust region, and
//! compares the predicted with the actual decrease. When the model fails,
//! the incumbent is polled along the coordinate axes before the radius is
//! halved, which keeps the method convergent even with a poor model.
//!
//! Every evaluated point is clamped into the closed box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
    pub max_evals: usize,
    pub radius_init: f64,
    pub radius_final: f64,
}

impl OptProblem {
    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.initial.len();
        if m == 0 || self.lower.len() != m || self.upper.len() != m {
            return Err(Error::Dimension(format!(
                "bounds ({}, {}) and initial point ({m}) must share a positive length",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for k in 0..m {
            if !(self.lower[k] < self.upper[k]) {
                return Err(Error::Validation(format!(
                    "lower[{k}] = {} must be below upper[{k}] = {}",
                    self.lower[k], self.upper[k]
                )));
            }
            if !(self.lower[k] <= self.initial[k] && self.initial[k] <= self.upper[k]) {
                return Err(Error::Validation(format!(
                    "initial[{k}] = {} lies outside [{}, {}]",
                    self.initial[k], self.lower[k], self.upper[k]
                )));
            }
        }
        if !(self.radius_final > 0.0 && self.radius_final < self.radius_init) {
            return Err(Error::Validation(format!(
                "need 0 < radius_final ({}) < radius_init ({})",
                self.radius_final, self.radius_init
            )));
        }
        if self.max_evals < m + 2 {
            return Err(Error::Validation(format!(
                "max_evals = {} is below dimension + 2 = {}",
                self.max_evals,
                m + 2
            )));
        }
        Ok(())
    }

    fn clamp(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Radius,
    EvalBudget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub minimizer: Vec<f64>,
    pub objective_value: f64,
    pub evaluations: usize,
    pub converged_by: Termination,
}

struct Evaluator<'p, F> {
    f: F,
    problem: &'p OptProblem,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Evaluator<'_, F> {
    fn exhausted(&self) -> bool {
        self.points.len() >= self.problem.max_evals
    }

    /// Value at `x` (clamped into the box); cached for repeated points.
    /// `None` once the budget is spent.
    fn eval(&mut self, mut x: Vec<f64>) -> Result<Option<(Vec<f64>, f64)>> {
        self.problem.clamp(&mut x);
        if let Some(k) = self.points.iter().position(|p| *p == x) {
            return Ok(Some((x, self.values[k])));
        }
        if self.exhausted() {
            return Ok(None);
        }
        let v = (self.f)(&x);
        if !v.is_finite() {
            return Err(Error::Objective { point: x, value: v });
        }
        self.points.push(x.clone());
        self.values.push(v);
        Ok(Some((x, v)))
    }
}

/// Quadratic `g.s + s.H.s / 2` in trust-region-scaled coordinates.
struct Model {
    g: DVector<f64>,
    h: DMatrix<f64>,
}

impl Model {
    fn value(&self, s: &DVector<f64>) -> f64 {
        self.g.dot(s) + 0.5 * s.dot(&(&self.h * s))
    }

    /// Least-squares fit to `(s_i, f_i - f_0)`, minimum norm when underdetermined.
    fn fit(m: usize, samples: &[(Vec<f64>, f64)]) -> Option<Model> {
        let unknowns = m + m * (m + 1) / 2;
        let mut a = DMatrix::zeros(samples.len(), unknowns);
        let mut b = DVector::zeros(samples.len());
        for (r, (s, df)) in samples.iter().enumerate() {
            let mut c = 0;
            for &si in s.iter() {
                a[(r, c)] = si;
                c += 1;
            }
            for i in 0..m {
                for j in i..m {
                    a[(r, c)] = if i == j {
                        0.5 * s[i] * s[i]
                    } else {
                        s[i] * s[j]
                    };
                    c += 1;
                }
            }
            b[r] = *df;
        }
        let svd = a.svd(true, true);
        let tol = 1e-10 * svd.singular_values.max();
        let coef = svd.solve(&b, tol).ok()?;
        let g = DVector::from_iterator(m, coef.iter().take(m).copied());
        let mut h = DMatrix::zeros(m, m);
        let mut c = m;
        for i in 0..m {
            for j in i..m {
                h[(i, j)] = coef[c];
                h[(j, i)] = coef[c];
                c += 1;
            }
        }
        if g.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        Some(Model { g, h })
    }

    /// Approximate minimizer over the box `[lo, hi]` (which contains 0) by
    /// exact coordinate descent from a few starting points.
    fn minimize_in_box(&self, lo: &[f64], hi: &[f64]) -> DVector<f64> {
        let m = lo.len();
        let project = |mut s: DVector<f64>| {
            for k in 0..m {
                s[k] = s[k].clamp(lo[k], hi[k]);
            }
            s
        };
        let mut starts = vec![DVector::zeros(m)];
        let gn = self.g.norm();
        if gn > 0.0 {
            starts.push(project(-&self.g * (1.0 / gn)));
        }
        if let Some(chol) = self.h.clone().cholesky() {
            starts.push(project(-chol.solve(&self.g)));
        }
        let mut best = DVector::zeros(m);
        let mut best_val = 0.0;
        for s0 in starts {
            let s = self.coordinate_descent(s0, lo, hi);
            let v = self.value(&s);
            if v < best_val {
                best_val = v;
                best = s;
            }
        }
        best
    }

    fn coordinate_descent(&self, mut s: DVector<f64>, lo: &[f64], hi: &[f64]) -> DVector<f64> {
        let m = s.len();
        for _ in 0..100 {
            let mut moved = 0.0f64;
            for k in 0..m {
                // q along coordinate k: const + (g_k + (H s)_k - H_kk s_k) t + H_kk t^2 / 2
                let hs: f64 = (0..m).map(|j| self.h[(k, j)] * s[j]).sum();
                let lin = self.g[k] + hs - self.h[(k, k)] * s[k];
                let curv = self.h[(k, k)];
                let phi = |t: f64| lin * t + 0.5 * curv * t * t;
                let mut t = if phi(lo[k]) <= phi(hi[k]) {
                    lo[k]
                } else {
                    hi[k]
                };
                if curv > 0.0 {
                    let interior = (-lin / curv).clamp(lo[k], hi[k]);
                    if phi(interior) < phi(t) {
                        t = interior;
                    }
                }
                moved = moved.max((t - s[k]).abs());
                s[k] = t;
            }
            if moved < 1e-12 {
                break;
            }
        }
        s
    }
}

pub fn minimize<F>(problem: &OptProblem, f: F) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> f64,
{
    problem.validate()?;
    let m = problem.dim();
    let mut ev = Evaluator {
        f,
        problem,
        points: Vec::new(),
        values: Vec::new(),
    };

    let (mut x, mut fx) = ev
        .eval(problem.initial.clone())?
        .expect("budget validated to cover the initial point");
    let mut delta = problem.radius_init;
    let mut polled = false;

    let converged_by = loop {
        if delta < problem.radius_final {
            break Termination::Radius;
        }
        if ev.exhausted() {
            break Termination::EvalBudget;
        }

        let samples = nearby_samples(&ev.points, &ev.values, &x, fx, delta, m);
        if samples.len() < m && !polled {
            match poll(&mut ev, &x, delta)? {
                Poll::Improved(y, fy) => {
                    x = y;
                    fx = fy;
                }
                Poll::NoImprovement => polled = true,
                Poll::Exhausted => break Termination::EvalBudget,
            }
            continue;
        }

        let lo: Vec<f64> = (0..m)
            .map(|k| ((problem.lower[k] - x[k]) / delta).max(-1.0))
            .collect();
        let hi: Vec<f64> = (0..m)
            .map(|k| ((problem.upper[k] - x[k]) / delta).min(1.0))
            .collect();
        let step = Model::fit(m, &samples).map(|model| {
            let s = model.minimize_in_box(&lo, &hi);
            let pred = -model.value(&s);
            (s, pred)
        });

        let mut success = false;
        if let Some((s, pred)) = step {
            if pred > 1e-14 * fx.abs().max(1.0) {
                let y: Vec<f64> = (0..m).map(|k| x[k] + delta * s[k]).collect();
                match ev.eval(y)? {
                    None => break Termination::EvalBudget,
                    Some((y, fy)) if fy < fx => {
                        let rho = (fx - fy) / pred;
                        let s_inf = s.amax();
                        x = y;
                        fx = fy;
                        polled = false;
                        success = true;
                        if rho > 0.75 && s_inf > 0.9 {
                            delta = (2.0 * delta).min(problem.radius_init * 4.0);
                        } else if rho < 0.1 {
                            delta *= 0.5;
                        }
                    }
                    Some(_) => {}
                }
            }
        }
        if success {
            continue;
        }
        if !polled {
            match poll(&mut ev, &x, delta)? {
                Poll::Improved(y, fy) => {
                    x = y;
                    fx = fy;
                }
                Poll::NoImprovement => polled = true,
                Poll::Exhausted => break Termination::EvalBudget,
            }
        } else {
            delta *= 0.5;
            polled = false;
        }
    };

    Ok(OptResult {
        minimizer: x,
        objective_value: fx,
        evaluations: ev.points.len(),
        converged_by,
    })
}

enum Poll {
    Improved(Vec<f64>, f64),
    NoImprovement,
    Exhausted,
}

fn poll<F: FnMut(&[f64]) -> f64>(ev: &mut Evaluator<'_, F>, x: &[f64], delta: f64) -> Result<Poll> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    let fx = ev.values[ev
        .points
        .iter()
        .position(|p| p == x)
        .expect("incumbent evaluated")];
    for k in 0..x.len() {
        for sign in [1.0, -1.0] {
            let mut y = x.to_vec();
            y[k] += sign * delta;
            match ev.eval(y)? {
                None => {
                    return Ok(match best {
                        Some((y, fy)) => Poll::Improved(y, fy),
                        None => Poll::Exhausted,
                    })
                }
                Some((y, fy)) => {
                    if fy < best.as_ref().map_or(fx, |b| b.1) {
                        best = Some((y, fy));
                    }
                }
            }
        }
    }
    Ok(match best {
        Some((y, fy)) => Poll::Improved(y, fy),
        None => Poll::NoImprovement,
    })
}

/// Evaluated points within `2 * delta` (infinity norm) of `x`, in scaled
/// coordinates, nearest first and capped at twice the model size.
fn nearby_samples(
    points: &[Vec<f64>],
    values: &[f64],
    x: &[f64],
    fx: f64,
    delta: f64,
    m: usize,
) -> Vec<(Vec<f64>, f64)> {
    let mut near: Vec<(f64, Vec<f64>, f64)> = points
        .iter()
        .zip(values)
        .filter_map(|(p, &v)| {
            let s: Vec<f64> = p.iter().zip(x).map(|(a, b)| (a - b) / delta).collect();
            let dist = s.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            (dist > 0.0 && dist <= 2.0).then_some((dist, s, v - fx))
        })
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0));
    near.truncate(2 * (m + m * (m + 1) / 2));
    near.into_iter().map(|(_, s, df)| (s, df)).collect()
}

/// Runs [`minimize`] from every start and keeps the best result; ties go to
/// the lowest start index. `evaluations` is the total over all starts.
pub fn multistart_minimize<F>(
    problem: &OptProblem,
    starts: &[Vec<f64>],
    mut f: F,
) -> Result<OptResult>
where
    F: FnMut(&[f64]) -> f64,
{
    if starts.is_empty() {
        return Err(Error::Validation(
            "multistart needs at least one start".into(),
        ));
    }
    let mut best: Option<OptResult> = None;
    let mut total = 0;
    for start in starts {
        let p = OptProblem {
            initial: start.clone(),
            ..problem.clone()
        };
        let r = minimize(&p, &mut f)?;
        total += r.evaluations;
        if best
            .as_ref()
            .is_none_or(|b| r.objective_value < b.objective_value)
        {
            best = Some(r);
        }
    }
    let mut best = best.expect("at least one start");
    best.evaluations = total;
    Ok(best)
}
