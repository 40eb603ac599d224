//! Augmented-Lagrangian solver for the transcribed problem, with a
//! projected Newton inner loop on the exact Hessian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::NlpProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlpOptions {
    /// Bound on both the scaled constraint violation and the projected
    /// gradient of the Lagrangian.
    pub tol: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e12,
            max_outer: 30,
            max_inner: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    /// Unscaled objective (T/2)Σ wᵢĪᵢ².
    pub objective: f64,
    /// Projected-gradient norm of the Lagrangian (scaled units).
    pub stationarity: f64,
    /// Largest scaled constraint violation.
    pub feasibility: f64,
    pub outer_rounds: usize,
    pub inner_iterations: usize,
    pub converged: bool,
}

struct Bounds {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Bounds {
    fn project(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    /// ‖x − P(x − g)‖∞.
    fn projected_gradient(&self, x: &DVector<f64>, g: &DVector<f64>) -> f64 {
        (0..x.len())
            .map(|i| (x[i] - (x[i] - g[i]).clamp(self.lo[i], self.hi[i])).abs())
            .fold(0.0, f64::max)
    }
}

/// The augmented Lagrangian of the row-weighted problem. Defect rows are
/// weighted by their quadrature weight so that the large endpoint rows of
/// the differentiation matrix do not dominate the penalty.
struct Merit<'a> {
    problem: &'a NlpProblem,
    rows: &'a DVector<f64>,
    lambda: &'a DVector<f64>,
    rho: f64,
}

impl Merit<'_> {
    fn constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        self.problem.constraints(x.as_slice()).component_mul(self.rows)
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let c = self.constraints(x);
        self.problem.scaled_objective(x.as_slice()) + self.lambda.dot(&c) + 0.5 * self.rho * c.norm_squared()
    }

    fn weighted_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.problem.constraint_jacobian(x.as_slice());
        for (i, mut row) in a.row_iter_mut().enumerate() {
            row *= self.rows[i];
        }
        a
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = self.lambda + self.rho * self.constraints(x);
        self.problem.scaled_objective_gradient(x.as_slice()) + self.weighted_jacobian(x).tr_mul(&y)
    }

    /// (value, gradient, Hessian).
    fn expand(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let p = self.problem;
        let xs = x.as_slice();
        let c = self.constraints(x);
        let a = self.weighted_jacobian(x);
        let y = self.lambda + self.rho * &c;
        let value = p.scaled_objective(xs) + self.lambda.dot(&c) + 0.5 * self.rho * c.norm_squared();
        let grad = p.scaled_objective_gradient(xs) + a.tr_mul(&y);
        let mut hess = a.tr_mul(&a) * self.rho;
        p.add_objective_hessian(&mut hess);
        p.add_constraint_hessian(xs, &y.component_mul(self.rows), &mut hess);
        (value, grad, hess)
    }
}

/// Newton step that moves the held variables onto their bounds and
/// solves for the free ones given that move, with a Levenberg–Marquardt
/// shift until the reduced Hessian factors.
fn newton_step(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    free: &[usize],
    held: &[(usize, f64)],
) -> DVector<f64> {
    let mut step = DVector::zeros(grad.len());
    for &(i, d) in held {
        step[i] = d;
    }
    if free.is_empty() {
        return step;
    }
    let k = free.len();
    let reduced = DMatrix::from_fn(k, k, |r, c| hess[(free[r], free[c])]);
    let rhs = DVector::from_fn(k, |r, _| {
        let i = free[r];
        -grad[i] - held.iter().map(|&(j, d)| hess[(i, j)] * d).sum::<f64>()
    });
    let scale = (0..k).map(|i| reduced[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut shift = 0.0;
    loop {
        let mut m = reduced.clone();
        for i in 0..k {
            m[(i, i)] += shift;
        }
        if let Some(chol) = m.cholesky() {
            let d = chol.solve(&rhs);
            for (r, &i) in free.iter().enumerate() {
                step[i] = d[r];
            }
            return step;
        }
        shift = if shift == 0.0 { 1e-10 * scale } else { 10.0 * shift };
    }
}

/// Minimizes the merit function over the box; returns the number of
/// Newton steps taken. Stops at `tol`, or once the merit value has stopped
/// decreasing beyond rounding.
fn inner_solve(merit: &Merit, bounds: &Bounds, x: &mut DVector<f64>, tol: f64, max_iter: usize) -> usize {
    let mut stalled = 0;
    let mut last = f64::INFINITY;
    for it in 0..max_iter {
        let (value, grad, hess) = merit.expand(x);
        let pg = bounds.projected_gradient(x, &grad);
        if pg < tol {
            return it;
        }
        if value > last - 1e-13 * value.abs() {
            stalled += 1;
            if stalled >= 5 {
                return it;
            }
        } else {
            stalled = 0;
        }
        last = value;
        let eps = pg.min(1e-3);
        let mut free = Vec::with_capacity(x.len());
        let mut held = Vec::new();
        for i in 0..x.len() {
            if x[i] - bounds.lo[i] <= eps && grad[i] > 0.0 {
                held.push((i, bounds.lo[i] - x[i]));
            } else if bounds.hi[i] - x[i] <= eps && grad[i] < 0.0 {
                held.push((i, bounds.hi[i] - x[i]));
            } else {
                free.push(i);
            }
        }
        let step = newton_step(&hess, &grad, &free, &held);
        if step.amax() <= 1e-13 * x.amax().max(1.0) {
            return it;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-14 {
            let mut trial = &*x + alpha * &step;
            bounds.project(&mut trial);
            let decrease = grad.dot(&(&trial - &*x));
            let v = merit.value(&trial);
            // slack for rounding in the merit value once steps are tiny
            let slack = 16.0 * f64::EPSILON * value.abs();
            if v <= value + 1e-4 * decrease.min(0.0) + slack && v.is_finite() {
                *x = trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return it + 1;
        }
    }
    max_iter
}

/// Newton iteration on the KKT conditions of the equality-constrained
/// problem with the variables at their bounds held fixed. Started from a
/// near-feasible augmented-Lagrangian iterate it converges without the
/// penalty term, whose conditioning otherwise limits the attainable
/// stationarity. Returns the refined (x, λ) if it meets `tol`.
fn polish(
    problem: &NlpProblem,
    rows: &DVector<f64>,
    bounds: &Bounds,
    x0: &DVector<f64>,
    lambda0: &DVector<f64>,
    tol: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64, f64)> {
    let mut x = x0.clone();
    let mut lambda = lambda0.clone();
    let n = x.len();
    for _ in 0..20 {
        let merit = Merit {
            problem,
            rows,
            lambda: &lambda,
            rho: 0.0,
        };
        let c = problem.constraints(x.as_slice());
        let a = merit.weighted_jacobian(&x);
        let grad = problem.scaled_objective_gradient(x.as_slice()) + a.tr_mul(&lambda);
        let feasibility = c.amax();
        let stationarity = bounds.projected_gradient(&x, &grad);
        if !(feasibility.is_finite() && stationarity.is_finite()) {
            return None;
        }
        if feasibility < tol && stationarity < tol {
            return Some((x, lambda, feasibility, stationarity));
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| {
                let at_lo = x[i] <= bounds.lo[i] && grad[i] > 0.0;
                let at_hi = x[i] >= bounds.hi[i] && grad[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let mut hess = DMatrix::zeros(n, n);
        problem.add_objective_hessian(&mut hess);
        problem.add_constraint_hessian(x.as_slice(), &lambda.component_mul(rows), &mut hess);
        let (k, m) = (free.len(), c.len());
        let mut kkt = DMatrix::zeros(k + m, k + m);
        let mut rhs = DVector::zeros(k + m);
        for (r, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate() {
                kkt[(r, q)] = hess[(i, j)];
            }
            for row in 0..m {
                kkt[(k + row, r)] = a[(row, i)];
                kkt[(r, k + row)] = a[(row, i)];
            }
            rhs[r] = -grad[i];
        }
        for row in 0..m {
            rhs[k + row] = -c[row] * rows[row];
        }
        let step = kkt.lu().solve(&rhs)?;
        for (r, &i) in free.iter().enumerate() {
            x[i] = (x[i] + step[r]).clamp(bounds.lo[i], bounds.hi[i]);
        }
        for row in 0..m {
            lambda[row] += step[k + row];
        }
    }
    None
}

/// Runs the solver and always returns its best iterate with diagnostics.
pub fn solve_nlp_report(problem: &NlpProblem, guess: &[f64], opts: &NlpOptions) -> Result<NlpSolution> {
    let n = problem.n_vars();
    if guess.len() != n {
        return Err(Error::BadParameter(format!(
            "initial guess has {} entries, problem has {n} variables",
            guess.len()
        )));
    }
    if guess.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadParameter("initial guess is not finite".into()));
    }
    let bounds = Bounds {
        lo: problem.lower_bounds(),
        hi: problem.upper_bounds(),
    };
    let mut x = DVector::from_column_slice(guess);
    bounds.project(&mut x);
    let rows = problem.row_weights();
    let mut lambda = DVector::zeros(problem.n_constraints());
    let mut rho = opts.initial_penalty;
    let mut previous = f64::INFINITY;
    let mut inner_total = 0;
    let mut stationarity = f64::INFINITY;
    let mut feasibility = f64::INFINITY;
    let mut rounds = 0;
    let mut converged = false;
    while rounds < opts.max_outer {
        rounds += 1;
        let merit = Merit {
            problem,
            rows: &rows,
            lambda: &lambda,
            rho,
        };
        let iters = inner_solve(&merit, &bounds, &mut x, 1e-2 * opts.tol, opts.max_inner);
        inner_total += iters;
        let c = problem.constraints(x.as_slice());
        feasibility = c.amax();
        lambda += rho * c.component_mul(&rows);
        let lagrangian = Merit {
            problem,
            rows: &rows,
            lambda: &lambda,
            rho: 0.0,
        };
        stationarity = bounds.projected_gradient(&x, &lagrangian.gradient(&x));
        if feasibility < 1e-3 && !(feasibility < opts.tol && stationarity < opts.tol) {
            if let Some((xp, lp, f, st)) = polish(problem, &rows, &bounds, &x, &lambda, opts.tol) {
                x = xp;
                lambda = lp;
                feasibility = f;
                stationarity = st;
            }
        }
        log::debug!("AL round {rounds}: rho {rho:e}, feasibility {feasibility:e}, stationarity {stationarity:e}, {iters} Newton steps");
        if feasibility < opts.tol && stationarity < opts.tol {
            converged = true;
            break;
        }
        if feasibility > opts.tol && feasibility > 0.25 * previous {
            rho = (rho * opts.penalty_growth).min(opts.max_penalty);
        }
        previous = feasibility;
    }
    Ok(NlpSolution {
        objective: problem.objective(x.as_slice()),
        x: x.as_slice().to_vec(),
        stationarity,
        feasibility,
        outer_rounds: rounds,
        inner_iterations: inner_total,
        converged,
    })
}

/// As [`solve_nlp_report`], but a run that misses the tolerances is an
/// error.
pub fn solve_nlp(problem: &NlpProblem, guess: &[f64], opts: &NlpOptions) -> Result<NlpSolution> {
    let sol = solve_nlp_report(problem, guess, opts)?;
    if sol.converged {
        Ok(sol)
    } else {
        log::warn!(
            "NLP stopped after {} rounds: feasibility {:e}, stationarity {:e}",
            sol.outer_rounds,
            sol.feasibility,
            sol.stationarity
        );
        Err(Error::NoConvergence {
            iters: sol.outer_rounds,
            residual: sol.feasibility.max(sol.stationarity),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{assemble_nlp, lgl_grid};
    use crate::phase::{PhaseModel, TWO_PI};

    #[test]
    fn natural_period_is_free() {
        let m = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
        let p = assemble_nlp(&m, TWO_PI, 1.0, true, &lgl_grid(40).unwrap()).unwrap();
        let s = solve_nlp(&p, &p.initial_guess(), &NlpOptions::default()).unwrap();
        assert!(s.objective < 1e-10);
        let (_, current, _) = p.unpack(&s.x);
        assert!(current.iter().all(|i| i.abs() < 1e-5));
    }

    #[test]
    fn respects_box() {
        let m = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
        let p = assemble_nlp(&m, 4.7, 0.6, true, &lgl_grid(60).unwrap()).unwrap();
        let s = solve_nlp(&p, &p.initial_guess(), &NlpOptions::default()).unwrap();
        let (_, current, _) = p.unpack(&s.x);
        assert!(current.iter().all(|i| i.abs() <= 0.6));
        assert!(current.iter().any(|i| i.abs() == 0.6));
    }

    #[test]
    fn wide_box_matches_extremal_cost() {
        let m = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
        let p = assemble_nlp(&m, 9.0, 1e6, true, &lgl_grid(60).unwrap()).unwrap();
        let s = solve_nlp(&p, &p.initial_guess(), &NlpOptions::default()).unwrap();
        let indirect = crate::solve_extremal(&m, 9.0, true).unwrap();
        assert!((s.objective - indirect.cost).abs() < 0.01 * indirect.cost);
    }

    #[test]
    fn rejects_bad_guess() {
        let m = PhaseModel::sinusoidal(1.0, 1.0).unwrap();
        let p = assemble_nlp(&m, 5.0, 1.0, false, &lgl_grid(8).unwrap()).unwrap();
        assert!(solve_nlp(&p, &[0.0; 3], &NlpOptions::default()).is_err());
    }
}
