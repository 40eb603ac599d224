//! Direct transcription of the minimum-power problem on Legendre–Gauss–Lobatto
//! nodes, and an in-repo nonlinear-program solver for it.
//!
//! Time is mapped to τ ∈ [−1, 1] by t = (τ + 1)T/2. Decision variables are
//! the node values θ̄ᵢ, Īᵢ and (when charge balance is imposed) p̄ᵢ.

mod nlp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{PhaseModel, TWO_PI};
use crate::solution::ControlSolution;

pub use nlp::{solve_nlp, solve_nlp_report, NlpOptions, NlpSolution};

/// LGL nodes, quadrature weights and differentiation matrix of order N.
#[derive(Debug, Clone)]
pub struct CollocationGrid {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub diff: DMatrix<f64>,
}

/// Legendre polynomials (L_{N−1}(t), L_N(t)) by the three-term recurrence.
fn legendre_pair(n: usize, t: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, t);
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * t * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Interior nodes are the roots of L_N′, found by Newton's method from the
/// Chebyshev–Gauss–Lobatto points.
pub fn lgl_grid(n: usize) -> Result<CollocationGrid> {
    if n < 2 {
        return Err(Error::BadParameter(format!("LGL order must be at least 2, got {n}")));
    }
    let nf = n as f64;
    let mut nodes: Vec<f64> = (0..=n)
        .map(|j| -(std::f64::consts::PI * j as f64 / nf).cos())
        .collect();
    for x in nodes.iter_mut().take(n).skip(1) {
        for _ in 0..100 {
            // (1 − t²)L_N′ = N(L_{N−1} − tL_N), and its derivative from the
            // Legendre equation.
            let (lm1, ln) = legendre_pair(n, *x);
            let q = nf * (lm1 - *x * ln);
            let dq = -nf * (nf + 1.0) * ln;
            let step = q / dq;
            *x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
    }
    nodes[0] = -1.0;
    nodes[n] = 1.0;
    let ln: Vec<f64> = nodes.iter().map(|&t| legendre_pair(n, t).1).collect();
    let weights = ln.iter().map(|l| 2.0 / (nf * (nf + 1.0) * l * l)).collect();
    let mut diff = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                diff[(i, j)] = ln[i] / (ln[j] * (nodes[i] - nodes[j]));
            }
        }
    }
    // Every diagonal entry by negative row sum, smallest terms first; the
    // corners equal ∓N(N+1)/4 in exact arithmetic.
    for i in 0..=n {
        let mut off: Vec<f64> = (0..=n).filter(|&j| j != i).map(|j| diff[(i, j)]).collect();
        off.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        diff[(i, i)] = -off.iter().sum::<f64>();
    }
    Ok(CollocationGrid {
        n,
        nodes,
        weights,
        diff,
    })
}

/// The discretized problem: minimize (T/2)Σ wᵢĪᵢ² subject to collocation
/// defects at every node, the boundary pins, and |Īᵢ| ≤ M.
///
/// Variables are laid out as [θ̄₀..θ̄_N, Ī₀..Ī_N, p̄₀..p̄_N], the last block
/// present only with charge balance. Constraints are scaled to O(1):
/// θ-defects by the model's rate, p-defects by its natural current.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    pub model: PhaseModel,
    pub target_t: f64,
    pub bound: f64,
    pub charge_balanced: bool,
    pub grid: CollocationGrid,
    rate: f64,
    current_unit: f64,
}

pub fn assemble_nlp(
    model: &PhaseModel,
    target_t: f64,
    bound: f64,
    charge_balanced: bool,
    grid: &CollocationGrid,
) -> Result<NlpProblem> {
    if !(target_t.is_finite() && target_t > 0.0) {
        return Err(Error::BadParameter(format!("target time must be positive, got {target_t}")));
    }
    if bound.is_nan() || bound <= 0.0 {
        return Err(Error::BadParameter(format!("current bound must be positive, got {bound}")));
    }
    let rate = model.rate_scale();
    let max_g = model.max_abs_g();
    if max_g <= 0.0 {
        return Err(Error::BadParameter("PRC vanishes identically".into()));
    }
    Ok(NlpProblem {
        model: model.clone(),
        target_t,
        bound,
        charge_balanced,
        grid: grid.clone(),
        rate,
        current_unit: rate / max_g,
    })
}

impl NlpProblem {
    pub fn nodes(&self) -> usize {
        self.grid.n + 1
    }

    pub fn n_vars(&self) -> usize {
        self.nodes() * if self.charge_balanced { 3 } else { 2 }
    }

    pub fn n_constraints(&self) -> usize {
        if self.charge_balanced {
            2 * self.nodes() + 4
        } else {
            self.nodes() + 2
        }
    }

    /// Physical node times t = (τ + 1)T/2.
    pub fn times(&self) -> Vec<f64> {
        self.grid
            .nodes
            .iter()
            .map(|tau| 0.5 * (tau + 1.0) * self.target_t)
            .collect()
    }

    pub fn lower_bounds(&self) -> DVector<f64> {
        self.box_bounds(-1.0)
    }

    pub fn upper_bounds(&self) -> DVector<f64> {
        self.box_bounds(1.0)
    }

    fn box_bounds(&self, sign: f64) -> DVector<f64> {
        let k = self.nodes();
        DVector::from_fn(self.n_vars(), |i, _| {
            if (k..2 * k).contains(&i) {
                sign * self.bound
            } else {
                sign * f64::INFINITY
            }
        })
    }

    /// (θ̄, Ī, p̄) views; p̄ is empty without charge balance.
    pub fn unpack<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let k = self.nodes();
        let p = if self.charge_balanced { &x[2 * k..3 * k] } else { &x[0..0] };
        (&x[..k], &x[k..2 * k], p)
    }

    fn objective_unit(&self) -> f64 {
        self.current_unit * self.current_unit * self.target_t
    }

    /// (T/2) Σ wᵢĪᵢ².
    pub fn objective(&self, x: &[f64]) -> f64 {
        let (_, current, _) = self.unpack(x);
        0.5 * self.target_t
            * current
                .iter()
                .zip(&self.grid.weights)
                .map(|(i, w)| w * i * i)
                .sum::<f64>()
    }

    pub(crate) fn scaled_objective(&self, x: &[f64]) -> f64 {
        self.objective(x) / self.objective_unit()
    }

    pub(crate) fn scaled_objective_gradient(&self, x: &[f64]) -> DVector<f64> {
        let k = self.nodes();
        let (_, current, _) = self.unpack(x);
        let s = self.target_t / self.objective_unit();
        let mut g = DVector::zeros(self.n_vars());
        for i in 0..k {
            g[k + i] = s * self.grid.weights[i] * current[i];
        }
        g
    }

    /// Adds the scaled objective's Hessian to `h`.
    pub(crate) fn add_objective_hessian(&self, h: &mut DMatrix<f64>) {
        let k = self.nodes();
        let s = self.target_t / self.objective_unit();
        for i in 0..k {
            h[(k + i, k + i)] += s * self.grid.weights[i];
        }
    }

    /// Scaled constraint residuals: θ-defects, θ pins, then (with charge
    /// balance) p-defects and p pins.
    pub fn constraints(&self, x: &[f64]) -> DVector<f64> {
        let k = self.nodes();
        let (theta, current, p) = self.unpack(x);
        let d = &self.grid.diff;
        let h = 2.0 / self.target_t;
        let mut c = DVector::zeros(self.n_constraints());
        for i in 0..k {
            let dtheta: f64 = (0..k).map(|j| d[(i, j)] * theta[j]).sum();
            let (f, g) = self.model.fg(theta[i]);
            c[i] = (h * dtheta - f - current[i] * g) / self.rate;
        }
        c[k] = theta[0] / TWO_PI;
        c[k + 1] = theta[k - 1] / TWO_PI - 1.0;
        if self.charge_balanced {
            let base = k + 2;
            for i in 0..k {
                let dp: f64 = (0..k).map(|j| d[(i, j)] * p[j]).sum();
                c[base + i] = (h * dp - current[i]) / self.current_unit;
            }
            let q = self.current_unit * self.target_t;
            c[base + k] = p[0] / q;
            c[base + k + 1] = p[k - 1] / q;
        }
        c
    }

    /// Internal row weights: quadrature weights (normalized to mean one) on
    /// defect rows, one on pins.
    pub(crate) fn row_weights(&self) -> DVector<f64> {
        let k = self.nodes();
        let w = &self.grid.weights;
        let norm = 0.5 * k as f64;
        DVector::from_fn(self.n_constraints(), |r, _| {
            let i = if r >= k + 2 { r - k - 2 } else { r };
            if i < k { norm * w[i] } else { 1.0 }
        })
    }

    pub fn constraint_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let k = self.nodes();
        let (theta, current, _) = self.unpack(x);
        let d = &self.grid.diff;
        let h = 2.0 / self.target_t;
        let mut a = DMatrix::zeros(self.n_constraints(), self.n_vars());
        for i in 0..k {
            for j in 0..k {
                a[(i, j)] = h * d[(i, j)] / self.rate;
            }
            let jet = self.model.jet(theta[i]);
            a[(i, i)] -= (jet.df + current[i] * jet.dg) / self.rate;
            a[(i, k + i)] = -jet.g / self.rate;
        }
        a[(k, 0)] = 1.0 / TWO_PI;
        a[(k + 1, k - 1)] = 1.0 / TWO_PI;
        if self.charge_balanced {
            let base = k + 2;
            for i in 0..k {
                for j in 0..k {
                    a[(base + i, 2 * k + j)] = h * d[(i, j)] / self.current_unit;
                }
                a[(base + i, k + i)] = -1.0 / self.current_unit;
            }
            let q = self.current_unit * self.target_t;
            a[(base + k, 2 * k)] = 1.0 / q;
            a[(base + k + 1, 3 * k - 1)] = 1.0 / q;
        }
        a
    }

    /// Adds Σ yⱼ∇²cⱼ to `h`. Only the θ-defects are nonlinear.
    pub(crate) fn add_constraint_hessian(&self, x: &[f64], y: &DVector<f64>, h: &mut DMatrix<f64>) {
        let k = self.nodes();
        let (theta, current, _) = self.unpack(x);
        for i in 0..k {
            let jet = self.model.jet(theta[i]);
            let w = y[i] / self.rate;
            h[(i, i)] -= w * (jet.ddf + current[i] * jet.ddg);
            h[(i, k + i)] -= w * jet.dg;
            h[(k + i, i)] -= w * jet.dg;
        }
    }

    /// θ linear from 0 to 2π, Ī ≡ 0, p̄ ≡ 0.
    pub fn initial_guess(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars()];
        for (i, tau) in self.grid.nodes.iter().enumerate() {
            x[i] = 0.5 * (tau + 1.0) * TWO_PI;
        }
        x
    }

    /// Node values of an indirect solution, clipped into the box.
    pub fn guess_from(&self, solution: &ControlSolution) -> Vec<f64> {
        let k = self.nodes();
        let mut x = vec![0.0; self.n_vars()];
        let samples = &solution.samples;
        let n = samples.len();
        let scale = solution.achieved_t / self.target_t;
        for (i, t) in self.times().into_iter().enumerate() {
            let ts = t * scale;
            let at = |f: fn(&crate::ControlSample) -> f64| {
                crate::numerics::local_cubic(n, |j| samples[j].t, |j| f(&samples[j]), ts)
            };
            x[i] = at(|s| s.theta);
            x[k + i] = at(|s| s.current).clamp(-self.bound, self.bound);
            if self.charge_balanced {
                x[2 * k + i] = at(|s| s.charge);
            }
        }
        x
    }
}

/// A solved transcription, unpacked at the nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectSolution {
    pub n: usize,
    pub tau: Vec<f64>,
    pub t: Vec<f64>,
    pub theta: Vec<f64>,
    pub current: Vec<f64>,
    /// Accumulated charge; zeros when charge balance was not imposed.
    pub charge: Vec<f64>,
    pub objective: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub warm_started: bool,
}

impl DirectSolution {
    fn new(problem: &NlpProblem, sol: &NlpSolution, warm_started: bool) -> Self {
        let (theta, current, p) = problem.unpack(&sol.x);
        let k = problem.nodes();
        Self {
            n: problem.grid.n,
            tau: problem.grid.nodes.clone(),
            t: problem.times(),
            theta: theta.to_vec(),
            current: current.to_vec(),
            charge: if p.is_empty() { vec![0.0; k] } else { p.to_vec() },
            objective: sol.objective,
            stationarity: sol.stationarity,
            feasibility: sol.feasibility,
            warm_started,
        }
    }

    /// Control at time `t` by local cubic interpolation between nodes.
    pub fn current_at(&self, t: f64) -> f64 {
        crate::numerics::local_cubic(self.t.len(), |i| self.t[i], |i| self.current[i], t)
    }

    pub fn peak_current(&self) -> f64 {
        self.current.iter().fold(0.0, |a, c| a.max(c.abs()))
    }
}

/// Solves the transcription from the default guess, falling back to a
/// warm start from `fallback` (typically the indirect solution).
pub fn solve_direct(
    problem: &NlpProblem,
    fallback: Option<&ControlSolution>,
    opts: &NlpOptions,
) -> Result<DirectSolution> {
    match solve_nlp(problem, &problem.initial_guess(), opts) {
        Ok(sol) => Ok(DirectSolution::new(problem, &sol, false)),
        Err(e) if e.is_convergence_failure() => match fallback {
            Some(warm) => {
                log::info!("cold start failed ({e}); warm-starting from the indirect solution");
                let sol = solve_nlp(problem, &problem.guess_from(warm), opts)?;
                Ok(DirectSolution::new(problem, &sol, true))
            }
            None => Err(e),
        },
        Err(e) => Err(e),
    }
}
