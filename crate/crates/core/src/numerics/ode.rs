//! Dormand–Prince 5(4) with Hairer's continuous extension.
//!
//! Steps are stored with their interpolation coefficients when
//! `dense_output` is set, so trajectories can be evaluated anywhere and
//! scanned for threshold crossings after the fact.

use crate::error::{Error, Result};
use crate::numerics::roots::brent;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub dense_output: bool,
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            max_step: f64::INFINITY,
            dense_output: true,
            max_steps: 5_000_000,
        }
    }
}

impl OdeConfig {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::BadParameter("ODE tolerances must be > 0".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::BadParameter("max_step must be > 0".into()));
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step. `coeffs` holds the five interpolation vectors
/// (flattened, `5 * dim`) or is empty without dense output.
#[derive(Debug, Clone)]
struct Step {
    t0: f64,
    h: f64,
    coeffs: Vec<f64>,
}

/// Result of an integration: accepted step endpoints plus optional dense
/// interpolants.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    steps: Vec<Step>,
}

/// A located crossing of a scalar event function.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub t: f64,
    pub state: Vec<f64>,
}

/// Sign-change direction to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

impl Direction {
    fn matches(self, before: f64, after: f64) -> bool {
        match self {
            Direction::Rising => before < 0.0 && after >= 0.0,
            Direction::Falling => before > 0.0 && after <= 0.0,
            Direction::Either => (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0),
        }
    }
}

fn interpolate(coeffs: &[f64], dim: usize, s: f64, out: &mut [f64]) {
    let s1 = 1.0 - s;
    for i in 0..dim {
        let r1 = coeffs[i];
        let r2 = coeffs[dim + i];
        let r3 = coeffs[2 * dim + i];
        let r4 = coeffs[3 * dim + i];
        let r5 = coeffs[4 * dim + i];
        out[i] = r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
    }
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    pub fn has_dense_output(&self) -> bool {
        self.steps.first().is_some_and(|s| !s.coeffs.is_empty())
    }

    /// Evaluates the state at `t` inside the integrated span. Uses the dense
    /// interpolant when available and linear interpolation otherwise.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            out.copy_from_slice(&self.states[0]);
            return;
        }
        if t >= self.times[n - 1] {
            out.copy_from_slice(&self.states[n - 1]);
            return;
        }
        let k = self.times.partition_point(|&x| x <= t) - 1;
        let step = &self.steps[k];
        if step.coeffs.is_empty() {
            let s = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
            let (a, b) = (&self.states[k], &self.states[k + 1]);
            for i in 0..self.dim {
                out[i] = a[i] + s * (b[i] - a[i]);
            }
        } else {
            interpolate(&step.coeffs, self.dim, (t - step.t0) / step.h, out);
        }
    }

    /// All crossings of `event(t, y) = 0` in the requested direction,
    /// located by Brent's method on the interpolant.
    pub fn crossings<E: FnMut(f64, &[f64]) -> f64>(
        &self,
        mut event: E,
        direction: Direction,
    ) -> Vec<Crossing> {
        let mut found = Vec::new();
        let mut prev = event(self.times[0], &self.states[0]);
        for k in 0..self.steps.len() {
            let next = event(self.times[k + 1], &self.states[k + 1]);
            if direction.matches(prev, next) {
                if let Some(c) = self.locate(k, &mut event) {
                    found.push(c);
                }
            }
            prev = next;
        }
        found
    }

    fn locate<E: FnMut(f64, &[f64]) -> f64>(&self, k: usize, event: &mut E) -> Option<Crossing> {
        let (a, b) = (self.times[k], self.times[k + 1]);
        let mut buf = vec![0.0; self.dim];
        let t = brent(
            |t| {
                self.eval_into(t, &mut buf);
                Ok(event(t, &buf))
            },
            a,
            b,
            1e-14 * (1.0 + b.abs()),
        )
        .ok()?;
        Some(Crossing {
            t,
            state: self.eval(t),
        })
    }
}

struct Stepper<'a, F> {
    rhs: F,
    dim: usize,
    cfg: &'a OdeConfig,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Stepper<'_, F> {
    /// Attempts one step from (t, y) with the FSAL derivative in k[0].
    /// Returns the scaled error norm; the new state is left in `y_new` and
    /// its derivative in k[6].
    fn attempt(&mut self, t: f64, y: &[f64], h: f64) -> f64 {
        let n = self.dim;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        (self.rhs)(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        (self.rhs)(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        (self.rhs)(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        (self.rhs)(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        (self.rhs)(t + h, tmp, k6);
        for i in 0..n {
            self.y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        (self.rhs)(t + h, &self.y_new, k7);
        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].abs().max(self.y_new[i].abs());
            err += (e / sc) * (e / sc);
        }
        (err / n as f64).sqrt()
    }

    fn dense(&self, y: &[f64], h: f64) -> Vec<f64> {
        let n = self.dim;
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        let mut c = vec![0.0; 5 * n];
        for i in 0..n {
            let dy = self.y_new[i] - y[i];
            let bspl = h * k1[i] - dy;
            c[i] = y[i];
            c[n + i] = dy;
            c[2 * n + i] = bspl;
            c[3 * n + i] = dy - h * k7[i] - bspl;
            c[4 * n + i] = h
                * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        c
    }
}

fn initial_step<F: FnMut(f64, &[f64], &mut [f64])>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    cfg: &OdeConfig,
    span: f64,
) -> f64 {
    let n = y0.len() as f64;
    let sc = |i: usize| cfg.abs_tol + cfg.rel_tol * y0[i].abs();
    let d0 = (y0.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / sc(i)).powi(2)).sum::<f64>() / n).sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(cfg.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs(t0 + h0, &y1, &mut f1);
    let d2 = (f1
        .iter()
        .zip(f0)
        .enumerate()
        .map(|(i, (a, b))| ((a - b) / sc(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(cfg.max_step)
}

/// Integrates `y' = rhs(t, y)` over `[t0, t1]` (forward only).
pub fn integrate_ode<F>(rhs: F, y0: &[f64], t_span: (f64, f64), cfg: &OdeConfig) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate_impl(rhs, y0, t_span, cfg, None::<(fn(f64, &[f64]) -> f64, Direction)>)
        .map(|(traj, _)| traj)
}

/// Like [`integrate_ode`] but stops at the first crossing of `event`;
/// the trajectory is truncated at the crossing time.
pub fn integrate_until<F, E>(
    rhs: F,
    y0: &[f64],
    t_span: (f64, f64),
    cfg: &OdeConfig,
    event: E,
    direction: Direction,
) -> Result<(Trajectory, Option<Crossing>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    E: FnMut(f64, &[f64]) -> f64,
{
    integrate_impl(rhs, y0, t_span, cfg, Some((event, direction)))
}

fn integrate_impl<F, E>(
    mut rhs: F,
    y0: &[f64],
    (t0, t1): (f64, f64),
    cfg: &OdeConfig,
    mut event: Option<(E, Direction)>,
) -> Result<(Trajectory, Option<Crossing>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    E: FnMut(f64, &[f64]) -> f64,
{
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(Error::BadParameter(format!("empty time span [{t0}, {t1}]")));
    }
    let dim = y0.len();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: t0 });
    }
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; dim];
    rhs(t0, &y, &mut f0);
    if f0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState { t: t0 });
    }
    let mut h = initial_step(&mut rhs, t0, &y, &f0, cfg, t1 - t0);
    let mut stepper = Stepper {
        rhs,
        dim,
        cfg,
        k: std::array::from_fn(|_| vec![0.0; dim]),
        tmp: vec![0.0; dim],
        y_new: vec![0.0; dim],
    };
    stepper.k[0].copy_from_slice(&f0);

    let mut traj = Trajectory {
        dim,
        times: vec![t0],
        states: vec![y.clone()],
        steps: Vec::new(),
    };
    let mut ev_prev = event.as_mut().map(|(e, _)| e(t0, &y));
    let mut t = t0;
    let mut rejected_last = false;
    let mut n_steps = 0usize;
    while t < t1 {
        if n_steps >= cfg.max_steps {
            return Err(Error::TooManySteps {
                limit: cfg.max_steps,
            });
        }
        n_steps += 1;
        let mut last = false;
        if t + h >= t1 || t + 1.01 * h >= t1 {
            h = t1 - t;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let err = stepper.attempt(t, &y, h);
        if !err.is_finite() {
            if stepper.y_new.iter().all(|v| v.is_finite()) && h > 1e-12 {
                h *= 0.25;
                rejected_last = true;
                continue;
            }
            return Err(Error::NonFiniteState { t });
        }
        if err > 1.0 {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
            rejected_last = true;
            continue;
        }
        let coeffs = if cfg.dense_output || event.is_some() {
            stepper.dense(&y, h)
        } else {
            Vec::new()
        };
        let t_new = if last { t1 } else { t + h };
        if stepper.y_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { t: t_new });
        }
        traj.steps.push(Step { t0: t, h, coeffs });
        traj.times.push(t_new);
        traj.states.push(stepper.y_new.clone());

        if let Some((ev, dir)) = event.as_mut() {
            let v = ev(t_new, &stepper.y_new);
            if dir.matches(ev_prev.unwrap(), v) {
                let k = traj.steps.len() - 1;
                if let Some(hit) = traj.locate(k, ev) {
                    truncate_at(&mut traj, k, &hit);
                    if !cfg.dense_output {
                        for s in &mut traj.steps {
                            s.coeffs.clear();
                        }
                    }
                    return Ok((traj, Some(hit)));
                }
            }
            ev_prev = Some(v);
        }
        if !cfg.dense_output && event.is_some() {
            traj.steps.last_mut().unwrap().coeffs.clear();
        }

        y.copy_from_slice(&stepper.y_new);
        let (head, tail) = stepper.k.split_at_mut(6);
        head[0].copy_from_slice(&tail[0]);
        t = t_new;
        let mut fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
        if rejected_last {
            fac = fac.min(1.0);
        }
        rejected_last = false;
        h = (h * fac).min(cfg.max_step);
    }
    Ok((traj, None))
}

/// The step keeps its full-length interpolant; only the endpoint moves.
fn truncate_at(traj: &mut Trajectory, k: usize, hit: &Crossing) {
    traj.times[k + 1] = hit.t;
    traj.states[k + 1] = hit.state.clone();
}
