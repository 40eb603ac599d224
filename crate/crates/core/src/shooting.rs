//! Root finding for the extremal constants (c, μ) and forward synthesis of
//! the resulting stimulus.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::{switch_phases, Law, Scales};
use crate::numerics::{
    brent, find_root_2d, integrate_until, Direction, OdeConfig, QuadratureSpec, RootFindConfig,
};
use crate::phase::{PhaseModel, TWO_PI};
use crate::solution::{ControlSample, ControlSolution, ExtremalParams};

/// Relative mismatch between achieved and target spiking time that a
/// synthesized solution must meet.
pub const TIME_TOLERANCE: f64 = 1e-6;

/// Numerical settings for the indirect solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub quad_panels: usize,
    pub quad_points: usize,
    pub quad_tol: f64,
    pub root_max_iters: usize,
    pub root_tol: f64,
    pub ode_rel_tol: f64,
    pub ode_abs_tol: f64,
    /// Number of uniform time samples in the returned solution.
    pub samples: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            quad_panels: 64,
            quad_points: 8,
            quad_tol: 1e-11,
            root_max_iters: 60,
            root_tol: 1e-11,
            ode_rel_tol: 1e-11,
            ode_abs_tol: 1e-13,
            samples: 2049,
        }
    }
}

impl SolverOptions {
    pub fn quadrature(&self) -> Result<QuadratureSpec> {
        QuadratureSpec::new(self.quad_panels, self.quad_points, self.quad_tol)
    }

    pub fn root_config(&self) -> RootFindConfig {
        RootFindConfig {
            max_iters: self.root_max_iters,
            residual_tol: self.root_tol,
            ..RootFindConfig::default()
        }
    }

    pub fn ode(&self) -> OdeConfig {
        OdeConfig::with_tol(self.ode_rel_tol, self.ode_abs_tol)
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrature()?;
        self.root_config().validate()?;
        self.ode().validate()?;
        if self.samples < 2 {
            return Err(Error::BadParameter("need at least 2 samples".into()));
        }
        Ok(())
    }
}

pub(crate) struct Evaluation {
    pub time: f64,
    pub charge: f64,
}

/// A spiking-time target for one model and (optional) amplitude bound.
pub(crate) struct Problem<'a> {
    pub model: &'a PhaseModel,
    pub scales: Scales,
    pub bound: Option<f64>,
    pub target: f64,
    quad: QuadratureSpec,
    opts: SolverOptions,
}

impl<'a> Problem<'a> {
    pub fn new(
        model: &'a PhaseModel,
        target: f64,
        bound: Option<f64>,
        opts: &SolverOptions,
    ) -> Result<Self> {
        opts.validate()?;
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::BadParameter(format!(
                "target spiking time must be > 0, got {target}"
            )));
        }
        if let Some(m) = bound {
            if !(m > 0.0) || m.is_nan() {
                return Err(Error::BadParameter(format!("bound M must be > 0, got {m}")));
            }
        }
        Ok(Self {
            model,
            scales: Scales::of(model)?,
            bound: bound.filter(|m| m.is_finite()),
            target,
            quad: opts.quadrature()?,
            opts: *opts,
        })
    }

    pub fn law(&self, c: f64, mu: f64) -> Law<'a> {
        Law {
            model: self.model,
            scales: self.scales,
            c,
            mu,
            bound: self.bound,
        }
    }

    pub fn evaluate(&self, c: f64, mu: f64) -> Result<Evaluation> {
        let law = self.law(c, mu);
        let arcs = law.arcs()?;
        let time = law.spiking_time(&arcs, &self.quad)?;
        let charge = law.charge(&arcs, &self.quad)?;
        Ok(Evaluation { time, charge })
    }

    fn time(&self, c: f64, mu: f64) -> Result<f64> {
        let law = self.law(c, mu);
        let arcs = law.arcs()?;
        law.spiking_time(&arcs, &self.quad)
    }

    /// Largest c for which the radicand stays ≥ δ wherever the control
    /// cannot fall back on a slowing bang; +∞ when there is no such phase.
    pub fn c_sup(&self, mu: f64) -> f64 {
        let h = TWO_PI / crate::law::CHECK_GRID as f64;
        let mut sup = f64::INFINITY;
        for i in 0..crate::law::CHECK_GRID {
            let (f, g) = self.model.fg(i as f64 * h);
            let slow_ok = self.bound.is_some_and(|m| f - g.abs() * m > 0.0);
            if slow_ok {
                continue;
            }
            if g == 0.0 {
                if f * f < self.scales.delta {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            sup = sup.min((f * f - g * mu * f - self.scales.delta) / (g * g));
        }
        sup
    }

    /// Solves T(c, μ) = target for c at fixed μ. T is nondecreasing in c.
    pub fn solve_c(&self, mu: f64) -> Result<f64> {
        let unit = self.scales.hamiltonian();
        let target = self.target;
        let sup = self.c_sup(mu);
        if sup == f64::NEG_INFINITY {
            return Err(Error::Infeasible(
                "phase velocity vanishes where the PRC is zero".into(),
            ));
        }
        let (hi, t_hi) = if sup.is_finite() {
            let mut back = 1e-12 * unit.max(sup.abs());
            let mut found = None;
            for _ in 0..80 {
                match self.time(sup - back, mu) {
                    Ok(t) => {
                        found = Some((sup - back, t));
                        break;
                    }
                    Err(e) if e.is_infeasible() => back *= 4.0,
                    Err(e) => return Err(e),
                }
            }
            let (c, t) = found.ok_or_else(|| {
                Error::Infeasible(format!("no feasible constants below c = {sup}"))
            })?;
            if t < target {
                return Err(Error::OutOfRange {
                    target,
                    min: 0.0,
                    max: t,
                });
            }
            (c, t)
        } else {
            let mut step = 0.0;
            let mut found = None;
            for k in 0..80 {
                let c = step;
                let t = self.time(c, mu)?;
                if t >= target {
                    found = Some((c, t));
                    break;
                }
                step = unit * 2f64.powi(k);
            }
            found.ok_or(Error::OutOfRange {
                target,
                min: 0.0,
                max: f64::INFINITY,
            })?
        };
        if t_hi == target {
            return Ok(hi);
        }
        let mut lo = None;
        for k in 0..80 {
            let c = hi - unit * 2f64.powi(k - 4);
            let t = self.time(c, mu)?;
            if t < target {
                lo = Some(c);
                break;
            }
        }
        let lo = lo.ok_or(Error::OutOfRange {
            target,
            min: t_hi,
            max: f64::INFINITY,
        })?;
        let xtol = 1e-15 * (unit + lo.abs().max(hi.abs()));
        brent(|c| Ok(self.time(c, mu)? - target), lo, hi, xtol)
    }

    /// Constants (c, μ). With `charge_balanced` the net charge is driven to
    /// zero by a 2-D Newton iteration started from the μ = 0 solution, with
    /// a nested bracketing search on μ as fallback.
    pub fn solve(&self, charge_balanced: bool) -> Result<(f64, f64)> {
        if !charge_balanced || self.model.has_charge_symmetry() {
            return Ok((self.solve_c(0.0)?, 0.0));
        }
        let cu = self.scales.hamiltonian();
        let mu_unit = self.scales.current();
        let q_unit = self.target * mu_unit;
        let start = self.solve_c(0.0).map(|c| [c / cu, 0.0]).unwrap_or([0.0, 0.0]);
        let residual = |x: [f64; 2]| -> Result<[f64; 2]> {
            let e = self.evaluate(x[0] * cu, x[1] * mu_unit)?;
            Ok([(e.time - self.target) / self.target, e.charge / q_unit])
        };
        match find_root_2d(residual, start, &self.opts.root_config()) {
            Ok(x) => return Ok((x[0] * cu, x[1] * mu_unit)),
            Err(e) => log::debug!("Newton on (c, mu) failed ({e}); bracketing on mu"),
        }
        self.solve_nested()
    }

    fn solve_nested(&self) -> Result<(f64, f64)> {
        let mu_unit = self.scales.current();
        let charge_at = |mu: f64| -> Result<(f64, f64)> {
            let c = self.solve_c(mu)?;
            Ok((c, self.evaluate(c, mu)?.charge))
        };
        let (c0, q0) = charge_at(0.0)?;
        if q0 == 0.0 {
            return Ok((c0, 0.0));
        }
        // More positive μ penalizes positive charge, so search that way first.
        let first = q0.signum();
        let mut bracket = None;
        'dirs: for dir in [first, -first] {
            for k in 0..50 {
                let mu = dir * mu_unit * 0.01 * 2f64.powi(k);
                match charge_at(mu) {
                    Ok((_, q)) if q.signum() != q0.signum() => {
                        bracket = Some(mu);
                        break 'dirs;
                    }
                    Ok(_) => {}
                    Err(_) => break,
                }
            }
        }
        let far = bracket.ok_or_else(|| {
            Error::Infeasible(format!(
                "no charge-balanced extremal reaches T = {}",
                self.target
            ))
        })?;
        let xtol = 1e-14 * mu_unit;
        let mu = brent(|mu| charge_at(mu).map(|(_, q)| q), 0.0, far, xtol)?;
        Ok((self.solve_c(mu)?, mu))
    }

    /// Integrates θ̇ = f + g·I, ṗ = I, J̇ = I² from θ = 0 until θ = 2π.
    pub fn synthesize(&self, c: f64, mu: f64, charge_balanced: bool) -> Result<ControlSolution> {
        let law = self.law(c, mu);
        let arcs = law.arcs()?;
        let failure = RefCell::new(None);
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| match law.at(y[0]) {
            Ok(p) => {
                dy[0] = p.speed;
                dy[1] = p.current;
                dy[2] = p.current * p.current;
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                dy.fill(f64::NAN);
            }
        };
        let run = integrate_until(
            rhs,
            &[0.0, 0.0, 0.0],
            (0.0, 4.0 * self.target),
            &self.opts.ode(),
            |_, y| y[0] - TWO_PI,
            Direction::Rising,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let (traj, crossing) = run?;
        let crossing = crossing.ok_or_else(|| {
            Error::Infeasible("phase did not complete a cycle under the control".into())
        })?;
        let achieved = crossing.t;
        let rel = (achieved - self.target).abs() / self.target;
        if rel > TIME_TOLERANCE {
            return Err(Error::NoConvergence {
                iters: 0,
                residual: rel,
            });
        }
        let n = self.opts.samples;
        let mut samples = Vec::with_capacity(n);
        let mut y = vec![0.0; 3];
        for k in 0..n {
            let t = achieved * k as f64 / (n - 1) as f64;
            if k + 1 == n {
                y.copy_from_slice(&crossing.state);
                y[0] = TWO_PI;
            } else {
                traj.eval_into(t, &mut y);
            }
            let current = law.at(y[0])?.current;
            samples.push(ControlSample {
                t,
                theta: y[0],
                current,
                charge: y[1],
            });
        }
        let params = ExtremalParams {
            c,
            mu,
            lambda0: 1.0,
            charge_balanced,
        };
        Ok(ControlSolution {
            params,
            bound: self.bound,
            target_t: self.target,
            achieved_t: achieved,
            cost: crossing.state[2],
            net_charge: crossing.state[1],
            switch_phases: switch_phases(&arcs),
            arcs,
            samples,
        })
    }
}
