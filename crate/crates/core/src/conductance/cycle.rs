use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::ConductanceModel;
use crate::error::{Error, Result};
use crate::numerics::{integrate_ode, Direction, OdeConfig, Trajectory};
use crate::phase::TWO_PI;

/// Settings for locating the attracting cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    /// Spikes discarded as transient before the period is measured.
    pub transient_spikes: usize,
    /// Longest simulated time allowed for the transient.
    pub budget: f64,
    /// Relative state change over one period at which the cycle counts as
    /// closed.
    pub closure_tol: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Phase samples stored in the cycle.
    pub samples: usize,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            transient_spikes: 20,
            budget: 2000.0,
            closure_tol: 1e-9,
            rel_tol: 1e-11,
            abs_tol: 1e-12,
            samples: 512,
        }
    }
}

/// One period of the attracting orbit, starting at a spike (θ = 0).
#[derive(Debug, Clone)]
pub struct LimitCycle {
    pub period: f64,
    pub omega: f64,
    /// State at θ = 2πk/n, k = 0..n.
    pub samples: Vec<Vec<f64>>,
    trajectory: Trajectory,
}

impl LimitCycle {
    pub fn start(&self) -> &[f64] {
        &self.samples[0]
    }

    /// State a time `t` ∈ [0, period] after the spike.
    pub fn state_at_time(&self, t: f64) -> Vec<f64> {
        self.trajectory.eval(t.clamp(0.0, self.period))
    }

    pub fn state_at_phase(&self, theta: f64) -> Vec<f64> {
        self.state_at_time(theta.rem_euclid(TWO_PI) / self.omega)
    }

    /// |γ(T) − γ(0)| / |γ(0)|.
    pub fn closure_error(&self) -> f64 {
        let a = self.trajectory.eval(0.0);
        let b = self.trajectory.eval(self.period);
        let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        d / a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// (t, V) pairs at the trajectory's own steps.
    pub fn voltage_trace(&self) -> Vec<(f64, f64)> {
        self.trajectory
            .times
            .iter()
            .zip(&self.trajectory.states)
            .map(|(t, y)| (*t, y[0]))
            .collect()
    }
}

pub fn find_limit_cycle(model: &ConductanceModel) -> Result<LimitCycle> {
    find_limit_cycle_with(model, &CycleConfig::default())
}

fn run(model: &ConductanceModel, y0: &[f64], span: (f64, f64), cfg: &OdeConfig) -> Result<Trajectory> {
    let failure = RefCell::new(None);
    let traj = integrate_ode(
        |_t, y, dy| {
            if let Err(e) = model.rhs(y, 0.0, dy) {
                failure.borrow_mut().get_or_insert(e);
                dy.fill(f64::NAN);
            }
        },
        y0,
        span,
        cfg,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    traj
}

/// Upward marker crossings after `after`.
fn spikes(model: &ConductanceModel, traj: &Trajectory, after: f64) -> Vec<(f64, Vec<f64>)> {
    let marker = model.marker();
    traj.crossings(|_, y| y[0] - marker, Direction::Rising)
        .into_iter()
        .filter(|c| c.t > after)
        .map(|c| (c.t, c.state))
        .collect()
}

/// Integrates past the transient, then iterates the one-period return map
/// from spike to spike until the orbit closes.
pub fn find_limit_cycle_with(model: &ConductanceModel, cfg: &CycleConfig) -> Result<LimitCycle> {
    let ode = OdeConfig::with_tol(cfg.rel_tol, cfg.abs_tol);
    let warm = run(model, &model.initial_state(), (0.0, cfg.budget), &ode)?;
    let found = spikes(model, &warm, 0.0);
    if found.len() < 2 {
        return Err(Error::NoOscillation(format!(
            "{} spike(s) in {} time units",
            found.len(),
            cfg.budget
        )));
    }
    let k = cfg.transient_spikes.min(found.len() - 2);
    let mut period = found[k + 1].0 - found[k].0;
    let mut y = found[k].1.clone();
    let mut closure = f64::INFINITY;
    for _ in 0..60 {
        let traj = run(model, &y, (0.0, 1.5 * period), &ode)?;
        let (t, next) = spikes(model, &traj, 0.5 * period)
            .into_iter()
            .next()
            .ok_or_else(|| Error::NoOscillation("orbit stopped spiking".into()))?;
        let norm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        closure = y.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm;
        period = t;
        y = next;
        if closure < cfg.closure_tol {
            break;
        }
    }
    if closure > 1e-6 {
        return Err(Error::NoOscillation(format!(
            "orbit did not close (relative mismatch {closure:e})"
        )));
    }
    let trajectory = run(model, &y, (0.0, period), &ode)?;
    if let Some(bad) = trajectory.states.iter().find(|s| !model.gating_in_range(s, 1e-9)) {
        return Err(Error::BadParameter(format!("gating variable left [0, 1]: {bad:?}")));
    }
    let omega = TWO_PI / period;
    let n = cfg.samples.max(2);
    let samples = (0..n)
        .map(|i| trajectory.eval(period * i as f64 / n as f64))
        .collect();
    log::debug!("{} cycle: period {period}, closure {closure:e}", model.kind());
    Ok(LimitCycle {
        period,
        omega,
        samples,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hh_period() {
        let c = find_limit_cycle(&ConductanceModel::hodgkin_huxley()).unwrap();
        assert!((c.period - 14.64).abs() < 0.01, "{}", c.period);
        assert!(c.closure_error() < 1e-6);
        assert_eq!(c.omega, TWO_PI / c.period);
        assert!((c.start()[0] - 0.0).abs() < 1e-9);
    }

    #[test]
    fn ml_period() {
        let c = find_limit_cycle(&ConductanceModel::morris_lecar()).unwrap();
        assert!((c.period - 22.202).abs() < 0.01, "{}", c.period);
        let (lo, hi) = c
            .voltage_trace()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, v)| (a.min(*v), b.max(*v)));
        assert!(lo < 0.05 && hi > 0.05);
    }

    #[test]
    fn resting_hh_does_not_oscillate() {
        let mut m = ConductanceModel::hodgkin_huxley();
        m.set_param("i_b", 0.0).unwrap();
        let cfg = CycleConfig {
            budget: 500.0,
            ..CycleConfig::default()
        };
        assert!(matches!(
            find_limit_cycle_with(&m, &cfg),
            Err(Error::NoOscillation(_))
        ));
    }
}
