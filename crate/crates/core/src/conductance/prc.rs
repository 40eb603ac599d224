use std::cell::RefCell;

use super::{ConductanceModel, LimitCycle};
use crate::error::{Error, Result};
use crate::numerics::{integrate_ode, Direction, OdeConfig, Trajectory};
use crate::phase::{PrcTable, TWO_PI};

const ADJOINT_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One backward period of Ż = −J(γ(t))ᵀZ, written in reversed time
/// s = T − t so it can be integrated forward.
fn adjoint_sweep(
    model: &ConductanceModel,
    cycle: &LimitCycle,
    z_end: &[f64],
    cfg: &OdeConfig,
) -> Result<Trajectory> {
    let n = model.dimension();
    let failure = RefCell::new(None);
    let traj = integrate_ode(
        |s, z, dz| {
            let y = cycle.state_at_time(cycle.period - s);
            match model.jacobian(&y) {
                Ok(jac) => {
                    for j in 0..n {
                        dz[j] = (0..n).map(|i| jac[i * n + j] * z[i]).sum();
                    }
                }
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    dz.fill(f64::NAN);
                }
            }
        },
        z_end,
        (0.0, cycle.period),
        cfg,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    traj
}

/// Scales `z` so that z·F(γ(t)) = ω.
fn normalize(model: &ConductanceModel, cycle: &LimitCycle, t: f64, z: &mut [f64]) -> Result<()> {
    let y = cycle.state_at_time(t);
    let mut f = vec![0.0; model.dimension()];
    model.rhs(&y, 0.0, &mut f)?;
    let s = cycle.omega / dot(z, &f);
    z.iter_mut().for_each(|v| *v *= s);
    Ok(())
}

/// Periodic adjoint at phases 2πk/n, normalized once at θ = 0 so that
/// Z·F = ω there; the identity then holds along the whole cycle up to
/// integration error.
pub fn periodic_adjoint(
    model: &ConductanceModel,
    cycle: &LimitCycle,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    let cfg = OdeConfig::with_tol(1e-11, 1e-13);
    let dim = model.dimension();
    let mut z = vec![0.0; dim];
    z[0] = 1.0;
    normalize(model, cycle, 0.0, &mut z)?;
    let mut change = f64::INFINITY;
    for _ in 0..MAX_SWEEPS {
        let traj = adjoint_sweep(model, cycle, &z, &cfg)?;
        let mut next = traj.final_state().to_vec();
        normalize(model, cycle, 0.0, &mut next)?;
        let norm = dot(&next, &next).sqrt();
        change = next.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm;
        z = next;
        if change < ADJOINT_TOL {
            break;
        }
    }
    if change >= ADJOINT_TOL {
        return Err(Error::AdjointNoConvergence { change });
    }
    let traj = adjoint_sweep(model, cycle, &z, &cfg)?;
    Ok((0..n)
        .map(|k| traj.eval(cycle.period * (1.0 - k as f64 / n as f64)))
        .collect())
}

/// Largest |Z·F(γ(θ)) − ω| / ω over the adjoint samples.
pub fn normalization_residual(
    model: &ConductanceModel,
    cycle: &LimitCycle,
    adjoint: &[Vec<f64>],
) -> Result<f64> {
    let n = adjoint.len();
    let mut f = vec![0.0; model.dimension()];
    let mut worst: f64 = 0.0;
    for (k, z) in adjoint.iter().enumerate() {
        let y = cycle.state_at_time(cycle.period * k as f64 / n as f64);
        model.rhs(&y, 0.0, &mut f)?;
        worst = worst.max((dot(z, &f) - cycle.omega).abs() / cycle.omega);
    }
    Ok(worst)
}

/// PRC for current injection, Z(θ) = Z_V(θ)/C, on an `n`-point grid.
pub fn compute_prc(model: &ConductanceModel, cycle: &LimitCycle, n: usize) -> Result<PrcTable> {
    let adjoint = periodic_adjoint(model, cycle, n)?;
    let residual = normalization_residual(model, cycle, &adjoint)?;
    log::debug!("adjoint normalization residual {residual:e}");
    let c = model.capacitance();
    let z = adjoint.iter().map(|a| a[0] / c).collect();
    let theta = (0..n).map(|k| TWO_PI * k as f64 / n as f64).collect();
    PrcTable::new(theta, z, cycle.omega)
}

/// PRC by direct perturbation: the asymptotic phase shift per unit of a
/// small current impulse `eps` delivered at each phase, from a symmetric
/// ±eps difference.
pub fn direct_prc(
    model: &ConductanceModel,
    cycle: &LimitCycle,
    phases: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    let cfg = OdeConfig::with_tol(1e-12, 1e-13);
    let marker = model.marker();
    let cycles = 4usize;
    let spike_after = |y0: &[f64], t0: f64| -> Result<f64> {
        let failure = RefCell::new(None);
        let traj = integrate_ode(
            |_t, y, dy| {
                if let Err(e) = model.rhs(y, 0.0, dy) {
                    failure.borrow_mut().get_or_insert(e);
                    dy.fill(f64::NAN);
                }
            },
            y0,
            (t0, t0 + (cycles as f64 + 0.5) * cycle.period),
            &cfg,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let crossings = traj?.crossings(|_, y| y[0] - marker, Direction::Rising);
        crossings
            .get(cycles - 1)
            .map(|c| c.t)
            .ok_or_else(|| Error::NoOscillation("perturbed orbit lost its spikes".into()))
    };
    phases
        .iter()
        .map(|&theta| {
            let t0 = theta.rem_euclid(TWO_PI) / cycle.omega;
            let y = cycle.state_at_time(t0);
            let kick = eps / model.capacitance();
            let mut up = y.clone();
            up[0] += kick;
            let mut down = y;
            down[0] -= kick;
            let t_up = spike_after(&up, t0)?;
            let t_down = spike_after(&down, t0)?;
            // earlier spike = phase advance
            Ok(cycle.omega * (t_down - t_up) / (2.0 * eps))
        })
        .collect()
}
