//! Unbounded minimum-power control from the maximum principle.
//!
//! With λ₀ = 1 the Hamiltonian H = I² + λ(f + gI) + μI is constant (= c)
//! along an extremal. Eliminating λ gives θ̇ = √(f² − gμf − g²c) and the
//! control I* = (θ̇ − f)/g, so the spiking time and net charge are phase
//! integrals in the two constants (c, μ).

use crate::error::{Error, Result};
use crate::law::{interior_costate, radicand, unclipped, Law, Scales};
use crate::numerics::{integrate_until, Direction};
use crate::phase::{PhaseModel, TWO_PI};
use crate::shooting::{Problem, SolverOptions};
use crate::solution::{ControlSolution, ExtremalParams, ExtremalSolution};

fn unbounded_law<'a>(model: &'a PhaseModel, params: &ExtremalParams) -> Result<Law<'a>> {
    Ok(Law {
        model,
        scales: Scales::of(model)?,
        c: params.c,
        mu: params.mu,
        bound: None,
    })
}

/// I*(θ) = (√(f² − gμf − g²c) − f)/g, finite through zeros of g.
pub fn eval_unbounded_control(model: &PhaseModel, params: &ExtremalParams, theta: f64) -> Result<f64> {
    let (f, g) = model.fg(theta);
    let r = radicand(f, g, params.c, params.mu);
    if r < 0.0 {
        return Err(Error::InfeasiblePhase { theta, radicand: r });
    }
    let eps_g = 1e-6 * model.max_abs_g();
    unclipped(f, g, params.c, params.mu, r.sqrt(), eps_g).ok_or(Error::NearZeroPrc { theta })
}

/// λ(θ) = (−μg + 2f − 2√(f² − gμf − g²c))/g².
pub fn eval_costate(model: &PhaseModel, params: &ExtremalParams, theta: f64) -> Result<f64> {
    let (f, g) = model.fg(theta);
    let r = radicand(f, g, params.c, params.mu);
    if r < 0.0 {
        return Err(Error::InfeasiblePhase { theta, radicand: r });
    }
    let eps_g = 1e-6 * model.max_abs_g();
    interior_costate(f, g, params.c, params.mu, r.sqrt(), eps_g).ok_or(Error::NearZeroPrc { theta })
}

/// Whether the radicand stays ≥ δ = 1e-9·ω² on the check grid.
pub fn is_feasible(model: &PhaseModel, params: &ExtremalParams) -> bool {
    unbounded_law(model, params)
        .and_then(|law| law.arcs())
        .is_ok()
}

/// T = ∫ dθ/√(f² − gμf − g²c).
pub fn spiking_time(model: &PhaseModel, params: &ExtremalParams) -> Result<f64> {
    let law = unbounded_law(model, params)?;
    let arcs = law.arcs()?;
    law.spiking_time(&arcs, &SolverOptions::default().quadrature()?)
}

/// ∫ I* dt = ∫ I*(θ)/θ̇ dθ over one cycle.
pub fn net_charge(model: &PhaseModel, params: &ExtremalParams) -> Result<f64> {
    let law = unbounded_law(model, params)?;
    let arcs = law.arcs()?;
    law.charge(&arcs, &SolverOptions::default().quadrature()?)
}

/// ∫ I*² dt over one cycle, by quadrature in phase.
pub fn control_cost(model: &PhaseModel, params: &ExtremalParams) -> Result<f64> {
    let law = unbounded_law(model, params)?;
    let arcs = law.arcs()?;
    law.cost(&arcs, &SolverOptions::default().quadrature()?)
}

pub fn solve_extremal(model: &PhaseModel, target_t: f64, charge_balanced: bool) -> Result<ExtremalSolution> {
    solve_extremal_with(model, target_t, charge_balanced, &SolverOptions::default())
}

/// Finds (c, μ) reaching `target_t`, with μ = 0 unless `charge_balanced`,
/// then integrates the phase forward under I* to fill in the audit fields.
pub fn solve_extremal_with(
    model: &PhaseModel,
    target_t: f64,
    charge_balanced: bool,
    opts: &SolverOptions,
) -> Result<ExtremalSolution> {
    let problem = Problem::new(model, target_t, None, opts)?;
    let (c, mu) = problem.solve(charge_balanced)?;
    log::debug!("extremal for T = {target_t}: c = {c}, mu = {mu}");
    problem.synthesize(c, mu, charge_balanced)
}

/// Largest |H − c| along the state–costate flow started from the
/// solution's constants at θ = 0 and integrated to θ = 2π, with the
/// control taken from the minimization condition I = −(λg + μ)/2 (clipped
/// to the bound, if any).
pub fn hamiltonian_drift(model: &PhaseModel, solution: &ControlSolution) -> Result<f64> {
    let ExtremalParams { c, mu, .. } = solution.params;
    let law = Law {
        model,
        scales: Scales::of(model)?,
        c,
        mu,
        bound: solution.bound,
    };
    let lambda0 = law.costate(0.0)?;
    let bound = solution.bound.unwrap_or(f64::INFINITY);
    let control = |theta: f64, lambda: f64| {
        let g = model.g(theta);
        (-(lambda * g + mu) / 2.0).clamp(-bound, bound)
    };
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let j = model.jet(y[0]);
        let u = control(y[0], y[1]);
        dy[0] = j.f + j.g * u;
        dy[1] = -y[1] * (j.df + j.dg * u);
    };
    let opts = SolverOptions::default();
    let (traj, _) = integrate_until(
        rhs,
        &[0.0, lambda0],
        (0.0, 4.0 * solution.achieved_t),
        &opts.ode(),
        |_, y| y[0] - TWO_PI,
        Direction::Rising,
    )?;
    let mut drift: f64 = 0.0;
    for y in &traj.states {
        let (f, g) = model.fg(y[0]);
        let u = control(y[0], y[1]);
        let h = u * u + y[1] * (f + g * u) + mu * u;
        drift = drift.max((h - c).abs());
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sinusoid() -> PhaseModel {
        PhaseModel::sinusoidal(1.0, 1.0).unwrap()
    }

    /// K(m) by the arithmetic–geometric mean.
    fn ellip_k(m: f64) -> f64 {
        let (mut a, mut b) = (1.0f64, (1.0 - m).sqrt());
        for _ in 0..60 {
            let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
            a = an;
            b = bn;
        }
        PI / (2.0 * a)
    }

    #[test]
    fn zero_constants_give_zero_control() {
        let p = ExtremalParams::unbalanced(0.0);
        for model in [sinusoid(), PhaseModel::sniper(1.0, 1.0).unwrap()] {
            for k in 0..50 {
                let t = 0.13 * k as f64;
                assert_eq!(eval_unbounded_control(&model, &p, t).unwrap(), 0.0);
                assert_eq!(eval_costate(&model, &p, t).unwrap(), 0.0);
            }
            assert!((spiking_time(&model, &p).unwrap() - TWO_PI).abs() < 1e-12);
            assert!(net_charge(&model, &p).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn limit_at_prc_zero() {
        let m = PhaseModel::sniper(1.0, 1.0).unwrap();
        let p = ExtremalParams::new(0.7, 0.3);
        assert!((eval_unbounded_control(&m, &p, 0.0).unwrap() + 0.15).abs() < 1e-15);
        let near = eval_unbounded_control(&m, &p, 1e-4).unwrap();
        assert!((near + 0.15).abs() < 1e-7);
    }

    #[test]
    fn tangency_value() {
        let p = ExtremalParams::unbalanced(-3.0);
        let u = eval_unbounded_control(&sinusoid(), &p, 0.4720).unwrap();
        assert!((u - 0.600).abs() < 5e-4, "{u}");
    }

    #[test]
    fn hamiltonian_reconstruction() {
        let m = PhaseModel::sniper(1.0, 1.0).unwrap();
        let p = ExtremalParams::new(-0.8, 0.25);
        for k in 1..100 {
            let t = 0.0628 * k as f64;
            let (f, g) = m.fg(t);
            let u = eval_unbounded_control(&m, &p, t).unwrap();
            let l = eval_costate(&m, &p, t).unwrap();
            let h = u * u + l * (f + g * u) + p.mu * u;
            assert!((h - p.c).abs() < 1e-12, "θ = {t}: H = {h}");
        }
    }

    #[test]
    fn infeasible_radicand() {
        let p = ExtremalParams::unbalanced(2.0);
        assert!(matches!(
            eval_unbounded_control(&sinusoid(), &p, PI / 2.0),
            Err(Error::InfeasiblePhase { .. })
        ));
        assert!(matches!(
            spiking_time(&sinusoid(), &p),
            Err(Error::InfeasibleParams { .. })
        ));
        assert!(!is_feasible(&sinusoid(), &p));
    }

    #[test]
    fn sinusoid_time_is_elliptic() {
        for c in [-4.1, -1.0, 0.3, 0.794, 0.95] {
            let t = spiking_time(&sinusoid(), &ExtremalParams::unbalanced(c)).unwrap();
            let exact = if c >= 0.0 {
                4.0 * ellip_k(c)
            } else {
                // imaginary-modulus transformation
                4.0 * ellip_k(-c / (1.0 - c)) / (1.0 - c).sqrt()
            };
            assert!((t - exact).abs() < 1e-10 * exact, "c = {c}: {t} vs {exact}");
        }
    }

    #[test]
    fn sniper_charge_sign() {
        let m = PhaseModel::sniper(1.0, 1.0).unwrap();
        assert!(net_charge(&m, &ExtremalParams::unbalanced(-0.5)).unwrap() > 0.0);
        assert!(net_charge(&sinusoid(), &ExtremalParams::unbalanced(-0.5)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn natural_period_needs_no_control() {
        let s = solve_extremal(&sinusoid(), TWO_PI, true).unwrap();
        assert!(s.params.c.abs() < 1e-10 && s.params.mu == 0.0);
        assert!(s.cost < 1e-18);
    }

    #[test]
    fn round_trip_and_drift() {
        let m = PhaseModel::sniper(1.0, 1.0).unwrap();
        for (t, cb) in [(5.0, false), (7.0, false), (5.0, true), (7.0, true)] {
            let s = solve_extremal(&m, t, cb).unwrap();
            let back = spiking_time(&m, &s.params).unwrap();
            assert!((back - t).abs() < 1e-8 * t);
            assert!((s.achieved_t - t).abs() < 1e-6 * t);
            if cb {
                assert!(s.net_charge.abs() < 1e-8 * s.peak_current() * t, "{}", s.net_charge);
            } else {
                assert!(s.net_charge.abs() > 1e-3);
            }
            let drift = hamiltonian_drift(&m, &s).unwrap();
            assert!(drift < 1e-6 * (1.0 + s.params.c.abs()), "drift {drift}");
        }
    }

    #[test]
    fn rejects_bad_targets() {
        assert!(matches!(solve_extremal(&sinusoid(), -1.0, false), Err(Error::BadParameter(_))));
        let flat = PhaseModel::tabulated(&crate::PrcTable::from_fn(64, 1.0, |_| 0.0)).unwrap();
        assert!(solve_extremal(&flat, 5.0, false).is_err());
    }
}
