//! Minimum-power control under an amplitude bound |I| ≤ M.
//!
//! The optimal control is the unbounded extremal clipped to ±M, with the
//! constants (c, μ) re-solved so that the clipped control still meets the
//! spiking time (and zero net charge). Arc boundaries are found
//! numerically for every PRC.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::solve_extremal_with;
use crate::law::{Law, Scales, CHECK_GRID, SWITCH_TOL};
use crate::numerics::{bisect_predicate, integrate_piecewise, integrate_periodic};
use crate::phase::{PhaseModel, TWO_PI};
use crate::shooting::{Problem, SolverOptions};
use crate::solution::{ArcKind, ControlArc, ControlSolution, ExtremalParams};

/// Spiking times reachable under |I| ≤ M. Unreachable upper ends are +∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRange {
    pub m: f64,
    /// Shortest time, reached by the speeding bang control.
    pub t_min_m: f64,
    /// Longest time, reached by the slowing bang control.
    pub t_max_m: f64,
    /// Range of times for which the unclipped extremal already respects
    /// the bound; `None` when it never does.
    pub t_istar: Option<(f64, f64)>,
}

impl FeasibleRange {
    pub fn contains(&self, t: f64) -> bool {
        t > self.t_min_m && t < self.t_max_m
    }

    pub fn t_istar_min(&self) -> Option<f64> {
        self.t_istar.map(|r| r.0)
    }

    pub fn t_istar_max(&self) -> Option<f64> {
        self.t_istar.map(|r| r.1)
    }
}

/// Arc structure of a clipped extremal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedPolicy {
    pub m: f64,
    pub params: ExtremalParams,
    pub arcs: Vec<ControlArc>,
    pub switch_phases: Vec<f64>,
}

impl BoundedPolicy {
    pub fn switch_count(&self) -> usize {
        self.switch_phases.len()
    }

    /// Total phase length of arcs of `kind`.
    pub fn measure(&self, kind: ArcKind) -> f64 {
        self.arcs.iter().filter(|a| a.kind == kind).map(|a| a.len()).sum()
    }

    pub fn interior_fraction(&self) -> f64 {
        self.measure(ArcKind::Interior) / TWO_PI
    }
}

fn check_bound(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::BadParameter(format!("bound M must be finite and > 0, got {m}")))
    }
}

/// [0, sign changes of g…, 2π] so that |g| is smooth on each piece.
fn prc_sign_breaks(model: &PhaseModel) -> Vec<f64> {
    let h = TWO_PI / CHECK_GRID as f64;
    let mut breaks = vec![0.0];
    let mut prev = model.g(0.0);
    for i in 1..=CHECK_GRID {
        let hi = i as f64 * h;
        let next = model.g(hi);
        if (prev > 0.0) != (next > 0.0) && i < CHECK_GRID {
            let lo = hi - h;
            let up = next > 0.0;
            breaks.push(bisect_predicate(|t| (model.g(t) > 0.0) == up, lo, hi, SWITCH_TOL));
        }
        prev = next;
    }
    breaks.push(TWO_PI);
    breaks
}

/// ∫ dθ/(f + s·|g|·M), or `None` if the velocity is not positive on the
/// check grid.
fn bang_time(model: &PhaseModel, m: f64, sign: f64) -> Result<Option<f64>> {
    let speed = |t: f64| {
        let (f, g) = model.fg(t);
        f + sign * g.abs() * m
    };
    let h = TWO_PI / CHECK_GRID as f64;
    if (0..CHECK_GRID).any(|i| speed(i as f64 * h) <= 0.0) {
        return Ok(None);
    }
    let spec = SolverOptions::default().quadrature()?;
    integrate_piecewise(|t| 1.0 / speed(t), &prc_sign_breaks(model), &spec).map(Some)
}

/// T_min^M: I = +M where g ≥ 0 and −M where g < 0.
pub fn bang_min_time(model: &PhaseModel, m: f64) -> Result<f64> {
    check_bound(m)?;
    match bang_time(model, m, 1.0)? {
        Some(t) => Ok(t),
        None => {
            let theta = crate::phase::sample_grid(CHECK_GRID)
                .find(|&t| {
                    let (f, g) = model.fg(t);
                    f + g.abs() * m <= 0.0
                })
                .unwrap_or(0.0);
            Err(Error::BangInfeasible { theta })
        }
    }
}

/// T_max^M: the opposite bang. +∞ when the slowing bang can stall the
/// phase, i.e. f − |g|·M ≤ 0 somewhere.
pub fn bang_max_time(model: &PhaseModel, m: f64) -> Result<f64> {
    check_bound(m)?;
    let stalls_on_grid = crate::phase::sample_grid(CHECK_GRID).any(|t| {
        let (f, g) = model.fg(t);
        f - g.abs() * m <= 0.0
    });
    if stalls_on_grid || m >= model.min_abs_f_over_g() {
        return Ok(f64::INFINITY);
    }
    Ok(bang_time(model, m, -1.0)?.unwrap_or(f64::INFINITY))
}

/// max over the check grid of |I*| for the extremal with constants (c, μ).
fn extremal_peak(model: &PhaseModel, scales: Scales, c: f64, mu: f64) -> Result<f64> {
    let law = Law {
        model,
        scales,
        c,
        mu,
        bound: None,
    };
    let mut peak: f64 = 0.0;
    for t in crate::phase::sample_grid(CHECK_GRID) {
        peak = peak.max(law.at(t)?.current.abs());
    }
    Ok(peak)
}

/// Range of T over which the unclipped extremal satisfies |I*| ≤ M.
///
/// The sinusoidal model uses the closed form; other models follow the
/// extremal family in T (solving for (c, μ) at each T) and bisect for
/// max|I*| = M on each side of the least-effort time.
pub fn istar_time_range(model: &PhaseModel, m: f64, charge_balanced: bool) -> Result<Option<(f64, f64)>> {
    check_bound(m)?;
    if let (crate::ModelKind::Sinusoidal, Some(z)) = (model.kind(), model.z_d()) {
        let (w, z) = (model.omega(), z.abs());
        let spec = SolverOptions::default().quadrature()?;
        let lo = integrate_periodic(
            |t| 1.0 / (w * w + z * m * (z * m + 2.0 * w) * t.sin().powi(2)).sqrt(),
            &spec,
        )?;
        let hi = if m >= w / z {
            f64::INFINITY
        } else {
            integrate_periodic(
                |t| 1.0 / (w * w + z * m * (z * m - 2.0 * w) * t.sin().powi(2)).sqrt(),
                &spec,
            )?
        };
        return Ok(Some((lo, hi)));
    }
    istar_range_numeric(model, m, charge_balanced)
}

fn istar_range_numeric(model: &PhaseModel, m: f64, charge_balanced: bool) -> Result<Option<(f64, f64)>> {
    let opts = SolverOptions {
        samples: 2,
        ..SolverOptions::default()
    };
    let scales = Scales::of(model)?;
    // Peak |I*| of the extremal reaching T; None when no extremal does.
    let peak = |t: f64| -> Option<f64> {
        let problem = Problem::new(model, t, None, &opts).ok()?;
        let (c, mu) = problem.solve(charge_balanced).ok()?;
        extremal_peak(model, scales, c, mu).ok()
    };
    let t_min = bang_min_time(model, m)?;
    let centre = match model.natural_period() {
        Some(t0) => t0,
        None => {
            // least-peak time by golden section on log T
            let (mut a, mut b) = ((t_min * 1.001).ln(), (t_min * 50.0).ln());
            let cost = |x: f64| peak(x.exp()).unwrap_or(f64::INFINITY);
            let gr = 0.5 * (5f64.sqrt() - 1.0);
            let (mut x1, mut x2) = (b - gr * (b - a), a + gr * (b - a));
            let (mut f1, mut f2) = (cost(x1), cost(x2));
            for _ in 0..40 {
                if f1 < f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - gr * (b - a);
                    f1 = cost(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + gr * (b - a);
                    f2 = cost(x2);
                }
            }
            let x = if f1 < f2 { x1 } else { x2 };
            x.exp()
        }
    };
    match peak(centre) {
        Some(p) if p <= m => {}
        _ => return Ok(None),
    }
    let edge = |outward: f64| -> f64 {
        // expand until the peak exceeds M or no extremal exists
        let mut inside = centre;
        let mut k = 1;
        let outside = loop {
            let t = centre * outward.powi(k);
            match peak(t) {
                Some(p) if p <= m => inside = t,
                Some(_) => break Some(t),
                None => break None,
            }
            k += 1;
            if k > 60 {
                break None;
            }
        };
        let Some(mut outside) = outside else {
            return if outward > 1.0 { f64::INFINITY } else { inside };
        };
        while (outside - inside).abs() > 1e-9 * centre {
            let mid = 0.5 * (inside + outside);
            match peak(mid) {
                Some(p) if p <= m => inside = mid,
                _ => outside = mid,
            }
        }
        0.5 * (inside + outside)
    };
    Ok(Some((edge(0.8), edge(1.25))))
}

pub fn feasible_range(model: &PhaseModel, m: f64, charge_balanced: bool) -> Result<FeasibleRange> {
    Ok(FeasibleRange {
        m,
        t_min_m: bang_min_time(model, m)?,
        t_max_m: bang_max_time(model, m)?,
        t_istar: istar_time_range(model, m, charge_balanced)?,
    })
}

/// Switch phases θ1…θ4 of the sinusoidal model in the four-switch regime,
/// with θ1 = asin(−2Mω/(z_d·M² + z_d·c)).
pub fn sinusoidal_switch_phases(omega: f64, z_d: f64, m: f64, c: f64) -> Result<[f64; 4]> {
    let argument = -2.0 * m * omega / (z_d * m * m + z_d * c);
    if !(argument > 0.0 && argument <= 1.0) {
        return Err(Error::NoSwitching { argument });
    }
    let t1 = argument.asin();
    Ok([t1, PI - t1, PI + t1, TWO_PI - t1])
}

pub fn solve_bounded(
    model: &PhaseModel,
    target_t: f64,
    m: f64,
    charge_balanced: bool,
) -> Result<(BoundedPolicy, ControlSolution)> {
    solve_bounded_with(model, target_t, m, charge_balanced, &SolverOptions::default())
}

/// Optimal control with |I| ≤ M reaching `target_t`.
///
/// If the unbounded extremal already respects the bound it is returned
/// unchanged (with the bound recorded); otherwise (c, μ) are solved for
/// the clipped law, re-detecting arcs at every evaluation.
pub fn solve_bounded_with(
    model: &PhaseModel,
    target_t: f64,
    m: f64,
    charge_balanced: bool,
    opts: &SolverOptions,
) -> Result<(BoundedPolicy, ControlSolution)> {
    check_bound(m)?;
    let t_min = bang_min_time(model, m)?;
    let t_max = bang_max_time(model, m)?;
    if !(target_t > t_min && target_t < t_max) {
        return Err(Error::OutOfRange {
            target: target_t,
            min: t_min,
            max: t_max,
        });
    }
    let problem = Problem::new(model, target_t, Some(m), opts)?;
    let unbounded = solve_extremal_with(model, target_t, charge_balanced, opts).ok();
    let within = unbounded.as_ref().is_some_and(|s| {
        problem
            .law(s.params.c, s.params.mu)
            .arcs()
            .is_ok_and(|arcs| arcs.iter().all(|a| a.kind == ArcKind::Interior))
    });
    let mut solution = match unbounded {
        Some(s) if within => s,
        _ => {
            let (c, mu) = problem.solve(charge_balanced)?;
            log::debug!("bounded extremal for T = {target_t}, M = {m}: c = {c}, mu = {mu}");
            problem.synthesize(c, mu, charge_balanced)?
        }
    };
    solution.bound = Some(m);
    if solution.switch_count() > 4 {
        log::warn!(
            "{} switches found for T = {target_t}, M = {m}",
            solution.switch_count()
        );
    }
    let policy = BoundedPolicy {
        m,
        params: solution.params,
        arcs: solution.arcs.clone(),
        switch_phases: solution.switch_phases.clone(),
    };
    Ok((policy, solution))
}

/// Largest finite-difference residual of the costate equation
/// dλ/dθ·(f + gM) + λ(f' + g'·u) = 0 on the bang arcs, with λ taken from
/// H = c on each arc.
pub fn bang_costate_residual(model: &PhaseModel, policy: &BoundedPolicy) -> f64 {
    let ExtremalParams { c, mu, .. } = policy.params;
    let lambda = |t: f64, u: f64| {
        let (f, g) = model.fg(t);
        (c - u * u - mu * u) / (f + g * u)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for arc in &policy.arcs {
        let u = match arc.kind {
            ArcKind::PlusBang => policy.m,
            ArcKind::MinusBang => -policy.m,
            ArcKind::Interior => continue,
        };
        if arc.len() <= 4.0 * h {
            continue;
        }
        for k in 1..20 {
            let t = arc.start + 2.0 * h + (arc.len() - 4.0 * h) * k as f64 / 20.0;
            let j = model.jet(t);
            let dl = (lambda(t + h, u) - lambda(t - h, u)) / (2.0 * h);
            let r = dl * (j.f + j.g * u) + lambda(t, u) * (j.df + j.dg * u);
            worst = worst.max(r.abs());
        }
    }
    worst
}
