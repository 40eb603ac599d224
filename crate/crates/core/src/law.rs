//! Pointwise evaluation of the (optionally clipped) extremal control and
//! the phase integrals built from it.

use crate::error::{Error, Result};
use crate::numerics::{bisect_predicate, integrate_piecewise, QuadratureSpec};
use crate::phase::{PhaseModel, TWO_PI};
use crate::solution::{ArcKind, ControlArc};

/// Points on the feasibility and arc-detection grid.
pub(crate) const CHECK_GRID: usize = 4096;
/// Width to which arc boundaries are refined.
pub(crate) const SWITCH_TOL: f64 = 1e-12;

/// Magnitudes used to scale tolerances for one model.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scales {
    pub rate: f64,
    pub max_g: f64,
    /// Smallest radicand accepted on the check grid.
    pub delta: f64,
    /// |g| below which the direct control formula is not used.
    pub eps_g: f64,
}

impl Scales {
    pub fn of(model: &PhaseModel) -> Result<Self> {
        if model.is_uncontrollable() {
            return Err(Error::BadParameter(
                "phase response vanishes everywhere; the phase cannot be controlled".into(),
            ));
        }
        let rate = model.rate_scale();
        let max_g = model.max_abs_g();
        Ok(Self {
            rate,
            max_g,
            delta: 1e-9 * rate * rate,
            eps_g: 1e-6 * max_g,
        })
    }

    /// Natural current unit ω/max|g|.
    pub fn current(&self) -> f64 {
        self.rate / self.max_g
    }

    /// Natural unit of the Hamiltonian constant.
    pub fn hamiltonian(&self) -> f64 {
        self.current() * self.current()
    }

    pub fn min_speed(&self) -> f64 {
        self.delta.sqrt()
    }
}

/// f² − gμf − g²c.
pub(crate) fn radicand(f: f64, g: f64, c: f64, mu: f64) -> f64 {
    f * f - g * mu * f - g * g * c
}

/// Unclipped control (√R − f)/g given `s = √R`.
///
/// For f > 0 the rationalized form −(μf + gc)/(f + √R) is used, which is
/// exact and stays accurate as g → 0 (limit −μ/2). `None` when f ≤ 0 and
/// |g| < `eps_g`.
pub(crate) fn unclipped(f: f64, g: f64, c: f64, mu: f64, s: f64, eps_g: f64) -> Option<f64> {
    if f > 0.0 {
        Some(-(mu * f + g * c) / (f + s))
    } else if g.abs() >= eps_g {
        Some((s - f) / g)
    } else {
        None
    }
}

/// Costate (−μg + 2f − 2√R)/g², rationalized like [`unclipped`].
pub(crate) fn interior_costate(f: f64, g: f64, c: f64, mu: f64, s: f64, eps_g: f64) -> Option<f64> {
    if f > 0.0 {
        let d = f + s;
        Some((2.0 * c + mu * (mu * f + g * c) / d) / d)
    } else if g.abs() >= eps_g {
        Some((-mu * g + 2.0 * f - 2.0 * s) / (g * g))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LawPoint {
    pub current: f64,
    /// Phase velocity f + g·I.
    pub speed: f64,
    pub kind: ArcKind,
}

/// The extremal control for fixed (c, μ), clipped to ±M when bounded.
///
/// Where the radicand is negative the unclipped extremal does not exist;
/// with a bound the control there is the slowing bang −sign(g)·M, which is
/// the limit of the clipped control as the radicand reaches zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Law<'a> {
    pub model: &'a PhaseModel,
    pub scales: Scales,
    pub c: f64,
    pub mu: f64,
    pub bound: Option<f64>,
}

impl<'a> Law<'a> {
    pub fn at(&self, theta: f64) -> Result<LawPoint> {
        let (f, g) = self.model.fg(theta);
        let r = radicand(f, g, self.c, self.mu);
        if r >= 0.0 {
            let s = r.sqrt();
            let u = unclipped(f, g, self.c, self.mu, s, self.scales.eps_g)
                .ok_or(Error::NearZeroPrc { theta })?;
            return match self.bound {
                Some(m) if u > m => bang(theta, f, g, m),
                Some(m) if u < -m => bang(theta, f, g, -m),
                _ => Ok(LawPoint {
                    current: u,
                    speed: s,
                    kind: ArcKind::Interior,
                }),
            };
        }
        match self.bound {
            Some(m) => {
                let u = if g > 0.0 { -m } else { m };
                if f + g * u > 0.0 {
                    bang(theta, f, g, u)
                } else {
                    Err(Error::InfeasiblePhase { theta, radicand: r })
                }
            }
            None => Err(Error::InfeasiblePhase { theta, radicand: r }),
        }
    }

    /// Costate λ(θ) consistent with H = c for the control in force at θ.
    pub fn costate(&self, theta: f64) -> Result<f64> {
        let p = self.at(theta)?;
        let (f, g) = self.model.fg(theta);
        match p.kind {
            ArcKind::Interior => {
                let s = p.speed;
                interior_costate(f, g, self.c, self.mu, s, self.scales.eps_g)
                    .ok_or(Error::NearZeroPrc { theta })
            }
            _ => {
                let u = p.current;
                Ok((self.c - u * u - self.mu * u) / (f + g * u))
            }
        }
    }

    fn infeasible(&self) -> Error {
        Error::InfeasibleParams {
            c: self.c,
            mu: self.mu,
        }
    }

    /// Checks feasibility on the grid and partitions [0, 2π) into arcs.
    /// Unbounded laws yield a single interior arc.
    pub fn arcs(&self) -> Result<Vec<ControlArc>> {
        let h = TWO_PI / CHECK_GRID as f64;
        let min_speed = self.scales.min_speed();
        let mut kinds = Vec::with_capacity(CHECK_GRID);
        for i in 0..CHECK_GRID {
            let theta = i as f64 * h;
            let p = self.at(theta).map_err(|e| {
                log::trace!("infeasible at {theta}: {e}");
                self.infeasible()
            })?;
            if p.speed < min_speed {
                return Err(self.infeasible());
            }
            kinds.push(p.kind);
        }
        let mut arcs = Vec::new();
        let mut start = 0.0;
        let mut current = kinds[0];
        for i in 1..=CHECK_GRID {
            let next = kinds[i % CHECK_GRID];
            if next == current {
                continue;
            }
            let lo = (i - 1) as f64 * h;
            let hi = i as f64 * h;
            let boundary = bisect_predicate(
                |t| self.at(t).map(|p| p.kind == next).unwrap_or(false),
                lo,
                hi,
                SWITCH_TOL,
            );
            arcs.push(ControlArc {
                start,
                end: boundary,
                kind: current,
            });
            start = boundary;
            current = next;
        }
        arcs.push(ControlArc {
            start,
            end: TWO_PI,
            kind: current,
        });
        arcs.retain(|a| !a.is_empty());
        Ok(arcs)
    }

    /// ∫ h(point)/speed dθ over the cycle, split at the arc boundaries.
    pub fn integrate<H: FnMut(&LawPoint) -> f64>(
        &self,
        arcs: &[ControlArc],
        spec: &QuadratureSpec,
        mut h: H,
    ) -> Result<f64> {
        let mut breaks = Vec::with_capacity(arcs.len() + 1);
        breaks.push(0.0);
        breaks.extend(arcs.iter().map(|a| a.end));
        let mut failure = None;
        let value = integrate_piecewise(
            |t| match self.at(t) {
                Ok(p) => h(&p) / p.speed,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            &breaks,
            spec,
        );
        if let Some(e) = failure {
            log::trace!("integrand failed: {e}");
            return Err(self.infeasible());
        }
        value.map_err(|e| match e {
            Error::NonFiniteIntegrand { .. } => self.infeasible(),
            other => other,
        })
    }

    pub fn spiking_time(&self, arcs: &[ControlArc], spec: &QuadratureSpec) -> Result<f64> {
        self.integrate(arcs, spec, |_| 1.0)
    }

    pub fn charge(&self, arcs: &[ControlArc], spec: &QuadratureSpec) -> Result<f64> {
        self.integrate(arcs, spec, |p| p.current)
    }

    pub fn cost(&self, arcs: &[ControlArc], spec: &QuadratureSpec) -> Result<f64> {
        self.integrate(arcs, spec, |p| p.current * p.current)
    }
}

fn bang(theta: f64, f: f64, g: f64, u: f64) -> Result<LawPoint> {
    let speed = f + g * u;
    if speed <= 0.0 {
        return Err(Error::BangInfeasible { theta });
    }
    Ok(LawPoint {
        current: u,
        speed,
        kind: if u > 0.0 {
            ArcKind::PlusBang
        } else {
            ArcKind::MinusBang
        },
    })
}

/// Phases where the control changes arc kind. 0 is included when the arcs
/// on either side of the spike differ.
pub(crate) fn switch_phases(arcs: &[ControlArc]) -> Vec<f64> {
    let mut out = Vec::new();
    if let (Some(first), Some(last)) = (arcs.first(), arcs.last()) {
        if arcs.len() > 1 && first.kind != last.kind {
            out.push(0.0);
        }
    }
    for w in arcs.windows(2) {
        out.push(w[0].end);
    }
    out
}
