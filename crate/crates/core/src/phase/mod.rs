//! Phase-reduced oscillator models θ̇ = f(θ) + g(θ)·I.
//!
//! θ = 0 marks a spike and one cycle covers [0, 2π). `f` is the baseline
//! phase velocity and `g` the phase response curve (PRC).

mod table;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::PeriodicSpline;

pub use table::PrcTable;

pub(crate) const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sinusoidal,
    Sniper,
    Theta,
    Tabulated,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelKind::Sinusoidal => "sinusoidal",
            ModelKind::Sniper => "sniper",
            ModelKind::Theta => "theta",
            ModelKind::Tabulated => "tabulated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Sinusoidal { omega: f64, z_d: f64 },
    Sniper { omega: f64, z_d: f64 },
    Theta { i_b: f64 },
    Tabulated { omega: f64, prc: Arc<PeriodicSpline> },
}

/// f, g and their first two phase derivatives at one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseJet {
    pub f: f64,
    pub df: f64,
    pub ddf: f64,
    pub g: f64,
    pub dg: f64,
    pub ddg: f64,
}

/// A phase model. Cheap to clone; tabulated PRCs are shared.
#[derive(Debug, Clone)]
pub struct PhaseModel {
    shape: Shape,
}

impl PhaseModel {
    /// f = ω, g = z_d·sinθ.
    pub fn sinusoidal(omega: f64, z_d: f64) -> Result<Self> {
        check_rate(omega, z_d)?;
        Ok(Self {
            shape: Shape::Sinusoidal { omega, z_d },
        })
    }

    /// f = ω, g = z_d·(1 − cosθ).
    pub fn sniper(omega: f64, z_d: f64) -> Result<Self> {
        check_rate(omega, z_d)?;
        Ok(Self {
            shape: Shape::Sniper { omega, z_d },
        })
    }

    /// f = 1 + cosθ + (1 − cosθ)·I_b, g = 1 − cosθ. Spikes on its own only
    /// for I_b > 0.
    pub fn theta(i_b: f64) -> Result<Self> {
        if !i_b.is_finite() {
            return Err(Error::BadParameter(format!("I_b must be finite, got {i_b}")));
        }
        Ok(Self {
            shape: Shape::Theta { i_b },
        })
    }

    /// f = ω, g = periodic cubic interpolant of the table.
    pub fn tabulated(table: &PrcTable) -> Result<Self> {
        table.validate()?;
        let prc = PeriodicSpline::from_samples(&table.theta, &table.z)?;
        Ok(Self {
            shape: Shape::Tabulated {
                omega: table.omega,
                prc: Arc::new(prc),
            },
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.shape {
            Shape::Sinusoidal { .. } => ModelKind::Sinusoidal,
            Shape::Sniper { .. } => ModelKind::Sniper,
            Shape::Theta { .. } => ModelKind::Theta,
            Shape::Tabulated { .. } => ModelKind::Tabulated,
        }
    }

    /// Natural frequency in rad/time; 0 for a theta neuron that does not
    /// spike on its own.
    pub fn omega(&self) -> f64 {
        match self.shape {
            Shape::Sinusoidal { omega, .. }
            | Shape::Sniper { omega, .. }
            | Shape::Tabulated { omega, .. } => omega,
            Shape::Theta { i_b } if i_b > 0.0 => 2.0 * i_b.sqrt(),
            Shape::Theta { .. } => 0.0,
        }
    }

    /// T₀ = 2π/ω, or `None` when the model does not spike autonomously.
    pub fn natural_period(&self) -> Option<f64> {
        match self.shape {
            Shape::Theta { i_b } if i_b > 0.0 => Some(PI / i_b.sqrt()),
            Shape::Theta { .. } => None,
            _ => Some(TWO_PI / self.omega()),
        }
    }

    pub fn is_autonomous(&self) -> bool {
        self.natural_period().is_some()
    }

    /// z_d for sinusoidal/SNIPER models.
    pub fn z_d(&self) -> Option<f64> {
        match self.shape {
            Shape::Sinusoidal { z_d, .. } | Shape::Sniper { z_d, .. } => Some(z_d),
            _ => None,
        }
    }

    pub fn baseline_current(&self) -> Option<f64> {
        match self.shape {
            Shape::Theta { i_b } => Some(i_b),
            _ => None,
        }
    }

    pub fn prc_spline(&self) -> Option<&PeriodicSpline> {
        match &self.shape {
            Shape::Tabulated { prc, .. } => Some(prc),
            _ => None,
        }
    }

    pub fn f(&self, theta: f64) -> f64 {
        match self.shape {
            Shape::Sinusoidal { omega, .. }
            | Shape::Sniper { omega, .. }
            | Shape::Tabulated { omega, .. } => omega,
            Shape::Theta { i_b } => {
                let c = theta.cos();
                1.0 + c + (1.0 - c) * i_b
            }
        }
    }

    pub fn g(&self, theta: f64) -> f64 {
        match &self.shape {
            Shape::Sinusoidal { z_d, .. } => z_d * theta.sin(),
            Shape::Sniper { z_d, .. } => z_d * (1.0 - theta.cos()),
            Shape::Theta { .. } => 1.0 - theta.cos(),
            Shape::Tabulated { prc, .. } => prc.eval(theta),
        }
    }

    /// (f, g) at one phase.
    pub fn fg(&self, theta: f64) -> (f64, f64) {
        (self.f(theta), self.g(theta))
    }

    pub fn jet(&self, theta: f64) -> PhaseJet {
        let (s, c) = theta.sin_cos();
        match &self.shape {
            Shape::Sinusoidal { omega, z_d } => PhaseJet {
                f: *omega,
                df: 0.0,
                ddf: 0.0,
                g: z_d * s,
                dg: z_d * c,
                ddg: -z_d * s,
            },
            Shape::Sniper { omega, z_d } => PhaseJet {
                f: *omega,
                df: 0.0,
                ddf: 0.0,
                g: z_d * (1.0 - c),
                dg: z_d * s,
                ddg: z_d * c,
            },
            Shape::Theta { i_b } => PhaseJet {
                f: 1.0 + c + (1.0 - c) * i_b,
                df: -s + s * i_b,
                ddf: -c + c * i_b,
                g: 1.0 - c,
                dg: s,
                ddg: c,
            },
            Shape::Tabulated { omega, prc } => {
                let (g, dg, ddg) = prc.eval_all(theta);
                PhaseJet {
                    f: *omega,
                    df: 0.0,
                    ddf: 0.0,
                    g,
                    dg,
                    ddg,
                }
            }
        }
    }

    /// Characteristic phase-velocity scale: ω, or max|f| for models without
    /// an autonomous rhythm.
    pub fn rate_scale(&self) -> f64 {
        let w = self.omega();
        if w > 0.0 {
            return w;
        }
        sample_grid(512)
            .map(|t| self.f(t).abs())
            .fold(0.0, f64::max)
    }

    /// max over θ of |g(θ)| on a 4096-point grid.
    pub fn max_abs_g(&self) -> f64 {
        sample_grid(4096).map(|t| self.g(t).abs()).fold(0.0, f64::max)
    }

    /// True when g vanishes identically (sampled), which makes the phase
    /// uncontrollable.
    pub fn is_uncontrollable(&self) -> bool {
        self.max_abs_g() <= 1e-14 * self.rate_scale().max(1.0)
    }

    /// min over θ of |f/g| (∞ where g never leaves zero). Grid scan with a
    /// golden-section polish around the best sample.
    pub fn min_abs_f_over_g(&self) -> f64 {
        let ratio = |t: f64| {
            let (f, g) = self.fg(t);
            if g == 0.0 {
                f64::INFINITY
            } else {
                (f / g).abs()
            }
        };
        let n = 4096;
        let h = TWO_PI / n as f64;
        let (best_i, best) = (0..n)
            .map(|i| (i, ratio(i as f64 * h)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if !best.is_finite() {
            return best;
        }
        let (mut a, mut b) = ((best_i as f64 - 1.0) * h, (best_i as f64 + 1.0) * h);
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - gr * (b - a);
        let mut x2 = a + gr * (b - a);
        let (mut f1, mut f2) = (ratio(x1), ratio(x2));
        for _ in 0..80 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = ratio(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = ratio(x2);
            }
        }
        best.min(f1).min(f2)
    }

    /// Whether the unbounded extremal with μ = 0 already has zero net charge
    /// because of the model's symmetry: f even and g odd about π, or f
    /// constant and g(θ + π) = −g(θ). Checked on a sample grid.
    pub fn has_charge_symmetry(&self) -> bool {
        let scale = self.max_abs_g().max(1e-300);
        let fscale = self.rate_scale().max(1e-300);
        let reflect = sample_grid(256).all(|t| {
            let (f1, g1) = self.fg(t);
            let (f2, g2) = self.fg(TWO_PI - t);
            (f1 - f2).abs() <= 1e-12 * fscale && (g1 + g2).abs() <= 1e-12 * scale
        });
        if reflect {
            return true;
        }
        sample_grid(256).all(|t| {
            let (f1, g1) = self.fg(t);
            let (f2, g2) = self.fg(t + PI);
            (f1 - f2).abs() <= 1e-12 * fscale && (g1 + g2).abs() <= 1e-12 * scale
        })
    }

    /// Short label used in reports.
    pub fn describe(&self) -> String {
        match &self.shape {
            Shape::Sinusoidal { omega, z_d } => format!("sinusoidal(omega={omega}, z_d={z_d})"),
            Shape::Sniper { omega, z_d } => format!("sniper(omega={omega}, z_d={z_d})"),
            Shape::Theta { i_b } => format!("theta(I_b={i_b})"),
            Shape::Tabulated { omega, prc } => {
                format!("tabulated(omega={omega}, samples={})", prc.len())
            }
        }
    }
}

fn check_rate(omega: f64, z_d: f64) -> Result<()> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::BadParameter(format!("omega must be > 0, got {omega}")));
    }
    if z_d == 0.0 || !z_d.is_finite() {
        return Err(Error::BadParameter(format!("z_d must be nonzero, got {z_d}")));
    }
    Ok(())
}

/// Uniform phases k·2π/n, k = 0..n.
pub(crate) fn sample_grid(n: usize) -> impl Iterator<Item = f64> {
    let h = TWO_PI / n as f64;
    (0..n).map(move |i| i as f64 * h)
}

/// Forward simulation of a phase model under a control.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTrajectory {
    pub times: Vec<f64>,
    pub theta: Vec<f64>,
    /// Accumulated charge ∫₀ᵗ I dτ.
    pub p: Vec<f64>,
    pub control: Vec<f64>,
}

impl PhaseTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn is_monotone(&self) -> bool {
        self.theta.windows(2).all(|w| w[1] >= w[0] - 1e-12)
    }
}
