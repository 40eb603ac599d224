//! Result types shared by the indirect solvers.

use serde::{Deserialize, Serialize};

use crate::numerics::local_cubic;
use crate::shooting::TIME_TOLERANCE;

/// Maximum-principle constants of a normal extremal (λ₀ = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalParams {
    /// Constant value of the Hamiltonian.
    pub c: f64,
    /// Multiplier of the charge constraint; 0 when charge is unconstrained.
    pub mu: f64,
    pub lambda0: f64,
    pub charge_balanced: bool,
}

impl ExtremalParams {
    pub fn new(c: f64, mu: f64) -> Self {
        Self {
            c,
            mu,
            lambda0: 1.0,
            charge_balanced: true,
        }
    }

    /// μ fixed at 0.
    pub fn unbalanced(c: f64) -> Self {
        Self {
            c,
            mu: 0.0,
            lambda0: 1.0,
            charge_balanced: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcKind {
    Interior,
    PlusBang,
    MinusBang,
}

/// A phase interval on which the control follows one law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlArc {
    pub start: f64,
    pub end: f64,
    pub kind: ArcKind,
}

impl ControlArc {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSample {
    pub t: f64,
    pub theta: f64,
    pub current: f64,
    /// Accumulated charge ∫₀ᵗ I dτ.
    pub charge: f64,
}

/// An optimal stimulus: its constants, arc structure and a uniform time
/// sampling, with cost and charge measured by forward integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSolution {
    pub params: ExtremalParams,
    /// Amplitude bound, `None` for the unbounded problem.
    pub bound: Option<f64>,
    pub target_t: f64,
    pub achieved_t: f64,
    /// ∫ I² dt over one cycle.
    pub cost: f64,
    /// ∫ I dt over one cycle.
    pub net_charge: f64,
    pub arcs: Vec<ControlArc>,
    pub switch_phases: Vec<f64>,
    pub samples: Vec<ControlSample>,
}

/// The unbounded solution is the same object with no bound and one
/// interior arc.
pub type ExtremalSolution = ControlSolution;

impl ControlSolution {
    pub fn peak_current(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.current.abs())
            .fold(0.0, f64::max)
    }

    pub fn switch_count(&self) -> usize {
        self.switch_phases.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn currents(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.current).collect()
    }

    /// Control at time `t` by cubic interpolation through the four
    /// nearest samples; zero outside [0, achieved_t].
    pub fn current_at(&self, t: f64) -> f64 {
        let s = &self.samples;
        let Some(last) = s.last() else {
            return 0.0;
        };
        // times within the spiking-time tolerance of the end map onto it
        let t = if t > last.t && t <= last.t * (1.0 + TIME_TOLERANCE) { last.t } else { t };
        if t < s[0].t || t > last.t {
            return 0.0;
        }
        local_cubic(s.len(), |i| s[i].t, |i| s[i].current, t)
    }
}
