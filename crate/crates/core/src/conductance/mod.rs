//! Conductance-based neuron models and PRC extraction.

mod cycle;
mod prc;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cycle::{find_limit_cycle, find_limit_cycle_with, CycleConfig, LimitCycle};
pub use prc::{compute_prc, direct_prc, normalization_residual, periodic_adjoint};

/// Below this |denominator| the rate functions use their analytic limit.
const SINGULAR_GUARD: f64 = 1e-7;

/// Hodgkin–Huxley squid-axon parameters (mV, mS/cm², μF/cm², μA/cm²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HhParams {
    pub v_na: f64,
    pub v_k: f64,
    pub v_l: f64,
    pub g_na: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub c: f64,
    /// Baseline injected current.
    pub i_b: f64,
}

impl Default for HhParams {
    fn default() -> Self {
        Self {
            v_na: 50.0,
            v_k: -77.0,
            v_l: -54.4,
            g_na: 120.0,
            g_k: 36.0,
            g_l: 0.3,
            c: 1.0,
            i_b: 10.0,
        }
    }
}

/// Morris–Lecar parameters in the model's own scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlParams {
    pub phi: f64,
    pub i_b: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    pub g_ca: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub v_ca: f64,
    pub v_k: f64,
    pub v_l: f64,
    pub c: f64,
}

impl Default for MlParams {
    fn default() -> Self {
        Self {
            phi: 0.5,
            i_b: 0.09,
            v1: -0.01,
            v2: 0.15,
            v3: 0.1,
            v4: 0.145,
            g_ca: 1.0,
            g_k: 2.0,
            g_l: 0.5,
            v_ca: 1.0,
            v_k: -0.7,
            v_l: -0.5,
            c: 1.0,
        }
    }
}

/// x/(1 − e^(−x/k)) with its limit k at x = 0.
fn exprel(x: f64, k: f64) -> f64 {
    let den = 1.0 - (-x / k).exp();
    if den.abs() < SINGULAR_GUARD {
        k + x / 2.0
    } else {
        x / den
    }
}

pub fn hh_a_m(v: f64) -> f64 {
    0.1 * exprel(v + 40.0, 10.0)
}

pub fn hh_b_m(v: f64) -> f64 {
    4.0 * (-(v + 65.0) / 18.0).exp()
}

pub fn hh_a_h(v: f64) -> f64 {
    0.07 * (-(v + 65.0) / 20.0).exp()
}

pub fn hh_b_h(v: f64) -> f64 {
    1.0 / (1.0 + (-(v + 35.0) / 10.0).exp())
}

pub fn hh_a_n(v: f64) -> f64 {
    0.01 * exprel(v + 55.0, 10.0)
}

pub fn hh_b_n(v: f64) -> f64 {
    0.125 * (-(v + 65.0) / 80.0).exp()
}

/// State derivative of (V, m, h, n) with external current `i_ext` added to
/// the baseline.
pub fn hh_rhs(p: &HhParams, y: &[f64], i_ext: f64) -> Result<[f64; 4]> {
    let [v, m, h, n] = [y[0], y[1], y[2], y[3]];
    let i_ion = p.g_na * h * m.powi(3) * (v - p.v_na)
        + p.g_k * n.powi(4) * (v - p.v_k)
        + p.g_l * (v - p.v_l);
    let out = [
        (p.i_b + i_ext - i_ion) / p.c,
        hh_a_m(v) * (1.0 - m) - hh_b_m(v) * m,
        hh_a_h(v) * (1.0 - h) - hh_b_h(v) * h,
        hh_a_n(v) * (1.0 - n) - hh_b_n(v) * n,
    ];
    if out.iter().all(|x| x.is_finite()) {
        Ok(out)
    } else {
        Err(Error::NonFiniteState { t: f64::NAN })
    }
}

pub fn ml_m_inf(p: &MlParams, v: f64) -> f64 {
    0.5 * (1.0 + ((v - p.v1) / p.v2).tanh())
}

pub fn ml_w_inf(p: &MlParams, v: f64) -> f64 {
    0.5 * (1.0 + ((v - p.v3) / p.v4).tanh())
}

pub fn ml_tau_w(p: &MlParams, v: f64) -> f64 {
    1.0 / ((v - p.v3) / (2.0 * p.v4)).cosh()
}

/// State derivative of (V, w).
pub fn ml_rhs(p: &MlParams, y: &[f64], i_ext: f64) -> Result<[f64; 2]> {
    let (v, w) = (y[0], y[1]);
    let dv = (p.i_b + i_ext
        + p.g_ca * ml_m_inf(p, v) * (p.v_ca - v)
        + p.g_k * w * (p.v_k - v)
        + p.g_l * (p.v_l - v))
        / p.c;
    let dw = p.phi * (ml_w_inf(p, v) - w) / ml_tau_w(p, v);
    if dv.is_finite() && dw.is_finite() {
        Ok([dv, dw])
    } else {
        Err(Error::NonFiniteState { t: f64::NAN })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConductanceKind {
    Hh,
    Ml,
}

impl fmt::Display for ConductanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConductanceKind::Hh => "hh",
            ConductanceKind::Ml => "ml",
        })
    }
}

/// A conductance-based model with its spike marker: a spike is an upward
/// crossing of V = `marker`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConductanceModel {
    Hh { params: HhParams, marker: f64 },
    Ml { params: MlParams, marker: f64 },
}

impl ConductanceModel {
    pub fn hodgkin_huxley() -> Self {
        Self::Hh {
            params: HhParams::default(),
            marker: 0.0,
        }
    }

    pub fn morris_lecar() -> Self {
        Self::Ml {
            params: MlParams::default(),
            marker: 0.05,
        }
    }

    pub fn kind(&self) -> ConductanceKind {
        match self {
            Self::Hh { .. } => ConductanceKind::Hh,
            Self::Ml { .. } => ConductanceKind::Ml,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Hh { .. } => 4,
            Self::Ml { .. } => 2,
        }
    }

    pub fn marker(&self) -> f64 {
        match self {
            Self::Hh { marker, .. } | Self::Ml { marker, .. } => *marker,
        }
    }

    pub fn capacitance(&self) -> f64 {
        match self {
            Self::Hh { params, .. } => params.c,
            Self::Ml { params, .. } => params.c,
        }
    }

    /// A state near the attractor to start transients from.
    pub fn initial_state(&self) -> Vec<f64> {
        match self {
            Self::Hh { .. } => vec![-65.0, 0.05, 0.6, 0.32],
            Self::Ml { .. } => vec![0.0, 0.1],
        }
    }

    pub fn rhs(&self, y: &[f64], i_ext: f64, out: &mut [f64]) -> Result<()> {
        match self {
            Self::Hh { params, .. } => out.copy_from_slice(&hh_rhs(params, y, i_ext)?),
            Self::Ml { params, .. } => out.copy_from_slice(&ml_rhs(params, y, i_ext)?),
        }
        Ok(())
    }

    /// True when every gating variable lies in [0, 1] (with `slack`).
    pub fn gating_in_range(&self, y: &[f64], slack: f64) -> bool {
        y[1..].iter().all(|&x| x >= -slack && x <= 1.0 + slack)
    }

    /// Central-difference Jacobian of the unforced vector field, row-major.
    pub fn jacobian(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.dimension();
        let mut jac = vec![0.0; n * n];
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = 1e-6 * y[j].abs().max(1e-2);
            yp[j] = y[j] + h;
            self.rhs(&yp, 0.0, &mut fp)?;
            yp[j] = y[j] - h;
            self.rhs(&yp, 0.0, &mut fm)?;
            yp[j] = y[j];
            for i in 0..n {
                jac[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// Sets one named parameter. Names are case-insensitive; `marker` sets
    /// the spike threshold and `i`/`i_b` the baseline current.
    pub fn set_param(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::BadParameter(format!("{key} must be finite")));
        }
        let key = key.trim().to_ascii_lowercase();
        let slot = match self {
            Self::Hh { params: p, marker } => match key.as_str() {
                "v_na" => &mut p.v_na,
                "v_k" => &mut p.v_k,
                "v_l" => &mut p.v_l,
                "g_na" => &mut p.g_na,
                "g_k" => &mut p.g_k,
                "g_l" => &mut p.g_l,
                "c" => &mut p.c,
                "i" | "i_b" => &mut p.i_b,
                "marker" => marker,
                _ => return Err(Error::BadParameter(format!("unknown HH parameter `{key}`"))),
            },
            Self::Ml { params: p, marker } => match key.as_str() {
                "phi" => &mut p.phi,
                "i" | "i_b" => &mut p.i_b,
                "v1" => &mut p.v1,
                "v2" => &mut p.v2,
                "v3" => &mut p.v3,
                "v4" => &mut p.v4,
                "g_ca" => &mut p.g_ca,
                "g_k" => &mut p.g_k,
                "g_l" => &mut p.g_l,
                "v_ca" => &mut p.v_ca,
                "v_k" => &mut p.v_k,
                "v_l" => &mut p.v_l,
                "c" => &mut p.c,
                "marker" => marker,
                _ => return Err(Error::BadParameter(format!("unknown ML parameter `{key}`"))),
            },
        };
        *slot = value;
        if self.capacitance() <= 0.0 {
            return Err(Error::BadParameter("capacitance must be > 0".into()));
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_overrides(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key=value", i + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            self.set_param(k, v)?;
        }
        Ok(())
    }
}
