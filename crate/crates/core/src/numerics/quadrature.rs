//! Composite Gauss–Legendre quadrature over the phase circle and sub-arcs.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;
/// Refinement stops once the panel count would exceed this.
const MAX_PANELS: usize = 1 << 14;

/// Composite rule: `panels` equal panels over [0, 2π), each with a
/// `points_per_panel`-point Gauss rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub panels: usize,
    pub points_per_panel: usize,
    pub abs_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            panels: 64,
            points_per_panel: 8,
            abs_tol: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn new(panels: usize, points_per_panel: usize, abs_tol: f64) -> Result<Self> {
        let spec = Self {
            panels,
            points_per_panel,
            abs_tol,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels < 8 {
            return Err(Error::BadParameter(format!(
                "quadrature needs at least 8 panels, got {}",
                self.panels
            )));
        }
        if self.points_per_panel < 4 {
            return Err(Error::BadParameter(format!(
                "quadrature needs at least 4 points per panel, got {}",
                self.points_per_panel
            )));
        }
        if !(self.abs_tol > 0.0) {
            return Err(Error::BadParameter("quadrature abs_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn composite<F: FnMut(f64) -> f64>(
    h: &mut F,
    a: f64,
    b: f64,
    panels: usize,
    nodes: &[f64],
    weights: &[f64],
) -> Result<f64> {
    let width = (b - a) / panels as f64;
    let half = 0.5 * width;
    let mut total = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * width;
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            let theta = mid + half * x;
            let v = h(theta);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { theta });
            }
            panel += w * v;
        }
        total += half * panel;
    }
    Ok(total)
}

/// ∫ h over [a, b] with the composite rule, doubling panels until two
/// successive estimates agree to `abs_tol`.
///
/// The starting panel count is `spec.panels` scaled by the interval's
/// share of a full cycle (at least 4 panels).
pub fn integrate_interval<F: FnMut(f64) -> f64>(
    mut h: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if b == a {
        return Ok(0.0);
    }
    let (nodes, weights) = gauss_legendre(spec.points_per_panel);
    let share = ((b - a).abs() / TWO_PI).min(1.0);
    let mut panels = ((spec.panels as f64 * share).ceil() as usize).max(4);
    let mut coarse = composite(&mut h, a, b, panels, &nodes, &weights)?;
    loop {
        panels *= 2;
        let fine = composite(&mut h, a, b, panels, &nodes, &weights)?;
        if (fine - coarse).abs() <= spec.abs_tol || panels >= MAX_PANELS {
            if (fine - coarse).abs() > spec.abs_tol {
                log::debug!(
                    "quadrature on [{a}, {b}] stopped at {panels} panels, change {:e}",
                    (fine - coarse).abs()
                );
            }
            return Ok(fine);
        }
        coarse = fine;
    }
}

/// ∫₀^{2π} h(θ) dθ.
pub fn integrate_periodic<F: FnMut(f64) -> f64>(h: F, spec: &QuadratureSpec) -> Result<f64> {
    integrate_interval(h, 0.0, TWO_PI, spec)
}

/// Sum of ∫ h over consecutive intervals `[breaks[i], breaks[i+1]]`.
pub fn integrate_piecewise<F: FnMut(f64) -> f64>(
    mut h: F,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<f64> {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += integrate_interval(&mut h, w[0], w[1], spec)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_squared_integrates_to_pi() {
        let v = integrate_periodic(|t| t.sin().powi(2), &QuadratureSpec::default()).unwrap();
        assert!((v - PI).abs() < 1e-12);
    }

    #[test]
    fn constant_integrates_to_two_pi() {
        let v = integrate_periodic(|_| 1.0, &QuadratureSpec::default()).unwrap();
        assert!((v - TWO_PI).abs() < 1e-12);
    }

    #[test]
    fn poisson_kernel_matches_closed_form() {
        // ∫ dθ/(a + b cosθ) = 2π/√(a² − b²)
        let v = integrate_periodic(|t| 1.0 / (1.4 - 0.4 * t.cos()), &QuadratureSpec::default())
            .unwrap();
        let exact = TWO_PI / 1.8f64.sqrt();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
        assert!((v - 4.683210).abs() < 1e-6);
    }

    #[test]
    fn trig_polynomials_are_exact() {
        let spec = QuadratureSpec::default();
        for k in 1..=6 {
            let c = integrate_periodic(|t| (k as f64 * t).cos(), &spec).unwrap();
            let s = integrate_periodic(|t| (k as f64 * t).sin(), &spec).unwrap();
            assert!(c.abs() < 1e-13 && s.abs() < 1e-13, "k = {k}: {c} {s}");
        }
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate_periodic(|t| if t > 1.0 { f64::NAN } else { 0.0 }, &QuadratureSpec::default());
        assert!(matches!(r, Err(Error::NonFiniteIntegrand { .. })));
    }

    #[test]
    fn rejects_small_specs() {
        assert!(QuadratureSpec::new(4, 8, 1e-10).is_err());
        assert!(QuadratureSpec::new(64, 2, 1e-10).is_err());
        assert!(QuadratureSpec::new(64, 8, 0.0).is_err());
    }

    #[test]
    fn gauss_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact up to degree 9
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn piecewise_handles_kinks() {
        let v = integrate_piecewise(|t: f64| t.sin().abs(), &[0.0, PI, TWO_PI], &QuadratureSpec::default())
            .unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }
}
