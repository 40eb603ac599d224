//! Periodic cubic spline on a uniform grid.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// C² periodic cubic interpolant of samples on a uniform grid over one
/// period, starting at phase 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    period: f64,
    step: f64,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    curvature: Vec<f64>,
}

impl PeriodicSpline {
    /// Minimum number of samples accepted.
    pub const MIN_SAMPLES: usize = 16;

    /// Builds the interpolant from `(θ_i, v_i)` pairs over [0, 2π). The grid
    /// must start at 0, be uniform, and exclude 2π.
    pub fn from_samples(thetas: &[f64], values: &[f64]) -> Result<Self> {
        if thetas.len() != values.len() {
            return Err(Error::NonUniformGrid(format!(
                "{} phases but {} values",
                thetas.len(),
                values.len()
            )));
        }
        let n = thetas.len();
        if n < Self::MIN_SAMPLES {
            return Err(Error::NonUniformGrid(format!(
                "need at least {} samples, got {n}",
                Self::MIN_SAMPLES
            )));
        }
        let h = TWO_PI / n as f64;
        for (i, &t) in thetas.iter().enumerate() {
            if (t - i as f64 * h).abs() > 1e-9 * TWO_PI {
                return Err(Error::NonUniformGrid(format!(
                    "sample {i} at {t}, expected {}",
                    i as f64 * h
                )));
            }
        }
        Self::uniform(values, TWO_PI)
    }

    /// Builds the interpolant from values at `k·period/n`, k = 0..n.
    pub fn uniform(values: &[f64], period: f64) -> Result<Self> {
        let n = values.len();
        if n < Self::MIN_SAMPLES {
            return Err(Error::NonUniformGrid(format!(
                "need at least {} samples, got {n}",
                Self::MIN_SAMPLES
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadParameter("spline samples must be finite".into()));
        }
        let step = period / n as f64;
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                let prev = values[(i + n - 1) % n];
                let next = values[(i + 1) % n];
                6.0 * (next - 2.0 * values[i] + prev) / (step * step)
            })
            .collect();
        let curvature = solve_cyclic(1.0, 4.0, 1.0, &rhs);
        Ok(Self {
            period,
            step,
            values: values.to_vec(),
            curvature,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let x = x.rem_euclid(self.period);
        let pos = x / self.step;
        let mut i = pos.floor() as usize;
        let mut frac = pos - i as f64;
        if i >= self.values.len() {
            i = 0;
            frac = 0.0;
        }
        (i, frac)
    }

    /// Value, first and second derivative at `x`.
    pub fn eval_all(&self, x: f64) -> (f64, f64, f64) {
        let n = self.values.len();
        let (i, a) = self.locate(x);
        let j = (i + 1) % n;
        let h = self.step;
        let b = 1.0 - a;
        let (yi, yj) = (self.values[i], self.values[j]);
        let (mi, mj) = (self.curvature[i], self.curvature[j]);
        let v = b * yi + a * yj + ((b * b * b - b) * mi + (a * a * a - a) * mj) * h * h / 6.0;
        let d = (yj - yi) / h + ((3.0 * a * a - 1.0) * mj - (3.0 * b * b - 1.0) * mi) * h / 6.0;
        let dd = b * mi + a * mj;
        (v, d, dd)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_all(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval_all(x).1
    }
}

/// Solves the cyclic tridiagonal system with constant bands
/// (`sub`, `diag`, `sup`) by Sherman–Morrison.
fn solve_cyclic(sub: f64, diag: f64, sup: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let gamma = -diag;
    let alpha = sup; // corner A[n-1][0]
    let beta = sub; // corner A[0][n-1]
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - alpha * beta / gamma;
    let x = thomas(sub, &d, sup, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(sub, &d, sup, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(sub: f64, diag: &[f64], sup: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut bet = diag[0];
    x[0] = rhs[0] / bet;
    for i in 1..n {
        c[i] = sup / bet;
        bet = diag[i] - sub * c[i];
        x[i] = (rhs[i] - sub * x[i - 1]) / bet;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i + 1] * x[i + 1];
    }
    x
}

/// Cubic through the four samples nearest `t` (linear for fewer than four),
/// for nonperiodic data given by index accessors over increasing abscissae.
pub fn local_cubic(n: usize, x: impl Fn(usize) -> f64, y: impl Fn(usize) -> f64, t: f64) -> f64 {
    match n {
        0 => return f64::NAN,
        1 => return y(0),
        _ => {}
    }
    // first index with x > t
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if x(mid) <= t {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let k = lo;
    if n < 4 {
        let k = k.clamp(1, n - 1);
        let (xa, xb) = (x(k - 1), x(k));
        return y(k - 1) + (t - xa) / (xb - xa) * (y(k) - y(k - 1));
    }
    let first = k.saturating_sub(2).min(n - 4);
    let mut value = 0.0;
    for i in first..first + 4 {
        let mut w = 1.0;
        for j in first..first + 4 {
            if i != j {
                w *= (t - x(j)) / (x(i) - x(j));
            }
        }
        value += w * y(i);
    }
    value
}
