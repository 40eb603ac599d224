//! Scalar and two-dimensional root finding.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootFindConfig {
    pub max_iters: usize,
    pub step_tol: f64,
    pub residual_tol: f64,
    /// Fraction of the full Newton step taken before backtracking.
    pub damping: f64,
}

impl Default for RootFindConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            step_tol: 1e-13,
            residual_tol: 1e-11,
            damping: 1.0,
        }
    }
}

impl RootFindConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::BadParameter("residual_tol must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::BadParameter("damping must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

fn inf_norm(r: [f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Damped Newton for F(x, y) = 0 with a central-difference Jacobian.
///
/// `residual` may fail (e.g. parameters outside the feasible set); during
/// backtracking such points are treated as a residual increase. A failure at
/// the starting point is returned to the caller.
pub fn find_root_2d<F>(mut residual: F, x0: [f64; 2], cfg: &RootFindConfig) -> Result<[f64; 2]>
where
    F: FnMut([f64; 2]) -> Result<[f64; 2]>,
{
    cfg.validate()?;
    let mut x = x0;
    let mut r = residual(x)?;
    let mut norm = inf_norm(r);
    for _ in 0..cfg.max_iters {
        if norm <= cfg.residual_tol {
            return Ok(x);
        }
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let h = fd_step(x[j]);
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            // One-sided difference when the symmetric stencil leaves the domain.
            let (rp, rm, span) = match (residual(xp), residual(xm)) {
                (Ok(p), Ok(m)) => (p, m, 2.0 * h),
                (Ok(p), Err(_)) => (p, r, h),
                (Err(_), Ok(m)) => (r, m, h),
                (Err(e), Err(_)) => return Err(e),
            };
            for i in 0..2 {
                jac[i][j] = (rp[i] - rm[i]) / span;
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let scale = jac.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if !det.is_finite() || det.abs() <= 1e-14 * scale * scale || scale == 0.0 {
            return Err(Error::SingularJacobian { x: x[0], y: x[1] });
        }
        let dx = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut t = cfg.damping;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = [x[0] + t * dx[0], x[1] + t * dx[1]];
            if let Ok(rt) = residual(trial) {
                let nt = inf_norm(rt);
                if nt < norm {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence {
                iters: cfg.max_iters,
                residual: norm,
            });
        }
        let step = (t * dx[0]).abs().max((t * dx[1]).abs());
        if step <= cfg.step_tol * (1.0 + x[0].abs().max(x[1].abs())) && norm > cfg.residual_tol {
            return Err(Error::NoConvergence {
                iters: cfg.max_iters,
                residual: norm,
            });
        }
    }
    if norm <= cfg.residual_tol {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iters: cfg.max_iters,
            residual: norm,
        })
    }
}

/// Brent's method on a bracket with `f(a)` and `f(b)` of opposite sign.
pub fn brent<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::BadParameter(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = d;
            }
        } else {
            d = m;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::NoConvergence {
        iters: 200,
        residual: fb.abs(),
    })
}

/// Bisection on a predicate that is false at `lo` and true at `hi`.
/// Returns the final bracket midpoint once its width is below `tol`.
pub fn bisect_predicate<P: FnMut(f64) -> bool>(mut pred: P, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_system() {
        let root = find_root_2d(
            |[x, y]| Ok([x - 1.0, y + 2.0]),
            [0.0, 0.0],
            &RootFindConfig::default(),
        )
        .unwrap();
        assert!((root[0] - 1.0).abs() < 1e-12 && (root[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_root() {
        let root = find_root_2d(
            |[x, y]| Ok([x * x - 4.0, y]),
            [1.0, 1.0],
            &RootFindConfig::default(),
        )
        .unwrap();
        assert!((root[0] - 2.0).abs() < 1e-10 && root[1].abs() < 1e-10);
    }

    #[test]
    fn rootless_map_fails() {
        let r = find_root_2d(
            |[x, y]| Ok([x * x + 1.0, y]),
            [0.5, 0.0],
            &RootFindConfig::default(),
        );
        assert!(matches!(
            r,
            Err(Error::NoConvergence { .. }) | Err(Error::SingularJacobian { .. })
        ));
    }

    #[test]
    fn residual_scaling_does_not_move_root() {
        let f = |s: f64| {
            move |[x, y]: [f64; 2]| Ok([s * (x.exp() - 2.0 + y), s * (x - y * y - 0.3)])
        };
        let cfg = RootFindConfig::default();
        let a = find_root_2d(f(1.0), [0.5, 0.5], &cfg).unwrap();
        let b = find_root_2d(f(50.0), [0.5, 0.5], &RootFindConfig { residual_tol: 50.0 * cfg.residual_tol, ..cfg }).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }

    #[test]
    fn bad_damping_rejected() {
        let cfg = RootFindConfig {
            damping: 0.0,
            ..Default::default()
        };
        assert!(find_root_2d(Ok, [1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn brent_finds_cosine_root() {
        let r = brent(|x| Ok(x.cos() - x), 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 0.739_085_133_215_160_6).abs() < 1e-12);
    }

    #[test]
    fn brent_requires_bracket() {
        assert!(brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn bisection_on_predicate() {
        let x = bisect_predicate(|x| x > 0.3, 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-11);
    }
}
