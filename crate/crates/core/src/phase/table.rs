use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TWO_PI;
use crate::error::{Error, Result};

/// Tabulated PRC on a uniform phase grid over [0, 2π).
///
/// On disk this is a CSV file: a `# omega=<value>` line, a `theta,Z` header,
/// then one row per sample with θ ascending from 0 (2π excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrcTable {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub omega: f64,
}

impl PrcTable {
    pub const MIN_SAMPLES: usize = 64;
    pub const DEFAULT_SAMPLES: usize = 1024;

    pub fn new(theta: Vec<f64>, z: Vec<f64>, omega: f64) -> Result<Self> {
        let t = Self { theta, z, omega };
        t.validate()?;
        Ok(t)
    }

    /// Samples `prc` on an `n`-point uniform grid.
    pub fn from_fn<F: Fn(f64) -> f64>(n: usize, omega: f64, prc: F) -> Self {
        let h = TWO_PI / n as f64;
        let theta: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let z = theta.iter().map(|&t| prc(t)).collect();
        Self { theta, z, omega }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.theta.len();
        if n != self.z.len() {
            return Err(Error::NonUniformGrid(format!(
                "{n} phases but {} PRC values",
                self.z.len()
            )));
        }
        if n < Self::MIN_SAMPLES {
            return Err(Error::NonUniformGrid(format!(
                "PRC table needs at least {} samples, got {n}",
                Self::MIN_SAMPLES
            )));
        }
        let h = TWO_PI / n as f64;
        for (i, &t) in self.theta.iter().enumerate() {
            if (t - i as f64 * h).abs() > 1e-9 * TWO_PI {
                return Err(Error::NonUniformGrid(format!(
                    "row {i}: theta = {t}, expected {}",
                    i as f64 * h
                )));
            }
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::BadParameter(format!(
                "omega must be > 0, got {}",
                self.omega
            )));
        }
        if self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadParameter("PRC values must be finite".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.len() + 2));
        writeln!(out, "# omega={}", fmt_sig(self.omega)).unwrap();
        out.push_str("theta,Z\n");
        for (t, z) in self.theta.iter().zip(&self.z) {
            writeln!(out, "{},{}", fmt_sig(*t), fmt_sig(*z)).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut omega = None;
        let mut header_seen = false;
        let mut theta = Vec::new();
        let mut z = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("omega=") {
                    omega = Some(parse_f64(v.trim(), lineno)?);
                }
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != ["theta", "Z"] {
                    return Err(Error::Parse(format!(
                        "line {}: expected header `theta,Z`, found `{line}`",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let mut cols = line.split(',');
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse(format!(
                    "line {}: expected two columns",
                    lineno + 1
                )));
            };
            theta.push(parse_f64(a.trim(), lineno)?);
            z.push(parse_f64(b.trim(), lineno)?);
        }
        let omega = omega.ok_or_else(|| Error::Parse("missing `# omega=` line".into()))?;
        if !header_seen {
            return Err(Error::Parse("missing `theta,Z` header".into()));
        }
        Self::new(theta, z, omega)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn parse_f64(s: &str, lineno: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {}: `{s}`: {e}", lineno + 1)))
}

/// 12 significant digits in scientific notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    format!("{x:.11e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_layout() {
        let t = PrcTable::from_fn(64, 0.4292, |x| x.sin());
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# omega=4.29200000000e-1"));
        assert_eq!(lines.next(), Some("theta,Z"));
        assert_eq!(lines.next(), Some("0,0"));
        assert_eq!(csv.lines().count(), 66);
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn rejects_missing_pieces() {
        assert!(matches!(
            PrcTable::from_csv("theta,Z\n0,1\n"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            PrcTable::from_csv("# omega=1\n0,1\n"),
            Err(Error::Parse(_))
        ));
        let short = PrcTable::from_fn(16, 1.0, |x| x.cos()).to_csv();
        assert!(matches!(
            PrcTable::from_csv(&short),
            Err(Error::NonUniformGrid(_))
        ));
    }

    #[test]
    fn rejects_non_uniform_rows() {
        let mut t = PrcTable::from_fn(64, 1.0, |x| x.cos());
        t.theta[10] += 1e-3;
        assert!(matches!(
            PrcTable::from_csv(&t.to_csv()),
            Err(Error::NonUniformGrid(_))
        ));
    }

    proptest! {
        #[test]
        fn csv_round_trip(omega in 0.01f64..10.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let t = PrcTable::from_fn(96, omega, |x| a * x.sin() + b * (2.0 * x).cos());
            let back = PrcTable::from_csv(&t.to_csv()).unwrap();
            prop_assert_eq!(back.len(), t.len());
            prop_assert!((back.omega - omega).abs() <= 1e-11 * omega);
            for (x, y) in back.z.iter().zip(&t.z) {
                prop_assert!((x - y).abs() <= 1e-11 * (1.0 + y.abs()));
            }
        }
    }
}
