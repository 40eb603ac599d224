//! Command-line flags, config files and the resolved run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use spikeopt::RepeatMode;

#[derive(Debug, Parser)]
#[command(name = "spikeopt", version, about = "Minimum-power spiking controls for phase-reduced neurons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Solve,
    Range,
    Prc,
    Direct,
    Validate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the indirect (maximum-principle) problem.
    Solve(Flags),
    /// Print the feasible spiking-time range under |I| <= M.
    Range(Flags),
    /// Compute or tabulate the phase response curve.
    Prc(Flags),
    /// Solve by Legendre-Gauss-Lobatto collocation.
    Direct(Flags),
    /// Apply a phase-model design to the full conductance model.
    Validate(Flags),
}

impl Command {
    pub fn split(self) -> (CommandKind, Flags) {
        match self {
            Command::Solve(f) => (CommandKind::Solve, f),
            Command::Range(f) => (CommandKind::Range, f),
            Command::Prc(f) => (CommandKind::Prc, f),
            Command::Direct(f) => (CommandKind::Direct, f),
            Command::Validate(f) => (CommandKind::Validate, f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Sinusoidal,
    Sniper,
    Theta,
    Tabulated,
    Hh,
    Ml,
}

impl ModelArg {
    pub fn is_conductance(self) -> bool {
        matches!(self, ModelArg::Hh | ModelArg::Ml)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepeatArg {
    Clock,
    Spike,
}

impl From<RepeatArg> for RepeatMode {
    fn from(r: RepeatArg) -> Self {
        match r {
            RepeatArg::Clock => RepeatMode::Clock,
            RepeatArg::Spike => RepeatMode::SpikeTriggered,
        }
    }
}

/// Amplitude bound: a positive number or `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Infinite,
}

impl Bound {
    pub fn finite(self) -> Option<f64> {
        match self {
            Bound::Finite(m) => Some(m),
            Bound::Infinite => None,
        }
    }
}

impl FromStr for Bound {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "+inf") {
            return Ok(Bound::Infinite);
        }
        let m: f64 = s.parse().map_err(|_| format!("`{s}` is not a number or `inf`"))?;
        if m.is_infinite() && m > 0.0 {
            Ok(Bound::Infinite)
        } else if m > 0.0 && m.is_finite() {
            Ok(Bound::Finite(m))
        } else {
            Err(format!("M must be > 0, got {s}"))
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(m) => write!(f, "{m}"),
            Bound::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bound::Finite(m) => s.serialize_f64(crate::output::round12(*m)),
            Bound::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(m) => Bound::from_str(&m.to_string()),
            Raw::Text(s) => Bound::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// `T=a:b:n`: n evenly spaced targets from a to b.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        let h = (self.to - self.from) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.from + i as f64 * h).collect()
    }
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let range = s
            .trim()
            .strip_prefix("T=")
            .ok_or_else(|| format!("sweep must look like T=a:b:n, got `{s}`"))?;
        let parts: Vec<&str> = range.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("sweep must look like T=a:b:n, got `{s}`"));
        };
        let num = |x: &str| x.parse::<f64>().map_err(|_| format!("bad sweep bound `{x}`"));
        let count: usize = n.parse().map_err(|_| format!("bad sweep count `{n}`"))?;
        let (from, to) = (num(a)?, num(b)?);
        if count == 0 || !(from > 0.0) || !(to > 0.0) || !from.is_finite() || !to.is_finite() {
            return Err(format!("sweep needs n >= 1 and positive finite bounds, got `{s}`"));
        }
        Ok(Sweep { from, to, count })
    }
}

impl<'de> Deserialize<'de> for SweepText {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(SweepText).map_err(serde::de::Error::custom)
    }
}

/// Sweep as it appears in a config file.
#[derive(Debug, Clone, Copy)]
pub struct SweepText(pub Sweep);

/// Flags shared by every subcommand. Every field is optional so a config
/// file can supply defaults that explicit flags override.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// JSON file with default values for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    #[serde(alias = "z_d")]
    pub zd: Option<f64>,
    /// Baseline current of the theta model.
    #[arg(long)]
    pub ib: Option<f64>,
    /// Tabulated PRC CSV (`# omega=`, `theta,Z`).
    #[arg(long)]
    pub prc_file: Option<PathBuf>,
    /// File of `key=value` overrides for the conductance model.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Samples in a computed PRC table.
    #[arg(long)]
    pub prc_samples: Option<usize>,
    /// Target spiking time.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t: Option<f64>,
    /// Amplitude bound, or `inf`.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<Bound>,
    #[arg(long)]
    pub charge_balanced: bool,
    /// Main output (JSON; CSV for `prc`). Standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Samples CSV for `solve` and `direct`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Membrane-voltage trace CSV for `validate`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Collocation order.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Solve for each target in T=a:b:n.
    #[arg(long)]
    #[serde(skip)]
    pub sweep: Option<Sweep>,
    #[serde(rename = "sweep")]
    #[arg(skip)]
    pub sweep_text: Option<SweepText>,
    /// Tolerance of the collocation NLP.
    #[arg(long)]
    pub nlp_tol: Option<f64>,
    /// Relative tolerance of the ODE integrations.
    #[arg(long)]
    pub ode_rtol: Option<f64>,
    /// Uniform samples in an indirect solution.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long, value_enum)]
    pub repeat: Option<RepeatArg>,
    /// Voltage threshold that counts as a spike.
    #[arg(long)]
    pub threshold: Option<f64>,
}

macro_rules! prefer {
    ($a:ident, $b:ident; $($f:ident),*) => {
        Flags {
            $($f: $a.$f.or($b.$f),)*
            charge_balanced: $a.charge_balanced || $b.charge_balanced,
            config: $a.config,
        }
    };
}

impl Flags {
    /// Fills unset flags from the config file named by `--config`.
    pub fn with_config_file(self) -> Result<Flags, String> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let file: Flags = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = Path::new(&path).parent().map(Path::to_path_buf).unwrap_or_default();
        let rebase = |p: Option<PathBuf>| p.map(|p| if p.is_relative() { base.join(p) } else { p });
        let file = Flags {
            prc_file: rebase(file.prc_file),
            params: rebase(file.params),
            sweep: file.sweep_text.map(|s| s.0),
            ..file
        };
        let this = self;
        Ok(prefer!(this, file; model, omega, zd, ib, prc_file, params, prc_samples, t, m, out, csv,
            trace, n, sweep, sweep_text, nlp_tol, ode_rtol, samples, cycles, repeat, threshold))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub kind: ModelArg,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prc_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prc_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub nlp_tol: f64,
    pub ode_rtol: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

/// Everything a run depends on, with defaults filled in. Embedded in every
/// JSON result.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: ModelSpec,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "M")]
    pub m: Bound,
    pub charge_balanced: bool,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub outputs: Outputs,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSpec>,
    #[serde(skip)]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateSpec {
    pub cycles: usize,
    pub repeat: RepeatArg,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

pub const DEFAULT_PRC_SAMPLES: usize = 1024;
pub const DEFAULT_N: usize = 150;

fn positive(name: &str, v: Option<f64>) -> Result<Option<f64>, String> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(format!("{name} must be positive and finite, got {x}")),
        _ => Ok(v),
    }
}

impl RunConfig {
    pub fn resolve(command: CommandKind, flags: Flags) -> Result<Self, String> {
        let flags = flags.with_config_file()?;
        let kind = flags.model.ok_or("--model is required")?;
        let omega = positive("omega", flags.omega)?;
        let z_d = positive("zd", flags.zd)?;
        let t = positive("T", flags.t)?;
        positive("nlp-tol", flags.nlp_tol)?;
        positive("ode-rtol", flags.ode_rtol)?;
        let needs_shape = matches!(kind, ModelArg::Sinusoidal | ModelArg::Sniper);
        let model = ModelSpec {
            kind,
            omega: if needs_shape { Some(omega.unwrap_or(1.0)) } else { None },
            z_d: if needs_shape { Some(z_d.unwrap_or(1.0)) } else { None },
            i_b: match kind {
                ModelArg::Theta => Some(flags.ib.ok_or("theta model needs --ib")?),
                _ => None,
            },
            prc_file: match kind {
                ModelArg::Tabulated => {
                    let p = flags.prc_file.ok_or("tabulated model needs --prc-file")?;
                    if !p.is_file() {
                        return Err(format!("PRC file {} does not exist", p.display()));
                    }
                    Some(p)
                }
                _ => None,
            },
            params: match (kind.is_conductance(), flags.params) {
                (true, Some(p)) if !p.is_file() => {
                    return Err(format!("parameter file {} does not exist", p.display()))
                }
                (true, p) => p,
                (false, Some(_)) => return Err("--params applies only to hh and ml".into()),
                (false, None) => None,
            },
            prc_samples: kind
                .is_conductance()
                .then(|| flags.prc_samples.unwrap_or(DEFAULT_PRC_SAMPLES)),
        };
        let m = flags.m.unwrap_or(Bound::Infinite);
        let uses_target = matches!(command, CommandKind::Solve | CommandKind::Direct | CommandKind::Validate);
        if uses_target && t.is_none() && flags.sweep.is_none() {
            return Err("--T (or --sweep) is required".into());
        }
        if flags.sweep.is_some() && !uses_target {
            return Err("--sweep applies to solve, direct and validate".into());
        }
        match command {
            CommandKind::Range if m == Bound::Infinite => {
                return Err("range needs a finite --M".into());
            }
            CommandKind::Validate if !kind.is_conductance() => {
                return Err("validate needs a conductance model (hh or ml)".into());
            }
            CommandKind::Direct if m == Bound::Infinite => {
                return Err("direct needs a finite --M (use a large value for an unbounded box)".into());
            }
            _ => {}
        }
        let n = (command == CommandKind::Direct).then(|| flags.n.unwrap_or(DEFAULT_N));
        if let Some(n) = n {
            if n < 2 {
                return Err(format!("N must be at least 2, got {n}"));
            }
        }
        let validate = (command == CommandKind::Validate).then(|| ValidateSpec {
            cycles: flags.cycles.unwrap_or(5),
            repeat: flags.repeat.unwrap_or(RepeatArg::Clock),
            threshold: flags.threshold,
        });
        if validate.as_ref().is_some_and(|v| v.cycles == 0) {
            return Err("--cycles must be at least 1".into());
        }
        Ok(RunConfig {
            command,
            model,
            t: if flags.sweep.is_some() { None } else { t },
            m,
            charge_balanced: flags.charge_balanced,
            n,
            outputs: Outputs {
                out: flags.out,
                csv: flags.csv,
                trace: flags.trace,
            },
            tolerances: Tolerances {
                nlp_tol: flags.nlp_tol.unwrap_or(1e-7),
                ode_rtol: flags.ode_rtol.unwrap_or(1e-11),
                samples: flags.samples.unwrap_or(2049).max(2),
            },
            validate,
            sweep: flags.sweep,
        })
    }

    /// One configuration per sweep target, or just this one.
    pub fn expand(&self) -> Vec<RunConfig> {
        match self.sweep {
            None => vec![self.clone()],
            Some(s) => s
                .values()
                .into_iter()
                .enumerate()
                .map(|(i, t)| {
                    let mut c = self.clone();
                    c.t = Some(t);
                    c.sweep = None;
                    c.outputs = Outputs {
                        out: c.outputs.out.map(|p| indexed(&p, i)),
                        csv: c.outputs.csv.map(|p| indexed(&p, i)),
                        trace: c.outputs.trace.map(|p| indexed(&p, i)),
                    };
                    c
                })
                .collect(),
        }
    }
}

/// `dir/name.ext` → `dir/name_<i>.ext`.
pub fn indexed(path: &Path, i: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{i}"),
    };
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_parsing() {
        assert_eq!("inf".parse::<Bound>(), Ok(Bound::Infinite));
        assert_eq!("0.6".parse::<Bound>(), Ok(Bound::Finite(0.6)));
        assert!("-1".parse::<Bound>().is_err());
        assert!("0".parse::<Bound>().is_err());
    }

    #[test]
    fn sweep_parsing() {
        let s: Sweep = "T=4:6:3".parse().unwrap();
        assert_eq!(s.values(), vec![4.0, 5.0, 6.0]);
        assert!("4:6:3".parse::<Sweep>().is_err());
        assert!("T=4:6:0".parse::<Sweep>().is_err());
    }

    #[test]
    fn indexed_names() {
        assert_eq!(indexed(Path::new("out/run.json"), 3), PathBuf::from("out/run_3.json"));
        assert_eq!(indexed(Path::new("trace"), 0), PathBuf::from("trace_0"));
    }
}
