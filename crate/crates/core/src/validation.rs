//! Closed-loop checks: forward simulation of phase and conductance models
//! under a designed stimulus, spike detection, and an independent
//! trapezoidal audit of cost and charge.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::conductance::{ConductanceModel, LimitCycle};
use crate::error::{Error, Result};
use crate::numerics::{integrate_ode, local_cubic, Direction, OdeConfig, Trajectory};
use crate::phase::{PhaseModel, PhaseTrajectory};
use crate::solution::ControlSolution;

/// A stimulus sampled on [0, period], repeated by the full-model simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledControl {
    pub period: f64,
    pub times: Vec<f64>,
    pub currents: Vec<f64>,
}

impl SampledControl {
    pub fn new(times: Vec<f64>, currents: Vec<f64>) -> Result<Self> {
        if times.len() != currents.len() || times.len() < 2 {
            return Err(Error::BadParameter(
                "control needs at least two (t, I) samples of equal length".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParameter(
                "control times must start at 0 and increase".into(),
            ));
        }
        if currents.iter().any(|c| !c.is_finite()) {
            return Err(Error::BadParameter("non-finite control sample".into()));
        }
        let period = times[times.len() - 1];
        Ok(Self { period, times, currents })
    }

    pub fn from_solution(solution: &ControlSolution) -> Result<Self> {
        Self::new(solution.times(), solution.currents())
    }

    /// I ≡ 0 over `period`.
    pub fn zero(period: f64) -> Result<Self> {
        Self::new(vec![0.0, period], vec![0.0, 0.0])
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            currents: self.currents.iter().map(|c| k * c).collect(),
            ..self.clone()
        }
    }

    /// I(t) for t ∈ [0, period], zero outside.
    pub fn at(&self, t: f64) -> f64 {
        if !(0.0..=self.period).contains(&t) {
            return 0.0;
        }
        local_cubic(self.times.len(), |i| self.times[i], |i| self.currents[i], t)
    }

    /// (∫ I² dt, ∫ I dt) over one period by the trapezoid rule.
    pub fn trapezoid(&self) -> (f64, f64) {
        let mut cost = 0.0;
        let mut charge = 0.0;
        for k in 1..self.times.len() {
            let h = self.times[k] - self.times[k - 1];
            let (a, b) = (self.currents[k - 1], self.currents[k]);
            cost += 0.5 * h * (a * a + b * b);
            charge += 0.5 * h * (a + b);
        }
        (cost, charge)
    }
}

/// How the stimulus is restarted from one cycle to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatMode {
    /// Restart every `period`, independent of the response.
    #[default]
    Clock,
    /// Restart at each detected spike.
    SpikeTriggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullSimConfig {
    pub n_cycles: usize,
    /// Upward V crossing that counts as a spike; the model's marker if unset.
    pub threshold: Option<f64>,
    pub repeat: RepeatMode,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for FullSimConfig {
    fn default() -> Self {
        Self {
            n_cycles: 5,
            threshold: None,
            repeat: RepeatMode::Clock,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrainReport {
    pub spike_times: Vec<f64>,
    pub inter_spike_intervals: Vec<f64>,
    pub mean_interval: f64,
    pub net_charge_per_cycle: f64,
    pub control_cost_per_cycle: f64,
}

impl SpikeTrainReport {
    fn new(spike_times: Vec<f64>, control: &SampledControl) -> Result<Self> {
        if spike_times.len() < 2 {
            return Err(Error::NoOscillation(format!(
                "{} spike(s) detected under the control",
                spike_times.len()
            )));
        }
        let inter_spike_intervals: Vec<f64> = spike_times.windows(2).map(|w| w[1] - w[0]).collect();
        let mean_interval =
            inter_spike_intervals.iter().sum::<f64>() / inter_spike_intervals.len() as f64;
        let (cost, charge) = control.trapezoid();
        Ok(Self {
            spike_times,
            inter_spike_intervals,
            mean_interval,
            net_charge_per_cycle: charge,
            control_cost_per_cycle: cost,
        })
    }
}

/// Report plus the membrane potential trace it was read from.
#[derive(Debug, Clone)]
pub struct FullSimulation {
    pub report: SpikeTrainReport,
    pub trace: Vec<(f64, f64)>,
}

impl FullSimulation {
    /// `t,V` CSV with a header row.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,V\n");
        for (t, v) in &self.trace {
            out.push_str(&format!("{:.11e},{:.11e}\n", t, v));
        }
        out
    }
}

/// (cost, net charge, achieved T) by the trapezoid rule on the solution's
/// own samples.
pub fn audit(solution: &ControlSolution) -> (f64, f64, f64) {
    let s = &solution.samples;
    let mut cost = 0.0;
    let mut charge = 0.0;
    for w in s.windows(2) {
        let h = w[1].t - w[0].t;
        cost += 0.5 * h * (w[0].current.powi(2) + w[1].current.powi(2));
        charge += 0.5 * h * (w[0].current + w[1].current);
    }
    let t = s.last().map_or(solution.achieved_t, |x| x.t);
    (cost, charge, t)
}

/// Integrates θ̇ = f + gI(t), ṗ = I(t) from (0, 0) over the solution's
/// time span, reporting at its sample times.
pub fn simulate_phase(model: &PhaseModel, control: &ControlSolution) -> Result<PhaseTrajectory> {
    let times = control.times();
    if times.len() < 2 {
        return Err(Error::BadParameter("control has no time samples".into()));
    }
    let end = times[times.len() - 1];
    let traj = integrate_ode(
        |t, y, dy| {
            let i = control.current_at(t);
            let (f, g) = model.fg(y[0]);
            dy[0] = f + g * i;
            dy[1] = i;
        },
        &[0.0, 0.0],
        (0.0, end),
        &OdeConfig::with_tol(1e-12, 1e-13),
    )?;
    let mut out = PhaseTrajectory {
        times: Vec::with_capacity(times.len()),
        theta: Vec::with_capacity(times.len()),
        p: Vec::with_capacity(times.len()),
        control: Vec::with_capacity(times.len()),
    };
    for (t, sample) in times.iter().zip(&control.samples) {
        let y = traj.eval(*t);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { t: *t });
        }
        out.times.push(*t);
        out.theta.push(y[0]);
        out.p.push(y[1]);
        out.control.push(sample.current);
    }
    Ok(out)
}

pub fn simulate_full(
    model: &ConductanceModel,
    cycle: &LimitCycle,
    control: &SampledControl,
    n_cycles: usize,
) -> Result<SpikeTrainReport> {
    let cfg = FullSimConfig {
        n_cycles,
        ..FullSimConfig::default()
    };
    Ok(simulate_full_with(model, cycle, control, &cfg)?.report)
}

/// Drives the full model from its spike state (θ = 0) with the control
/// added to the baseline current and repeated each cycle.
pub fn simulate_full_with(
    model: &ConductanceModel,
    cycle: &LimitCycle,
    control: &SampledControl,
    cfg: &FullSimConfig,
) -> Result<FullSimulation> {
    if cfg.n_cycles == 0 {
        return Err(Error::BadParameter("need at least one cycle".into()));
    }
    let ode = OdeConfig::with_tol(cfg.rel_tol, cfg.abs_tol);
    let threshold = cfg.threshold.unwrap_or_else(|| model.marker());
    let period = control.period;
    let mut spikes = vec![0.0];
    let mut trace = Vec::new();
    match cfg.repeat {
        RepeatMode::Clock => {
            let span = (0.0, cfg.n_cycles as f64 * period + 0.5 * period.max(cycle.period));
            let traj = drive(model, cycle.start(), span, &ode, |t| {
                control.at(t.rem_euclid(period))
            })?;
            let min_gap = 0.25 * period.min(cycle.period);
            for c in traj.crossings(|_, y| y[0] - threshold, Direction::Rising) {
                if c.t > min_gap && spikes.len() <= cfg.n_cycles {
                    spikes.push(c.t);
                }
            }
            append_trace(&mut trace, &traj, 0.0);
        }
        RepeatMode::SpikeTriggered => {
            let mut y = cycle.start().to_vec();
            let mut t0 = 0.0;
            let reach = 2.0 * period.max(cycle.period);
            let min_gap = 0.25 * period.min(cycle.period);
            for _ in 0..cfg.n_cycles {
                let traj = drive(model, &y, (0.0, reach), &ode, |t| control.at(t))?;
                let next = traj
                    .crossings(|_, y| y[0] - threshold, Direction::Rising)
                    .into_iter()
                    .find(|c| c.t > min_gap);
                let Some(next) = next else {
                    append_trace(&mut trace, &traj, t0);
                    break;
                };
                let kept = truncate(&traj, next.t);
                append_trace(&mut trace, &kept, t0);
                t0 += next.t;
                spikes.push(t0);
                y = next.state;
            }
        }
    }
    let report = SpikeTrainReport::new(spikes, control)?;
    Ok(FullSimulation { report, trace })
}

fn drive(
    model: &ConductanceModel,
    y0: &[f64],
    span: (f64, f64),
    ode: &OdeConfig,
    current: impl Fn(f64) -> f64,
) -> Result<Trajectory> {
    let failure = RefCell::new(None);
    let traj = integrate_ode(
        |t, y, dy| {
            if let Err(e) = model.rhs(y, current(t), dy) {
                failure.borrow_mut().get_or_insert(e);
                dy.fill(f64::NAN);
            }
        },
        y0,
        span,
        ode,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let traj = traj?;
    if let Some((t, _)) = traj
        .times
        .iter()
        .zip(&traj.states)
        .find(|(_, s)| !model.gating_in_range(s, 1e-9))
    {
        return Err(Error::BadParameter(format!(
            "gating variable left [0, 1] at t = {t}"
        )));
    }
    Ok(traj)
}

fn truncate(traj: &Trajectory, end: f64) -> Trajectory {
    let mut out = traj.clone();
    let keep = out.times.partition_point(|t| *t < end);
    out.times.truncate(keep);
    out.states.truncate(keep);
    out.times.push(end);
    out.states.push(traj.eval(end));
    out
}

fn append_trace(trace: &mut Vec<(f64, f64)>, traj: &Trajectory, offset: f64) {
    let skip = usize::from(!trace.is_empty());
    trace.extend(
        traj.times
            .iter()
            .zip(&traj.states)
            .skip(skip)
            .map(|(t, y)| (t + offset, y[0])),
    );
}
