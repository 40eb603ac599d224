//! The five subcommands.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use spikeopt::{
    assemble_nlp, compute_prc, feasible_range, find_limit_cycle, lgl_grid, simulate_full_with,
    solve_bounded_with, solve_direct, solve_extremal_with, ConductanceModel, ControlArc,
    ControlSolution, FullSimConfig, LimitCycle, NlpOptions, PhaseModel, PrcTable, SampledControl,
    SolverOptions, SpikeTrainReport,
};
use thiserror::Error;

use crate::config::{CommandKind, ModelArg, RunConfig};
use crate::output::{csv, fmt12, to_json, write_atomic};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Solver(#[from] spikeopt::Error),
    #[error("{0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use spikeopt::Error as E;
        match self {
            CliError::Solver(e) if e.is_infeasible() => 2,
            CliError::Solver(e) if e.is_convergence_failure() => 3,
            CliError::Solver(
                E::NonFiniteState { .. }
                | E::NonFiniteIntegrand { .. }
                | E::InfeasiblePhase { .. }
                | E::NearZeroPrc { .. }
                | E::NoSwitching { .. },
            ) => 3,
            _ => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Models built once per invocation and shared by every sweep item.
pub struct Prepared {
    pub phase: PhaseModel,
    pub plant: Option<(ConductanceModel, LimitCycle)>,
    pub table: Option<PrcTable>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let spec = &cfg.model;
    let shape = |name: &str, v: Option<f64>| v.ok_or_else(|| CliError::Input(format!("missing {name}")));
    match spec.kind {
        ModelArg::Sinusoidal => Ok(Prepared {
            phase: PhaseModel::sinusoidal(shape("omega", spec.omega)?, shape("zd", spec.z_d)?)?,
            plant: None,
            table: None,
        }),
        ModelArg::Sniper => Ok(Prepared {
            phase: PhaseModel::sniper(shape("omega", spec.omega)?, shape("zd", spec.z_d)?)?,
            plant: None,
            table: None,
        }),
        ModelArg::Theta => Ok(Prepared {
            phase: PhaseModel::theta(shape("ib", spec.i_b)?)?,
            plant: None,
            table: None,
        }),
        ModelArg::Tabulated => {
            let path = spec.prc_file.as_deref().ok_or_else(|| CliError::Input("missing PRC file".into()))?;
            let table = PrcTable::from_csv(&read(path)?)?;
            Ok(Prepared {
                phase: PhaseModel::tabulated(&table)?,
                plant: None,
                table: Some(table),
            })
        }
        ModelArg::Hh | ModelArg::Ml => {
            let mut model = if spec.kind == ModelArg::Hh {
                ConductanceModel::hodgkin_huxley()
            } else {
                ConductanceModel::morris_lecar()
            };
            if let Some(p) = &spec.params {
                model.apply_overrides(&read(p)?)?;
            }
            let cycle = find_limit_cycle(&model)?;
            let samples = spec.prc_samples.unwrap_or(crate::config::DEFAULT_PRC_SAMPLES);
            let table = compute_prc(&model, &cycle, samples)?;
            log::info!("{} cycle: period {}", model.kind(), cycle.period);
            Ok(Prepared {
                phase: PhaseModel::tabulated(&table)?,
                plant: Some((model, cycle)),
                table: Some(table),
            })
        }
    }
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        ode_rel_tol: cfg.tolerances.ode_rtol,
        ode_abs_tol: cfg.tolerances.ode_rtol * 1e-2,
        samples: cfg.tolerances.samples,
        ..SolverOptions::default()
    }
}

fn target(cfg: &RunConfig) -> Result<f64> {
    cfg.t.ok_or_else(|| CliError::Input("missing --T".into()))
}

/// Indirect solution: clipped when M is finite.
fn design(cfg: &RunConfig, model: &PhaseModel) -> Result<ControlSolution> {
    let t = target(cfg)?;
    let opts = solver_options(cfg);
    Ok(match cfg.m.finite() {
        Some(m) => solve_bounded_with(model, t, m, cfg.charge_balanced, &opts)?.1,
        None => solve_extremal_with(model, t, cfg.charge_balanced, &opts)?,
    })
}

#[derive(Serialize)]
struct SolveReport<'a> {
    config: &'a RunConfig,
    c: f64,
    mu: f64,
    cost: f64,
    net_charge: f64,
    #[serde(rename = "achieved_T")]
    achieved_t: f64,
    arcs: &'a [ControlArc],
    switch_phases: &'a [f64],
}

/// Runs one (already expanded) configuration; returns text destined for
/// standard output.
pub fn run_one(cfg: &RunConfig, prep: &Prepared) -> Result<String> {
    match cfg.command {
        CommandKind::Solve => solve(cfg, prep),
        CommandKind::Range => range(cfg, prep),
        CommandKind::Prc => prc(cfg, prep),
        CommandKind::Direct => direct(cfg, prep),
        CommandKind::Validate => validate(cfg, prep),
    }
}

/// Sends `text` to `path`, or returns it for standard output.
fn emit(path: Option<&Path>, text: String) -> Result<String> {
    match path {
        Some(p) => write(p, &text).map(|_| String::new()),
        None => Ok(text),
    }
}

fn solve(cfg: &RunConfig, prep: &Prepared) -> Result<String> {
    let sol = design(cfg, &prep.phase)?;
    let report = SolveReport {
        config: cfg,
        c: sol.params.c,
        mu: sol.params.mu,
        cost: sol.cost,
        net_charge: sol.net_charge,
        achieved_t: sol.achieved_t,
        arcs: &sol.arcs,
        switch_phases: &sol.switch_phases,
    };
    if let Some(p) = &cfg.outputs.csv {
        let rows = sol.samples.iter().map(|s| [s.t, s.theta, s.current, s.charge]);
        write(p, &csv("t,theta,I,p", rows))?;
    }
    emit(cfg.outputs.out.as_deref(), to_json(&report)?)
}

fn range(cfg: &RunConfig, prep: &Prepared) -> Result<String> {
    let m = cfg
        .m
        .finite()
        .ok_or_else(|| CliError::Input("range needs a finite --M".into()))?;
    let r = feasible_range(&prep.phase, m, cfg.charge_balanced)?;
    let t_max = if r.t_max_m.is_finite() { fmt12(r.t_max_m) } else { "unbounded above".into() };
    let (lo, hi) = match r.t_istar {
        Some((a, b)) => (fmt12(a), if b.is_finite() { fmt12(b) } else { "unbounded above".into() }),
        None => ("none".into(), "none".into()),
    };
    let text = format!(
        "T_min_M = {}\nT_max_M = {t_max}\nT_Istar_min = {lo}\nT_Istar_max = {hi}\n",
        fmt12(r.t_min_m)
    );
    if let Some(p) = &cfg.outputs.out {
        let num = |x: f64| if x.is_finite() { json!(x) } else { json!("inf") };
        let value = json!({
            "config": cfg,
            "T_min_M": num(r.t_min_m),
            "T_max_M": num(r.t_max_m),
            "T_Istar_min": r.t_istar.map(|t| num(t.0)),
            "T_Istar_max": r.t_istar.map(|t| num(t.1)),
        });
        write(p, &to_json(&value)?)?;
    }
    Ok(text)
}

fn prc(cfg: &RunConfig, prep: &Prepared) -> Result<String> {
    let table = match &prep.table {
        Some(t) => t.clone(),
        None => {
            let n = cfg.model.prc_samples.unwrap_or(crate::config::DEFAULT_PRC_SAMPLES);
            PrcTable::from_fn(n, prep.phase.omega(), |theta| prep.phase.g(theta))
        }
    };
    emit(cfg.outputs.out.as_deref(), table.to_csv())
}

fn direct(cfg: &RunConfig, prep: &Prepared) -> Result<String> {
    let t = target(cfg)?;
    let m = cfg
        .m
        .finite()
        .ok_or_else(|| CliError::Input("direct needs a finite --M".into()))?;
    let n = cfg.n.unwrap_or(crate::config::DEFAULT_N);
    let grid = lgl_grid(n)?;
    let problem = assemble_nlp(&prep.phase, t, m, cfg.charge_balanced, &grid)?;
    let indirect = design(cfg, &prep.phase).ok();
    let opts = NlpOptions {
        tol: cfg.tolerances.nlp_tol,
        ..NlpOptions::default()
    };
    let sol = solve_direct(&problem, indirect.as_ref(), &opts)?;
    if let Some(p) = &cfg.outputs.csv {
        let rows = (0..sol.tau.len()).map(|i| [sol.tau[i], sol.t[i], sol.theta[i], sol.current[i], sol.charge[i]]);
        write(p, &csv("tau,t,theta,I,p", rows))?;
    }
    let value = json!({
        "config": cfg,
        "N": sol.n,
        "objective": sol.objective,
        "stationarity": sol.stationarity,
        "feasibility": sol.feasibility,
        "warm_started": sol.warm_started,
        "peak_current": sol.peak_current(),
        "indirect_cost": indirect.map(|s| s.cost),
    });
    emit(cfg.outputs.out.as_deref(), to_json(&value)?)
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    config: &'a RunConfig,
    natural_period: f64,
    design_cost: f64,
    design_net_charge: f64,
    #[serde(flatten)]
    report: &'a SpikeTrainReport,
}

fn validate(cfg: &RunConfig, prep: &Prepared) -> Result<String> {
    let (model, cycle) = prep
        .plant
        .as_ref()
        .ok_or_else(|| CliError::Input("validate needs a conductance model".into()))?;
    let spec = cfg
        .validate
        .as_ref()
        .ok_or_else(|| CliError::Input("missing validation settings".into()))?;
    let sol = design(cfg, &prep.phase)?;
    let control = SampledControl::from_solution(&sol)?;
    let sim_cfg = FullSimConfig {
        n_cycles: spec.cycles,
        threshold: spec.threshold,
        repeat: spec.repeat.into(),
        ..FullSimConfig::default()
    };
    let sim = simulate_full_with(model, cycle, &control, &sim_cfg)?;
    if let Some(p) = &cfg.outputs.trace {
        write(p, &sim.trace_csv())?;
    }
    let value = ValidateReport {
        config: cfg,
        natural_period: cycle.period,
        design_cost: sol.cost,
        design_net_charge: sol.net_charge,
        report: &sim.report,
    };
    emit(cfg.outputs.out.as_deref(), to_json(&value)?)
}
