//! Minimum-power, charge-balanced current stimuli that make a phase-reduced
//! neuron oscillator spike at a prescribed time.

pub mod error;
pub mod bounded;
pub mod collocation;
pub mod conductance;
pub mod extremal;
mod law;
pub mod numerics;
pub mod phase;
mod shooting;
pub mod solution;
pub mod validation;

pub use error::{Error, Result};
pub use bounded::{
    bang_costate_residual, bang_max_time, bang_min_time, feasible_range, istar_time_range,
    sinusoidal_switch_phases, solve_bounded, solve_bounded_with, BoundedPolicy, FeasibleRange,
};
pub use collocation::{
    assemble_nlp, lgl_grid, solve_direct, solve_nlp, solve_nlp_report, CollocationGrid, DirectSolution, NlpOptions,
    NlpProblem, NlpSolution,
};
pub use conductance::{
    compute_prc, direct_prc, find_limit_cycle, find_limit_cycle_with, ConductanceKind,
    ConductanceModel, CycleConfig, LimitCycle,
};
pub use extremal::{
    eval_costate, eval_unbounded_control, hamiltonian_drift, net_charge, solve_extremal,
    solve_extremal_with, spiking_time,
};
pub use phase::{ModelKind, PhaseJet, PhaseModel, PhaseTrajectory, PrcTable};
pub use shooting::{SolverOptions, TIME_TOLERANCE};
pub use solution::{
    ArcKind, ControlArc, ControlSample, ControlSolution, ExtremalParams, ExtremalSolution,
};
pub use validation::{
    audit, simulate_full, simulate_full_with, simulate_phase, FullSimConfig, FullSimulation,
    RepeatMode, SampledControl, SpikeTrainReport,
};
