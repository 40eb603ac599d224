use thiserror::Error;

/// Errors raised by the solvers and models in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integrand is not finite at phase {theta}")]
    NonFiniteIntegrand { theta: f64 },
    #[error("no convergence after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("singular Jacobian at ({x:e}, {y:e})")]
    SingularJacobian { x: f64, y: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("too many integration steps (limit {limit})")]
    TooManySteps { limit: usize },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("sample grid is not uniform: {0}")]
    NonUniformGrid(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("radicand negative at phase {theta} (value {radicand:e})")]
    InfeasiblePhase { theta: f64, radicand: f64 },
    #[error("phase response too close to zero at phase {theta}")]
    NearZeroPrc { theta: f64 },
    #[error("extremal constants (c = {c}, mu = {mu}) are infeasible")]
    InfeasibleParams { c: f64, mu: f64 },
    #[error("no feasible control: {0}")]
    Infeasible(String),
    #[error("bang control stalls the phase at {theta}")]
    BangInfeasible { theta: f64 },
    #[error("unclipped extremal never reaches the bound (arcsine argument {argument})")]
    NoSwitching { argument: f64 },
    #[error("target time {target} outside feasible range [{min}, {max}]")]
    OutOfRange { target: f64, min: f64, max: f64 },
    #[error("model does not oscillate: {0}")]
    NoOscillation(String),
    #[error("adjoint did not settle to a periodic solution (change {change:e})")]
    AdjointNoConvergence { change: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that mean "no control reaches the target" rather than
    /// a numerical failure.
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::OutOfRange { .. }
                | Error::Infeasible(_)
                | Error::InfeasibleParams { .. }
                | Error::BangInfeasible { .. }
        )
    }

    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::SingularJacobian { .. }
                | Error::StepSizeUnderflow { .. }
                | Error::TooManySteps { .. }
                | Error::AdjointNoConvergence { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
