//! Shared numerical primitives: quadrature, root finding, ODE integration
//! and periodic interpolation.

pub mod interp;
pub mod ode;
pub mod quadrature;
pub mod roots;

pub use interp::{local_cubic, PeriodicSpline};
pub use ode::{integrate_ode, integrate_until, Crossing, Direction, OdeConfig, Trajectory};
pub use quadrature::{integrate_interval, integrate_periodic, integrate_piecewise, QuadratureSpec};
pub use roots::{bisect_predicate, brent, find_root_2d, RootFindConfig};
