//! Anderson acceleration for the flux-split (LoDestro) coupling iteration
//! of a stiff 1D transport equation.
//!
//! * [`denselin`]: thin QR with column append and oldest-column removal.
//! * [`accel`]: damped fixed-point iteration with delayed Anderson
//!   acceleration and adaptive damping and depth.
//! * [`transport`]: grid, flux split, tridiagonal implicit step, and the
//!   coupling map `G(p)`.
//! * [`flux`]: the analytic stiff flux, source, noise and steady-state
//!   reference.
//! * [`experiment`]: serializable problem and solver configuration.
//! * [`tune`]: sweeps and a sequential parameter tuner.

pub mod accel;
pub mod denselin;
pub mod experiment;
pub mod flux;
pub mod transport;
pub mod tune;

pub use accel::{
    solve, AccelConfig, ConvergenceNorm, DampingMode, DepthMode, SolveReport, SolveStatus,
};
pub use experiment::{ExperimentConfig, ProblemConfig};
