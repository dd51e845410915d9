//! Boosted double-proximal subgradient solver for structured nonsmooth
//! nonconvex programs `min f(x) + g(x) − Σᵢ hᵢ(Ψᵢ(x))`.
//!
//! * [`problem`]: oracle traits and the primal-dual objective `Φ`.
//! * [`prox`]: projections, closed-form proxes and Asplund utilities.
//! * [`solver`]: the iteration, linesearch, trial stepsize and stopping.
//! * [`phiq`], [`clustering`], [`heron`]: experiment builders.
//! * [`exec`]: batch execution (rayon behind the `parallel` feature).

pub mod clustering;
pub mod error;
pub mod exec;
pub mod heron;
pub mod phiq;
pub mod problem;
pub mod prox;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use problem::{CompositeProblem, PrimalDualPoint};
pub use solver::{run, RunResult, RunStatus, SolverConfig};
