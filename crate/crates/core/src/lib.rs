//! Optimal repeated disclosure for binary-state principal-agent persuasion problems.
//!
//! Beliefs are probabilities of state `ω₁`; every analytic quantity is an exact rational.

pub mod baselines;
pub mod envelopes;
pub mod lp;
pub mod oracle;
pub mod policy;
pub mod problem;
pub mod scalar;
pub mod simulate;
pub mod thresholds;

pub use envelopes::{Envelopes, PiecewiseLinearConvex, Split};

pub use problem::{Problem, ProblemError};
pub use scalar::Scalar;
pub use thresholds::ThresholdLadder;
pub use policy::{Decision, PolicyStep, Region, Solver, SplitOutcome, StatePoint};
pub use baselines::{BaselineKind, BaselineResult};
pub use oracle::{GridConfig, OracleError};
pub use simulate::{DisclosurePolicy, MonteCarlo, Simulator, StateGraph, Trajectory};
