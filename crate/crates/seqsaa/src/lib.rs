//! Adaptive sequential sample-average approximation for two-stage
//! stochastic linear programs.
//!
//! A sequence of sampled problems of growing size is solved inexactly by
//! a warm-started level bundle method, each to a tolerance balancing
//! solution error against estimated sampling error, with a finite-time
//! stopping rule that certifies solution quality through a one-sided
//! confidence interval on the optimality gap.

pub mod bench;
pub mod bundle;
pub mod lp;
pub mod model;
pub mod num;
pub mod rng;
pub mod sampling;
pub mod sequential;
pub mod warmstart;

pub use model::{SamplePathProblem, Scenario, TwoStageInstance};
pub use sequential::{RunConfig, RunReport};
