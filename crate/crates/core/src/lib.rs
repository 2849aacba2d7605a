//! Probability Collectives: distributed optimization by minimizing the maxent
//! Lagrangian `L(q) = E_q[G] - T S(q)` over product distributions and
//! mixtures of products.
//!
//! The crate is organised bottom-up:
//!
//! * [`distribution`]: product distributions and simplex arithmetic.
//! * [`objective`]: factored objectives, constraints and exact expectations.
//! * [`updaters`]: Brouwer, Nearest-Newton and gradient updates plus the
//!   annealed multiplier loop ([`updaters::solve`]).
//! * [`semicoord`]: semicoordinate maps, pushforwards and permutation search.
//! * [`mixture`]: the mixture-of-products solver with the variational
//!   Jensen-Shannon bound.
//! * [`problems`]: k-sat (DIMACS) and NK landscape adapters.
//! * [`montecarlo`]: sample-based conditional expectations and difference
//!   utilities.
//! * [`oracle`]: exact enumeration references for tests.
//! * [`trace`]: per-iteration trace records.

pub mod config;
pub mod distribution;
pub mod error;
pub mod mixture;
pub mod montecarlo;
pub mod objective;
pub mod oracle;
pub mod problems;
pub mod semicoord;
pub mod trace;
pub mod updaters;

pub use config::{Annealing, SolverConfig, UpdateRule};
pub use distribution::{JointConfiguration, ProductDistribution};
pub use error::{PcError, Result};
pub use objective::{Factor, FactorGraph, FactoredObjective, Objective};
