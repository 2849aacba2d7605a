//! Problem adapters: k-sat instances and NK landscapes.
//!
//! Both map onto binary agents with move `0` meaning false and move `1`
//! meaning true.

pub mod ksat;
pub mod nk;

pub use ksat::{
    count_solutions, emit_dimacs, enumerate_solutions, expected_violation, generate_planted_ksat,
    ksat_objective, parse_dimacs, planted_ksat, Clause, CnfInstance, Literal,
};
pub use nk::{generate_nk, nk_exhaustive_minimum, nk_objective, parse_nk, NkInstance};
