//! Shared fixtures for the criterion benchmarks.

use pc_core::problems::{generate_nk, generate_planted_ksat, ksat_objective, nk_objective};
use pc_core::{Annealing, FactoredObjective, SolverConfig};

/// Planted 3-SAT objective at clause ratio 4.2.
pub fn ksat_fixture(n: usize, seed: u64) -> FactoredObjective {
    let clauses = (n as f64 * 4.2).round() as usize;
    ksat_objective(&generate_planted_ksat(n, clauses, 3, seed).expect("valid planted instance"))
}

pub fn nk_fixture(n: usize, k: usize, seed: u64) -> FactoredObjective {
    nk_objective(&generate_nk(n, k, seed).expect("valid NK instance")).expect("NK objective")
}

/// Constrained solver settings capped at `inner` iterations.
pub fn ksat_config(temperature: f64, inner: usize) -> SolverConfig {
    SolverConfig {
        temperature,
        step_lambda: 0.5,
        max_total_inner: inner,
        ..SolverConfig::constrained()
    }
}

/// Geometric cooling for unconstrained landscapes, capped at `inner` iterations.
pub fn nk_config(inner: usize) -> SolverConfig {
    SolverConfig {
        temperature: 0.1,
        min_temperature: 1e-4,
        annealing: Annealing::Geometric { factor: 0.9 },
        max_total_inner: inner,
        ..SolverConfig::default()
    }
}
