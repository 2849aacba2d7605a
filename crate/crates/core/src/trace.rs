//! Per-iteration trace records and their line-oriented text encoding.
//!
//! Each record is one line of space-separated `key=value` pairs, starting
//! with the schema version (`v=1`). Floats use Rust's shortest round-trip
//! formatting, so identical runs produce byte-identical traces as long as the
//! wall-clock field is left out.

use std::fmt::Write as _;

use crate::distribution::JointConfiguration;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Inner,
    Multiplier,
    Anneal,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Inner => "inner",
            Phase::Multiplier => "multiplier",
            Phase::Anneal => "anneal",
        }
    }
}

/// Per-component fields of a mixture run.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentTrace {
    pub weight: f64,
    pub mode: JointConfiguration,
    pub mode_objective: f64,
    pub mode_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Record sequence number; strictly increasing within a run.
    pub iteration: u64,
    /// Inner iterations performed so far.
    pub inner_iterations: u64,
    pub phase: Phase,
    pub lagrangian: f64,
    pub expected_objective: f64,
    pub expected_violation: f64,
    pub mode_violations: usize,
    pub temperature: f64,
    pub effective_temperature: f64,
    pub lambda_l1: f64,
    /// Raw multipliers after this record; kept in memory only.
    pub multipliers: Vec<f64>,
    pub js_variational: Option<f64>,
    pub components: Vec<ComponentTrace>,
    pub wall_ms: f64,
}

impl TraceRecord {
    /// Encodes the record as one line (without the trailing newline).
    /// Negative zeros are written as `0`.
    pub fn to_line(&self, include_timing: bool) -> String {
        let mut s = String::with_capacity(160);
        let _ = write!(
            s,
            "v={} iter={} inner={} phase={} L={} EG={} EV={} mode_viol={} T={} T_hat={} lambda_l1={}",
            TRACE_SCHEMA_VERSION,
            self.iteration,
            self.inner_iterations,
            self.phase.as_str(),
            self.lagrangian + 0.0,
            self.expected_objective + 0.0,
            self.expected_violation + 0.0,
            self.mode_violations,
            self.temperature,
            self.effective_temperature,
            self.lambda_l1,
        );
        if let Some(js) = self.js_variational {
            let _ = write!(s, " js={}", js + 0.0);
        }
        for (m, c) in self.components.iter().enumerate() {
            let _ = write!(
                s,
                " c{m}.w={} c{m}.G={} c{m}.viol={} c{m}.mode={}",
                c.weight,
                c.mode_objective + 0.0,
                c.mode_violations,
                c.mode
            );
        }
        if include_timing {
            let _ = write!(s, " ms={:.3}", self.wall_ms);
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.lagrangian,
            self.expected_objective,
            self.expected_violation,
            self.temperature,
            self.effective_temperature,
            self.lambda_l1,
            self.wall_ms,
        ];
        scalars.iter().all(|v| v.is_finite())
            && self.js_variational.is_none_or(f64::is_finite)
            && self
                .components
                .iter()
                .all(|c| c.weight.is_finite() && c.mode_objective.is_finite())
    }
}

/// Splits a trace line back into its `key=value` pairs.
pub fn parse_line(line: &str) -> Vec<(&str, &str)> {
    line.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .collect()
}
