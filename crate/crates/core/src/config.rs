//! Solver configuration shared by the single-product and mixture solvers.

use crate::distribution::DEFAULT_FLOOR;
use crate::error::{PcError, Result};

/// Starting temperature used for single-product k-sat runs.
pub const KSAT_PRODUCT_TEMPERATURE: f64 = 1.5e-3;
/// Starting temperature used for mixture runs.
pub const MIXTURE_TEMPERATURE: f64 = 1e-1;

/// Which rule the inner loop iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    Brouwer,
    NearestNewton,
    Gradient,
}

impl std::str::FromStr for UpdateRule {
    type Err = PcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brouwer" => Ok(Self::Brouwer),
            "newton" | "nearest-newton" => Ok(Self::NearestNewton),
            "gradient" => Ok(Self::Gradient),
            other => Err(PcError::InvalidConfig(format!(
                "unknown update rule `{other}`"
            ))),
        }
    }
}

/// How the temperature is lowered between multiplier epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Annealing {
    /// Divide the Lagrangian by the multiplier sum after every multiplier
    /// update, so the effective temperature is `T / sum(lambda)`.
    LambdaRescale,
    /// `T <- factor * T` after each multiplier loop.
    Geometric { factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Temperature `T`; `beta = 1/T` is derived on demand.
    pub temperature: f64,
    pub step_q: f64,
    pub step_lambda: f64,
    /// Inner loop stops once the projected gradient 2-norm drops below this.
    pub grad_tol: f64,
    /// Multiplier loop stops once the expected total violation drops below this.
    pub violation_tol: f64,
    pub rule: UpdateRule,
    pub annealing: Annealing,
    /// Outer loop stops once the effective temperature falls below this.
    pub min_temperature: f64,
    pub max_inner_per_minimization: usize,
    /// Cap on inner iterations summed over the whole run.
    pub max_total_inner: usize,
    pub max_multiplier_updates: usize,
    pub max_anneal_steps: usize,
    pub seed: u64,
    pub floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            step_q: 0.1,
            step_lambda: 0.5,
            grad_tol: 1e-6,
            violation_tol: 1e-3,
            rule: UpdateRule::Brouwer,
            annealing: Annealing::Geometric { factor: 0.9 },
            min_temperature: 1e-6,
            max_inner_per_minimization: 200,
            max_total_inner: 100_000,
            max_multiplier_updates: 10_000,
            max_anneal_steps: 1_000,
            seed: 0,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl SolverConfig {
    /// Defaults for constraint problems: multiplier-driven annealing.
    pub fn constrained() -> Self {
        Self {
            annealing: Annealing::LambdaRescale,
            ..Self::default()
        }
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.temperature
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(PcError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("temperature", self.temperature)?;
        positive("step_q", self.step_q)?;
        positive("step_lambda", self.step_lambda)?;
        positive("grad_tol", self.grad_tol)?;
        positive("violation_tol", self.violation_tol)?;
        positive("min_temperature", self.min_temperature)?;
        if !(0.0..1e-3).contains(&self.floor) {
            return Err(PcError::InvalidConfig(format!(
                "floor must lie in [0, 1e-3), got {}",
                self.floor
            )));
        }
        if let Annealing::Geometric { factor } = self.annealing {
            if !(factor > 0.0 && factor < 1.0) {
                return Err(PcError::InvalidConfig(format!(
                    "cooling factor must lie in (0, 1), got {factor}"
                )));
            }
        }
        let caps = [
            self.max_inner_per_minimization,
            self.max_total_inner,
            self.max_multiplier_updates,
            self.max_anneal_steps,
        ];
        if caps.contains(&0) {
            return Err(PcError::InvalidConfig(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SolverConfig::default();
        c.validate().unwrap();
        assert_eq!(c.step_lambda, 0.5);
        assert_eq!(c.beta(), 1.0);
        SolverConfig::constrained().validate().unwrap();
    }

    #[test]
    fn rejects_nonpositive_temperature_and_zero_caps() {
        let bad = SolverConfig {
            temperature: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_total_inner: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            annealing: Annealing::Geometric { factor: 1.0 },
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parses_rules() {
        assert_eq!(
            "newton".parse::<UpdateRule>().unwrap(),
            UpdateRule::NearestNewton
        );
        assert!("foo".parse::<UpdateRule>().is_err());
    }
}
