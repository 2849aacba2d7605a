//! Mixtures of product distributions, `q(z) = sum_m q0(m) q^m(z)`.
//!
//! The entropy of a mixture is the weighted component entropy plus the
//! generalized Jensen-Shannon term `J(q)`. `J` does not decompose over agents,
//! so the solver maximizes a variational lower bound instead:
//!
//! ```text
//! J(q, w, nu) = sum_m q0(m) { B^{mm} - sum_m' A^{m,m'} nu_m' + ln nu_m } + S(q0) + 1
//! A^{m',m}_i  = sum_z q^{m'}_i(z) w_i(z|m),   A^{m',m} = prod_i A^{m',m}_i
//! B^{mm}_i    = sum_z q^m_i(z) ln w_i(z|m),   B^{mm}   = sum_i B^{mm}_i
//! ```
//!
//! Every update below exactly optimizes the variational Lagrangian
//! `sum_m q0(m) L(q^m) - T J(q, w, nu)` over one block of coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use crate::config::{Annealing, SolverConfig};
use crate::distribution::{
    apply_floor, row_entropy, softmax_row, JointConfiguration, JointSpace, ProductDistribution,
    DEFAULT_FLOOR,
};
use crate::error::{PcError, Result};
use crate::objective::{FactoredObjective, Objective};
use crate::oracle::ENUMERATION_CAP;
use crate::trace::{ComponentTrace, Phase, TraceRecord};
use crate::updaters::{independent_cover, rescale_annealing, Termination};

/// Lower bound applied to every `nu_m`.
pub const NU_FLOOR: f64 = 1e-12;

/// Relative magnitude of the multiplicative jitter applied to each
/// component at initialization.
pub const INIT_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub q0: Vec<f64>,
    pub components: Vec<ProductDistribution>,
    /// `w[m][i][z] = w_i(z | m)`.
    pub w: Vec<Vec<Vec<f64>>>,
    pub nu: Vec<f64>,
}

/// Cached `A` and `B` aggregates of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTerms {
    /// `a_i[i][m'][m] = A^{m',m}_i`.
    pub a_i: Vec<Vec<Vec<f64>>>,
    /// `a[m'][m] = A^{m',m}`.
    pub a: Vec<Vec<f64>>,
    /// `b_i[i][m] = B^{mm}_i`.
    pub b_i: Vec<Vec<f64>>,
    /// `b[m] = B^{mm}`.
    pub b: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ln_floor(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

impl MixtureTerms {
    pub fn compute(s: &MixtureState) -> Self {
        let m_count = s.m();
        let n = s.n();
        let a_i: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|i| {
                (0..m_count)
                    .map(|mt| {
                        (0..m_count)
                            .map(|m| dot(s.components[mt].row(i), &s.w[m][i]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let a = (0..m_count)
            .map(|mt| {
                (0..m_count)
                    .map(|m| (0..n).map(|i| a_i[i][mt][m].ln()).sum::<f64>().exp())
                    .collect()
            })
            .collect();
        let b_i: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..m_count)
                    .map(|m| {
                        s.components[m]
                            .row(i)
                            .iter()
                            .zip(&s.w[m][i])
                            .map(|(q, w)| q * ln_floor(*w))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let b = (0..m_count)
            .map(|m| b_i.iter().map(|row| row[m]).sum())
            .collect();
        Self { a_i, a, b_i, b }
    }

    /// `A^{m',m} / A^{m',m}_i`, computed as a product over `j != i` so that
    /// underflow in one factor cannot produce `0/0`.
    pub fn leave_one_out(&self, i: usize, mt: usize, m: usize) -> f64 {
        self.a_i
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, a)| a[mt][m].ln())
            .sum::<f64>()
            .exp()
    }
}

impl MixtureState {
    /// Uniform weights and `w`, components as given, `nu` from its update.
    pub fn new(q0: Vec<f64>, components: Vec<ProductDistribution>) -> Result<Self> {
        if components.is_empty() || q0.len() != components.len() {
            return Err(PcError::InvalidConfig(
                "need one weight per component and at least one component".into(),
            ));
        }
        let arities = components[0].arities();
        if components.iter().any(|c| c.arities() != arities) {
            return Err(PcError::InvalidDistribution(
                "components differ in arities".into(),
            ));
        }
        let total: f64 = q0.iter().sum();
        if q0.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(PcError::InvalidDistribution(
                "mixture weights must form a simplex".into(),
            ));
        }
        let w = components
            .iter()
            .map(|_| arities.iter().map(|&a| vec![1.0 / a as f64; a]).collect())
            .collect();
        let mut s = Self {
            q0: apply_floor(q0, DEFAULT_FLOOR),
            components,
            w,
            nu: vec![1.0; 0],
        };
        s.nu = vec![1.0; s.m()];
        s.nu = update_nu(&s);
        Ok(s)
    }

    /// Uniform weights and components, each component row jittered
    /// multiplicatively by up to `INIT_JITTER` to break the symmetric fixed
    /// point.
    pub fn initial<R: Rng + ?Sized>(m: usize, arities: &[usize], rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(PcError::InvalidConfig(
                "a mixture needs at least one component".into(),
            ));
        }
        let components = (0..m)
            .map(|_| {
                let rows = arities
                    .iter()
                    .map(|&a| {
                        let raw: Vec<f64> = (0..a)
                            .map(|_| 1.0 + INIT_JITTER * rng.random_range(-1.0..=1.0))
                            .collect();
                        let s: f64 = raw.iter().sum();
                        raw.iter().map(|r| r / s).collect()
                    })
                    .collect();
                ProductDistribution::from_rows(rows)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![1.0 / m as f64; m], components)
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn n(&self) -> usize {
        self.components[0].n()
    }

    pub fn arities(&self) -> Vec<usize> {
        self.components[0].arities()
    }
}

/// `sum_m q0(m) prod_i q^m_i(z_i)`.
pub fn mixture_density(s: &MixtureState, z: &[usize]) -> f64 {
    s.q0.iter()
        .zip(&s.components)
        .map(|(w, c)| w * c.prob(z))
        .sum()
}

/// `S(sum_m q0(m) q^m) - sum_m q0(m) S(q^m)` by enumeration over `Z`.
pub fn js_exact(s: &MixtureState) -> Result<f64> {
    let space = JointSpace::new(&s.arities(), ENUMERATION_CAP)?;
    let mixture_entropy: f64 = -space
        .iter()
        .map(|z| mixture_density(s, &z))
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let component_entropy: f64 =
        s.q0.iter()
            .zip(&s.components)
            .map(|(w, c)| w * c.entropy())
            .sum();
    Ok(mixture_entropy - component_entropy)
}

fn js_from_terms(s: &MixtureState, t: &MixtureTerms) -> f64 {
    let m_count = s.m();
    let mut total = row_entropy(&s.q0) + 1.0;
    for m in 0..m_count {
        let cross: f64 = (0..m_count).map(|mt| t.a[m][mt] * s.nu[mt]).sum();
        total += s.q0[m] * (t.b[m] - cross + s.nu[m].ln());
    }
    total
}

/// The variational lower bound `J(q, w, nu)`.
pub fn js_variational(s: &MixtureState) -> f64 {
    js_from_terms(s, &MixtureTerms::compute(s))
}

/// `1/nu_m = (1/q0(m)) sum_m' q0(m') A^{m',m}`, floored at [`NU_FLOOR`].
pub fn update_nu(s: &MixtureState) -> Vec<f64> {
    let t = MixtureTerms::compute(s);
    nu_from_terms(s, &t)
}

fn nu_from_terms(s: &MixtureState, t: &MixtureTerms) -> Vec<f64> {
    (0..s.m())
        .map(|m| {
            let denom: f64 = (0..s.m()).map(|mt| s.q0[mt] * t.a[mt][m]).sum();
            (s.q0[m] / denom).max(NU_FLOOR)
        })
        .collect()
}

/// Maximizes the bound over `w`, agent by agent (all components of one agent
/// at once). Each `w_i(.|m)` is then normalized; dividing `w_i(.|m)` by `c`
/// while multiplying `nu_m` by `c` leaves the bound unchanged, so `nu` is
/// compensated and the bound never decreases.
pub fn update_w(s: &MixtureState) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let mut next = s.clone();
    let m_count = s.m();
    let mut terms = MixtureTerms::compute(&next);
    for i in 0..s.n() {
        let loo: Vec<Vec<f64>> = (0..m_count)
            .map(|mt| {
                (0..m_count)
                    .map(|m| terms.leave_one_out(i, mt, m))
                    .collect()
            })
            .collect();
        for m in 0..m_count {
            let k = s.components[m].arity(i);
            let raw: Vec<f64> = (0..k)
                .map(|z| {
                    let bracket: f64 = (0..m_count)
                        .map(|mt| s.q0[mt] * s.components[mt].row(i)[z] * loo[mt][m])
                        .sum();
                    s.q0[m] * s.components[m].row(i)[z] / (next.nu[m] * bracket)
                })
                .collect();
            let c: f64 = raw.iter().sum();
            let normalized = apply_floor(raw.iter().map(|r| r / c).collect(), DEFAULT_FLOOR);
            next.w[m][i] = normalized;
            next.nu[m] = (next.nu[m] * c).max(NU_FLOOR);
        }
        for mt in 0..m_count {
            for m in 0..m_count {
                terms.a_i[i][mt][m] = dot(next.components[mt].row(i), &next.w[m][i]);
            }
        }
    }
    (next.w, next.nu)
}

/// Energy of each component: `E(m) = E_{q^m}[G] - T (S[q^m] + B^{mm} -
/// sum_m' A^{m,m'} nu_m' + ln nu_m)`.
fn component_energies(
    s: &MixtureState,
    t: &MixtureTerms,
    obj: &FactoredObjective,
    temp: f64,
) -> Vec<f64> {
    (0..s.m())
        .map(|m| {
            let cross: f64 = (0..s.m()).map(|mt| t.a[m][mt] * s.nu[mt]).sum();
            obj.expected_value(&s.components[m], true)
                - temp * (s.components[m].entropy() + t.b[m] - cross + s.nu[m].ln())
        })
        .collect()
}

/// `q0 = softmax(-E(m)/T)`.
pub fn update_q0(s: &MixtureState, obj: &FactoredObjective, temp: f64) -> Vec<f64> {
    let t = MixtureTerms::compute(s);
    apply_floor(
        softmax_row(&component_energies(s, &t, obj, temp), temp),
        DEFAULT_FLOOR,
    )
}

fn qm_row(
    s: &MixtureState,
    obj: &FactoredObjective,
    i: usize,
    m: usize,
    temp: f64,
    loo: &[f64],
) -> Vec<f64> {
    let cond = obj.local_conditional(&s.components[m], i);
    let energies: Vec<f64> = cond
        .iter()
        .enumerate()
        .map(|(z, c)| {
            let coupling: f64 = (0..s.m())
                .map(|mt| loo[mt] * s.nu[mt] * s.w[mt][i][z])
                .sum();
            c - temp * (ln_floor(s.w[m][i][z]) - coupling)
        })
        .collect();
    softmax_row(&energies, temp)
}

/// New row `q^m_i = softmax(-E_m(z)/T)` with
/// `E_m(z) = E[G|z] - T (ln w_i(z|m) - sum_m' (A^{m,m'}/A^{m,m'}_i) nu_m' w_i(z|m'))`.
pub fn update_qm(
    s: &MixtureState,
    obj: &FactoredObjective,
    i: usize,
    m: usize,
    temp: f64,
) -> Vec<f64> {
    let t = MixtureTerms::compute(s);
    let loo: Vec<f64> = (0..s.m()).map(|mt| t.leave_one_out(i, m, mt)).collect();
    apply_floor(qm_row(s, obj, i, m, temp, &loo), s.components[m].floor())
}

/// `sum_m q0(m) L(q^m) - T J(q, w, nu)`.
pub fn mixture_lagrangian(s: &MixtureState, obj: &FactoredObjective, temp: f64) -> f64 {
    weighted_component_lagrangian(s, obj, temp) - temp * js_variational(s)
}

/// `sum_m q0(m) L(q^m) - T J(q)`, i.e. `E_q[G] - T S(q)` for the mixture.
pub fn mixture_lagrangian_exact(
    s: &MixtureState,
    obj: &FactoredObjective,
    temp: f64,
) -> Result<f64> {
    Ok(weighted_component_lagrangian(s, obj, temp) - temp * js_exact(s)?)
}

fn weighted_component_lagrangian(s: &MixtureState, obj: &FactoredObjective, temp: f64) -> f64 {
    s.q0.iter()
        .zip(&s.components)
        .map(|(w, c)| w * obj.lagrangian(c, temp))
        .sum()
}

/// Mode of one component with its objective value and violation count.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSummary {
    pub weight: f64,
    pub mode: JointConfiguration,
    pub objective: f64,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct MixtureSolveResult {
    pub state: MixtureState,
    pub components: Vec<ComponentSummary>,
    /// Best component mode seen during the run, ranked by (violations, G).
    pub best: JointConfiguration,
    pub best_objective: f64,
    pub best_violations: usize,
    pub multipliers: Vec<f64>,
    pub effective_temperature: f64,
    pub inner_iterations: u64,
    pub js_variational: f64,
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
}

fn summarize(s: &MixtureState, obj: &FactoredObjective) -> Vec<ComponentSummary> {
    s.q0.iter()
        .zip(&s.components)
        .map(|(&weight, c)| {
            let mode = c.mode();
            ComponentSummary {
                weight,
                objective: obj.base_value(mode.values()),
                violations: obj.violation_count(mode.values()),
                mode,
            }
        })
        .collect()
}

fn mixture_residuals(s: &MixtureState, obj: &FactoredObjective) -> Vec<f64> {
    let mut out = vec![0.0; obj.num_constraints()];
    for (w, c) in s.q0.iter().zip(&s.components) {
        for (o, r) in out.iter_mut().zip(obj.expected_residuals(c)) {
            *o += w * r;
        }
    }
    out
}

/// One full coordinate sweep: `nu`, `w`, `q0`, then every component row.
/// Rows are visited one agent at a time, agents ordered by a random
/// partition into independent sets; all components of an agent update
/// together. Returns the largest change in `q0` or any row.
fn sweep<R: Rng + ?Sized>(
    s: &mut MixtureState,
    obj: &FactoredObjective,
    groups_rng: &mut R,
    temp: f64,
) -> f64 {
    s.nu = update_nu(s);
    let (w, nu) = update_w(s);
    s.w = w;
    s.nu = nu;
    let new_q0 = update_q0(s, obj, temp);
    let mut change =
        s.q0.iter()
            .zip(&new_q0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
    s.q0 = new_q0;

    let m_count = s.m();
    let mut terms = MixtureTerms::compute(s);
    let fg = obj.factor_graph();
    for group in independent_cover(&fg, groups_rng) {
        for i in group {
            let loo: Vec<Vec<f64>> = (0..m_count)
                .map(|m| {
                    (0..m_count)
                        .map(|mt| terms.leave_one_out(i, m, mt))
                        .collect()
                })
                .collect();
            let rows: Vec<Vec<f64>> = (0..m_count)
                .map(|m| qm_row(s, obj, i, m, temp, &loo[m]))
                .collect();
            for (m, row) in rows.into_iter().enumerate() {
                let old = s.components[m].row(i).to_vec();
                s.components[m].set_row(i, row);
                let new = s.components[m].row(i);
                change = old
                    .iter()
                    .zip(new)
                    .map(|(a, b)| (a - b).abs())
                    .fold(change, f64::max);
            }
            for mt in 0..m_count {
                for m in 0..m_count {
                    terms.a_i[i][mt][m] = dot(s.components[mt].row(i), &s.w[m][i]);
                }
            }
        }
    }
    change
}

/// The annealed loop of [`crate::updaters::solve`] over a mixture of `m`
/// products. Constrained runs stop once every component mode satisfies all
/// constraints.
pub fn solve_mixture(
    obj: &FactoredObjective,
    m: usize,
    config: &SolverConfig,
) -> Result<MixtureSolveResult> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = MixtureState::initial(m, obj.arities(), &mut rng)?;
    for c in &mut state.components {
        *c = c.clone().with_floor(config.floor);
    }
    let mut work = obj.clone();
    let n_constraints = obj.num_constraints();
    let constrained = n_constraints > 0;
    let mut lambda = vec![1.0 / n_constraints.max(1) as f64; n_constraints];
    let mut t = config.temperature;
    let mut t_eff = t;
    let mut trace = Vec::new();
    let mut records = 0u64;
    let mut total_inner = 0u64;
    let mut best: Option<(usize, f64, JointConfiguration)> = None;

    let setup = |work: &mut FactoredObjective, lambda: &[f64], t: f64| -> Result<f64> {
        if lambda.is_empty() {
            return Ok(t);
        }
        match config.annealing {
            Annealing::LambdaRescale => {
                let total: f64 = lambda.iter().sum();
                let (scaled, t_hat) = rescale_annealing(lambda, t)?;
                work.set_multipliers(scaled);
                work.set_base_scale(1.0 / total);
                Ok(t_hat)
            }
            Annealing::Geometric { .. } => {
                work.set_multipliers(lambda.to_vec());
                work.set_base_scale(1.0);
                Ok(t)
            }
        }
    };

    let mut record = |trace: &mut Vec<TraceRecord>,
                      phase: Phase,
                      state: &MixtureState,
                      work: &FactoredObjective,
                      t: f64,
                      t_eff: f64,
                      lambda: &[f64],
                      total_inner: u64| {
        records += 1;
        let summary = summarize(state, obj);
        let js = js_variational(state);
        trace.push(TraceRecord {
            iteration: records,
            inner_iterations: total_inner,
            phase,
            lagrangian: weighted_component_lagrangian(state, work, t_eff) - t_eff * js,
            expected_objective: state
                .q0
                .iter()
                .zip(&state.components)
                .map(|(w, c)| w * obj.expected_value(c, false))
                .sum(),
            expected_violation: mixture_residuals(state, obj).iter().sum(),
            mode_violations: summary.iter().map(|c| c.violations).min().unwrap_or(0),
            temperature: t,
            effective_temperature: t_eff,
            lambda_l1: lambda.iter().map(|l| l.abs()).sum(),
            multipliers: lambda.to_vec(),
            js_variational: Some(js),
            components: summary
                .into_iter()
                .map(|c| ComponentTrace {
                    weight: c.weight,
                    mode: c.mode,
                    mode_objective: c.objective,
                    mode_violations: c.violations,
                })
                .collect(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    };

    let finish = |state: MixtureState,
                  best: Option<(usize, f64, JointConfiguration)>,
                  lambda: Vec<f64>,
                  t_eff: f64,
                  total_inner: u64,
                  trace: Vec<TraceRecord>,
                  termination: Termination| {
        let components = summarize(&state, obj);
        let (best_violations, best_objective, best) = best.unwrap_or_else(|| {
            let c = &components[0];
            (c.violations, c.objective, c.mode.clone())
        });
        MixtureSolveResult {
            js_variational: js_variational(&state),
            state,
            components,
            best,
            best_objective,
            best_violations,
            multipliers: lambda,
            effective_temperature: t_eff,
            inner_iterations: total_inner,
            trace,
            termination,
        }
    };

    for _anneal in 0..config.max_anneal_steps {
        for _epoch in 0..config.max_multiplier_updates {
            t_eff = setup(&mut work, &lambda, t)?;
            for _ in 0..config.max_inner_per_minimization {
                let change = sweep(&mut state, &work, &mut rng, t_eff);
                total_inner += 1;
                let summary = summarize(&state, obj);
                for c in &summary {
                    let better = match &best {
                        None => true,
                        Some((bv, bg, _)) => (c.violations, c.objective) < (*bv, *bg),
                    };
                    if better {
                        best = Some((c.violations, c.objective, c.mode.clone()));
                    }
                }
                record(
                    &mut trace,
                    Phase::Inner,
                    &state,
                    &work,
                    t,
                    t_eff,
                    &lambda,
                    total_inner,
                );
                if constrained && summary.iter().all(|c| c.violations == 0) {
                    return Ok(finish(
                        state,
                        best,
                        lambda,
                        t_eff,
                        total_inner,
                        trace,
                        Termination::Solved,
                    ));
                }
                if change < config.grad_tol {
                    break;
                }
                if total_inner >= config.max_total_inner as u64 {
                    return Ok(finish(
                        state,
                        best,
                        lambda,
                        t_eff,
                        total_inner,
                        trace,
                        Termination::IterationCap,
                    ));
                }
            }
            if !constrained {
                break;
            }
            let residuals = mixture_residuals(&state, obj);
            if residuals.iter().sum::<f64>() < config.violation_tol {
                break;
            }
            for (l, c) in lambda.iter_mut().zip(residuals) {
                *l += config.step_lambda * c;
            }
            t_eff = setup(&mut work, &lambda, t)?;
            record(
                &mut trace,
                Phase::Multiplier,
                &state,
                &work,
                t,
                t_eff,
                &lambda,
                total_inner,
            );
            if t_eff < config.min_temperature {
                return Ok(finish(
                    state,
                    best,
                    lambda,
                    t_eff,
                    total_inner,
                    trace,
                    Termination::TemperatureFloor,
                ));
            }
        }
        t *= match config.annealing {
            Annealing::Geometric { factor } => factor,
            Annealing::LambdaRescale => 0.9,
        };
        t_eff = setup(&mut work, &lambda, t)?;
        record(
            &mut trace,
            Phase::Anneal,
            &state,
            &work,
            t,
            t_eff,
            &lambda,
            total_inner,
        );
        if t_eff < config.min_temperature {
            let reason = if constrained {
                Termination::TemperatureFloor
            } else {
                Termination::Converged
            };
            return Ok(finish(
                state,
                best,
                lambda,
                t_eff,
                total_inner,
                trace,
                reason,
            ));
        }
    }
    Ok(finish(
        state,
        best,
        lambda,
        t_eff,
        total_inner,
        trace,
        Termination::IterationCap,
    ))
}
