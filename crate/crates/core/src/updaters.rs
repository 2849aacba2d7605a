//! Update rules for product distributions, Lagrange multiplier ascent,
//! annealing, and the annealed triple loop that ties them together.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Annealing, SolverConfig, UpdateRule};
use crate::distribution::{
    apply_floor, row_entropy, simplex_repair, softmax_row, JointConfiguration, ProductDistribution,
};
use crate::error::{PcError, Result};
use crate::objective::{
    centered_gradient, projected_gradient_norm, FactorGraph, FactoredObjective,
};
use crate::trace::{Phase, TraceRecord};

/// Order in which agents update within one inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Every agent updates against the same snapshot.
    ParallelAll,
    /// Agents update one after another; one iteration is a full sweep.
    Serial,
    /// A random maximal set of agents sharing no factor updates together.
    IndependentSubset,
}

impl std::str::FromStr for ScheduleMode {
    type Err = PcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Self::ParallelAll),
            "serial" => Ok(Self::Serial),
            "independent" | "independent-subset" => Ok(Self::IndependentSubset),
            other => Err(PcError::InvalidConfig(format!(
                "unknown schedule `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateSchedule {
    pub mode: ScheduleMode,
    /// Weight of past conditional expectations; 0 uses the latest only.
    pub inertia: f64,
}

impl UpdateSchedule {
    pub fn new(mode: ScheduleMode) -> Self {
        Self { mode, inertia: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.inertia) {
            return Err(PcError::InvalidConfig(format!(
                "inertia must lie in [0, 1), got {}",
                self.inertia
            )));
        }
        Ok(())
    }
}

impl Default for UpdateSchedule {
    fn default() -> Self {
        Self::new(ScheduleMode::Serial)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The mode satisfies every constraint.
    Solved,
    /// Annealing reached the minimum temperature (unconstrained problems).
    Converged,
    /// The effective temperature fell below the minimum before the
    /// constraints were met.
    TemperatureFloor,
    IterationCap,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub distribution: ProductDistribution,
    /// Best mode seen, ranked by (violations, G).
    pub best: JointConfiguration,
    pub best_objective: f64,
    pub best_violations: usize,
    pub multipliers: Vec<f64>,
    pub effective_temperature: f64,
    pub inner_iterations: u64,
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
}

/// Brouwer update of the listed agents against the snapshot `q`:
/// `q_i(x_i) ∝ exp(-E_{q_-i}[G|x_i] / T)`.
pub fn brouwer_step(
    obj: &FactoredObjective,
    q: &ProductDistribution,
    agents: &[usize],
    t: f64,
) -> ProductDistribution {
    let mut next = q.clone();
    for &i in agents {
        next.set_row(i, softmax_row(&obj.local_conditional(q, i), t));
    }
    next
}

/// One serial Brouwer sweep over all agents in index order.
pub fn brouwer_sweep(
    obj: &FactoredObjective,
    q: &ProductDistribution,
    t: f64,
) -> ProductDistribution {
    let mut next = q.clone();
    for i in 0..q.n() {
        let c = obj.local_conditional(&next, i);
        next.set_row(i, softmax_row(&c, t));
    }
    next
}

fn newton_row(row: &[f64], cond: &[f64], expected: f64, step: f64, t: f64, floor: f64) -> Vec<f64> {
    let s = row_entropy(row);
    let proposed: Vec<f64> = row
        .iter()
        .zip(cond)
        .map(|(&p, &c)| {
            let ln_p = p.max(f64::MIN_POSITIVE).ln();
            p - step * p * ((c - expected) / t + s + ln_p)
        })
        .collect();
    if proposed.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        simplex_repair(&proposed, floor)
    } else {
        apply_floor(proposed, floor)
    }
}

/// Nearest-Newton step applied to every row.
pub fn nearest_newton_step(
    obj: &FactoredObjective,
    q: &ProductDistribution,
    step: f64,
    t: f64,
) -> ProductDistribution {
    let conds = obj.conditional_expectations(q);
    let expected = obj.expected_value(q, true);
    let mut next = q.clone();
    for (i, c) in conds.iter().enumerate() {
        let row = newton_row(q.row(i), c, expected, step, t, q.floor());
        next.set_row(i, row);
    }
    next
}

/// Gradient step `q - step * centered_gradient`, repaired onto the simplex.
pub fn gradient_step(
    obj: &FactoredObjective,
    q: &ProductDistribution,
    step: f64,
    t: f64,
) -> ProductDistribution {
    let grad = obj.gradient(q, t);
    let mut next = q.clone();
    for (i, g) in grad.iter().enumerate() {
        let proposed: Vec<f64> = q.row(i).iter().zip(g).map(|(p, d)| p - step * d).collect();
        next.set_row(i, simplex_repair(&proposed, q.floor()));
    }
    next
}

/// `lambda_a + step * E_q[c_a]` for every constraint.
pub fn update_multipliers(obj: &FactoredObjective, q: &ProductDistribution, step: f64) -> Vec<f64> {
    obj.multipliers()
        .iter()
        .zip(obj.expected_residuals(q))
        .map(|(l, c)| l + step * c)
        .collect()
}

/// Divides multipliers and temperature by the multiplier sum.
pub fn rescale_annealing(lambda: &[f64], t: f64) -> Result<(Vec<f64>, f64)> {
    let total: f64 = lambda.iter().sum();
    if !(total > 0.0) {
        return Err(PcError::ZeroMultipliers);
    }
    Ok((lambda.iter().map(|l| l / total).collect(), t / total))
}

/// Greedy maximal independent set of the factor graph, scanning agents in a
/// random order: no two returned agents share a factor. Sorted ascending.
pub fn independent_subset<R: Rng + ?Sized>(fg: &FactorGraph, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fg.n()).collect();
    order.shuffle(rng);
    let mut blocked = vec![false; fg.n()];
    let mut chosen = Vec::new();
    for i in order {
        if blocked[i] {
            continue;
        }
        chosen.push(i);
        blocked[i] = true;
        for &j in &fg.neighbors[i] {
            blocked[j] = true;
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Partition of all agents into independent sets, drawn greedily in random
/// order. Updating the sets one after another visits every agent once.
pub fn independent_cover<R: Rng + ?Sized>(fg: &FactorGraph, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..fg.n()).collect();
    order.shuffle(rng);
    let mut color = vec![usize::MAX; fg.n()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let mut used: Vec<usize> = fg.neighbors[i]
            .iter()
            .map(|&j| color[j])
            .filter(|&c| c != usize::MAX)
            .collect();
        used.sort_unstable();
        used.dedup();
        let c = (0..).find(|c| used.binary_search(c).is_err()).unwrap();
        color[i] = c;
        if c == groups.len() {
            groups.push(Vec::new());
        }
        groups[c].push(i);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Exponentially aged conditional expectations, one accumulator per agent.
pub(crate) struct Inertia {
    weight: f64,
    numerators: Vec<Option<Vec<f64>>>,
    denominators: Vec<f64>,
}

impl Inertia {
    pub(crate) fn new(n: usize, weight: f64) -> Self {
        Self {
            weight,
            numerators: vec![None; n],
            denominators: vec![0.0; n],
        }
    }

    fn reset(&mut self) {
        self.numerators.iter_mut().for_each(|n| *n = None);
        self.denominators.iter_mut().for_each(|d| *d = 0.0);
    }

    fn age(&mut self, i: usize, current: Vec<f64>) -> Vec<f64> {
        if self.weight == 0.0 {
            return current;
        }
        let num = match self.numerators[i].take() {
            Some(prev) => current
                .iter()
                .zip(prev)
                .map(|(c, p)| c + self.weight * p)
                .collect(),
            None => current,
        };
        self.denominators[i] = 1.0 + self.weight * self.denominators[i];
        let out = num.iter().map(|v| v / self.denominators[i]).collect();
        self.numerators[i] = Some(num);
        out
    }
}

/// Applies the configured rule to one group of agents evaluated against the
/// same snapshot.
fn update_group(
    obj: &FactoredObjective,
    q: &ProductDistribution,
    group: &[usize],
    config: &SolverConfig,
    t: f64,
    inertia: &mut Inertia,
) -> ProductDistribution {
    // Brouwer is a softmax, so conditionals shifted by a per-agent constant
    // give the same row; skip the global expectation in that case.
    let raw = if config.rule == UpdateRule::Brouwer {
        group.iter().map(|&i| obj.local_conditional(q, i)).collect()
    } else {
        obj.conditional_expectations_for(q, group)
    };
    let conds: Vec<Vec<f64>> = raw
        .into_iter()
        .zip(group)
        .map(|(c, &i)| inertia.age(i, c))
        .collect();
    let mut next = q.clone();
    match config.rule {
        UpdateRule::Brouwer => {
            for (&i, c) in group.iter().zip(&conds) {
                next.set_row(i, softmax_row(c, t));
            }
        }
        UpdateRule::NearestNewton => {
            let expected = obj.expected_value(q, true);
            for (&i, c) in group.iter().zip(&conds) {
                let row = newton_row(q.row(i), c, expected, config.step_q, t, q.floor());
                next.set_row(i, row);
            }
        }
        UpdateRule::Gradient => {
            for (&i, c) in group.iter().zip(&conds) {
                let raw: Vec<f64> = c
                    .iter()
                    .zip(q.row(i))
                    .map(|(c, &p)| c + t * p.max(f64::MIN_POSITIVE).ln())
                    .collect();
                let eta = raw.iter().sum::<f64>() / raw.len() as f64;
                let proposed: Vec<f64> = q
                    .row(i)
                    .iter()
                    .zip(&raw)
                    .map(|(p, g)| p - config.step_q * (g - eta))
                    .collect();
                next.set_row(i, simplex_repair(&proposed, q.floor()));
            }
        }
    }
    next
}

/// One inner iteration under the given schedule.
pub(crate) fn inner_iteration<R: Rng + ?Sized>(
    obj: &FactoredObjective,
    fg: &FactorGraph,
    q: ProductDistribution,
    config: &SolverConfig,
    schedule: &UpdateSchedule,
    t: f64,
    rng: &mut R,
    inertia: &mut Inertia,
) -> ProductDistribution {
    match schedule.mode {
        ScheduleMode::ParallelAll => {
            let all: Vec<usize> = (0..q.n()).collect();
            update_group(obj, &q, &all, config, t, inertia)
        }
        ScheduleMode::Serial => {
            let mut q = q;
            for i in 0..q.n() {
                q = update_group(obj, &q, &[i], config, t, inertia);
            }
            q
        }
        ScheduleMode::IndependentSubset => {
            let group = independent_subset(fg, rng);
            update_group(obj, &q, &group, config, t, inertia)
        }
    }
}

/// Normalizes the working objective for the current multipliers and returns
/// the temperature to iterate at.
fn effective_setup(
    work: &mut FactoredObjective,
    lambda: &[f64],
    t: f64,
    config: &SolverConfig,
) -> Result<f64> {
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
}

/// Annealed multiplier/temperature loop around the chosen update rule.
///
/// * inner: iterate the update rule until the projected gradient norm drops
///   below `grad_tol` or `max_inner_per_minimization` is reached;
/// * middle: raise the multipliers by `step_lambda * E_q[c_a]` until the
///   expected total violation drops below `violation_tol`;
/// * outer: lower the temperature (multiplier rescaling for constrained
///   problems, geometric cooling otherwise).
///
/// `q` starts uniform and multipliers start at `1/C`. Constrained runs stop
/// as soon as the mode satisfies every constraint.
pub fn solve(
    obj: &FactoredObjective,
    config: &SolverConfig,
    schedule: &UpdateSchedule,
) -> Result<SolveResult> {
    config.validate()?;
    schedule.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work = obj.clone();
    let fg = obj.factor_graph();
    let n_constraints = obj.num_constraints();
    let constrained = n_constraints > 0;
    let mut lambda = vec![1.0 / n_constraints.max(1) as f64; n_constraints];
    let mut t = config.temperature;
    let mut q = ProductDistribution::uniform(crate::objective::Objective::arities(obj))?
        .with_floor(config.floor);
    let mut inertia = Inertia::new(q.n(), schedule.inertia);

    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut records = 0u64;
    let mut total_inner = 0u64;
    let mut best: Option<(usize, f64, JointConfiguration)> = None;
    let mut t_eff = t;

    let mut record = |trace: &mut Vec<TraceRecord>,
                      phase: Phase,
                      work: &FactoredObjective,
                      q: &ProductDistribution,
                      t: f64,
                      t_eff: f64,
                      lambda: &[f64],
                      total_inner: u64,
                      mode_violations: usize| {
        records += 1;
        trace.push(TraceRecord {
            iteration: records,
            inner_iterations: total_inner,
            phase,
            lagrangian: work.lagrangian(q, t_eff),
            expected_objective: work.expected_value(q, false),
            expected_violation: work.expected_residuals(q).iter().sum(),
            mode_violations,
            temperature: t,
            effective_temperature: t_eff,
            lambda_l1: lambda.iter().map(|l| l.abs()).sum(),
            multipliers: lambda.to_vec(),
            js_variational: None,
            components: Vec::new(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    };

    let finish = |q: ProductDistribution,
                  best: Option<(usize, f64, JointConfiguration)>,
                  lambda: Vec<f64>,
                  t_eff: f64,
                  total_inner: u64,
                  trace: Vec<TraceRecord>,
                  termination: Termination| {
        let (best_violations, best_objective, best) = best.unwrap_or_else(|| {
            let m = q.mode();
            (
                obj.violation_count(m.values()),
                obj.base_value(m.values()),
                m,
            )
        });
        SolveResult {
            distribution: q,
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
            t_eff = effective_setup(&mut work, &lambda, t, config)?;
            inertia.reset();
            for _ in 0..config.max_inner_per_minimization {
                q = inner_iteration(
                    &work,
                    &fg,
                    q,
                    config,
                    schedule,
                    t_eff,
                    &mut rng,
                    &mut inertia,
                );
                total_inner += 1;
                let mode = q.mode();
                let viol = obj.violation_count(mode.values());
                let g = obj.base_value(mode.values());
                let better = match &best {
                    None => true,
                    Some((bv, bg, _)) => (viol, g) < (*bv, *bg),
                };
                if better {
                    best = Some((viol, g, mode));
                }
                record(
                    &mut trace,
                    Phase::Inner,
                    &work,
                    &q,
                    t,
                    t_eff,
                    &lambda,
                    total_inner,
                    viol,
                );
                if constrained && viol == 0 {
                    return Ok(finish(
                        q,
                        best,
                        lambda,
                        t_eff,
                        total_inner,
                        trace,
                        Termination::Solved,
                    ));
                }
                let conds = work.conditional_expectations(&q);
                if projected_gradient_norm(&q, &conds, t_eff) < config.grad_tol {
                    break;
                }
                if total_inner >= config.max_total_inner as u64 {
                    return Ok(finish(
                        q,
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
            let expected_violation: f64 = work.expected_residuals(&q).iter().sum();
            if expected_violation < config.violation_tol {
                break;
            }
            // The ascent uses the raw multipliers; rescaling only changes the
            // working copy.
            let residuals = work.expected_residuals(&q);
            for (l, c) in lambda.iter_mut().zip(residuals) {
                *l += config.step_lambda * c;
            }
            let mode_viol = obj.violation_count(q.mode().values());
            t_eff = effective_setup(&mut work, &lambda, t, config)?;
            record(
                &mut trace,
                Phase::Multiplier,
                &work,
                &q,
                t,
                t_eff,
                &lambda,
                total_inner,
                mode_viol,
            );
            if t_eff < config.min_temperature {
                return Ok(finish(
                    q,
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
        t_eff = effective_setup(&mut work, &lambda, t, config)?;
        let mode_viol = obj.violation_count(q.mode().values());
        record(
            &mut trace,
            Phase::Anneal,
            &work,
            &q,
            t,
            t_eff,
            &lambda,
            total_inner,
            mode_viol,
        );
        if t_eff < config.min_temperature {
            let reason = if constrained {
                Termination::TemperatureFloor
            } else {
                Termination::Converged
            };
            return Ok(finish(q, best, lambda, t_eff, total_inner, trace, reason));
        }
    }
    Ok(finish(
        q,
        best,
        lambda,
        t_eff,
        total_inner,
        trace,
        Termination::IterationCap,
    ))
}

/// Centered gradient computed from a fixed set of conditional expectations;
/// re-exported for callers that already hold them.
pub fn gradient_from_conditionals(
    q: &ProductDistribution,
    conds: &[Vec<f64>],
    t: f64,
) -> Vec<Vec<f64>> {
    centered_gradient(q, conds, t)
}
