//! Factored objectives with weighted equality constraints.
//!
//! The effective objective is `base_scale * G(x) + sum_a lambda_a c_a(x)`,
//! where `G` and every residual `c_a` are sums of dense local tables. Because
//! `q` is a product, every expectation decomposes factor by factor and is
//! computed exactly without touching the joint space.

use crate::distribution::{JointConfiguration, ProductDistribution};
use crate::error::{PcError, Result};

/// Largest dense table a factor may carry (20 binary variables).
pub const DENSE_TABLE_CAP: usize = 1 << 20;

/// Anything that can score a joint configuration. Used by the Monte-Carlo
/// estimators and the enumeration oracles.
pub trait Objective {
    fn arities(&self) -> &[usize];
    fn value(&self, x: &[usize]) -> f64;
}

/// A dense table over a small ordered scope of agents. Entries are laid out
/// row-major with the first scope variable most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    dims: Vec<usize>,
    table: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<usize>, dims: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if scope.len() != dims.len() {
            return Err(PcError::InvalidFactor(
                "scope and dims differ in length".into(),
            ));
        }
        for (k, a) in scope.iter().enumerate() {
            if scope[..k].contains(a) {
                return Err(PcError::InvalidFactor(format!(
                    "agent {a} repeated in scope"
                )));
            }
        }
        if dims.contains(&0) {
            return Err(PcError::InvalidFactor("zero-sized dimension".into()));
        }
        let entries: u128 = dims.iter().map(|&d| d as u128).product();
        if entries > DENSE_TABLE_CAP as u128 {
            return Err(PcError::ScopeTooLarge {
                entries: entries.min(usize::MAX as u128) as usize,
                cap: DENSE_TABLE_CAP,
            });
        }
        if table.len() as u128 != entries {
            return Err(PcError::InvalidFactor(format!(
                "table has {} entries, scope needs {entries}",
                table.len()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(PcError::InvalidFactor("non-finite table entry".into()));
        }
        Ok(Self { scope, dims, table })
    }

    /// Tabulates a callable over the scope's local assignments.
    pub fn from_fn<F>(scope: Vec<usize>, dims: Vec<usize>, mut f: F) -> Result<Self>
    where
        F: FnMut(&[usize]) -> f64,
    {
        let entries: u128 = dims.iter().map(|&d| d as u128).product();
        if entries > DENSE_TABLE_CAP as u128 {
            return Err(PcError::ScopeTooLarge {
                entries: entries.min(usize::MAX as u128) as usize,
                cap: DENSE_TABLE_CAP,
            });
        }
        let mut table = Vec::with_capacity(entries as usize);
        let mut local = vec![0usize; dims.len()];
        for _ in 0..entries {
            table.push(f(&local));
            increment(&mut local, &dims);
        }
        Self::new(scope, dims, table)
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn local_index(&self, x: &[usize]) -> usize {
        self.scope
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&a, &d)| acc * d + x[a])
    }

    /// Value of the factor at a full joint configuration.
    pub fn value(&self, x: &[usize]) -> f64 {
        self.table[self.local_index(x)]
    }

    /// `E_q[f]`.
    pub fn expectation(&self, q: &ProductDistribution) -> f64 {
        let mut local = vec![0usize; self.dims.len()];
        let mut total = 0.0;
        for &v in &self.table {
            let w: f64 = self
                .scope
                .iter()
                .zip(&local)
                .map(|(&a, &m)| q.row(a)[m])
                .product();
            total += w * v;
            increment(&mut local, &self.dims);
        }
        total
    }

    /// `E_{q_{-i}}[f | x_i]` for the scope variable at position `pos`.
    pub fn conditional(&self, q: &ProductDistribution, pos: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dims[pos]];
        let mut local = vec![0usize; self.dims.len()];
        for &v in &self.table {
            let w: f64 = self
                .scope
                .iter()
                .zip(&local)
                .enumerate()
                .filter(|(k, _)| *k != pos)
                .map(|(_, (&a, &m))| q.row(a)[m])
                .product();
            out[local[pos]] += w * v;
            increment(&mut local, &self.dims);
        }
        out
    }

    /// The same factor with its scope relabelled through `map`.
    pub fn relabel(&self, map: &[usize]) -> Factor {
        Factor {
            scope: self.scope.iter().map(|&a| map[a]).collect(),
            dims: self.dims.clone(),
            table: self.table.clone(),
        }
    }
}

pub(crate) fn increment(local: &mut [usize], dims: &[usize]) {
    for k in (0..local.len()).rev() {
        local[k] += 1;
        if local[k] < dims[k] {
            return;
        }
        local[k] = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorRef {
    Base(usize),
    Constraint(usize),
}

/// Agent/factor adjacency of an objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    pub agent_factors: Vec<Vec<FactorRef>>,
    pub neighbors: Vec<Vec<usize>>,
}

impl FactorGraph {
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn are_neighbors(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn mean_degree(&self) -> f64 {
        let total: usize = self.neighbors.iter().map(Vec::len).sum();
        total as f64 / self.n() as f64
    }
}

/// Objective `G` plus constraint residuals `c_a` with multipliers `lambda_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredObjective {
    arities: Vec<usize>,
    base: Vec<Factor>,
    constraints: Vec<Factor>,
    multipliers: Vec<f64>,
    base_scale: f64,
    agent_factors: Vec<Vec<FactorRef>>,
}

impl FactoredObjective {
    pub fn new(arities: Vec<usize>) -> Result<Self> {
        if arities.is_empty() || arities.contains(&0) {
            return Err(PcError::InvalidFactor(
                "every agent needs at least one move".into(),
            ));
        }
        let n = arities.len();
        Ok(Self {
            arities,
            base: Vec::new(),
            constraints: Vec::new(),
            multipliers: Vec::new(),
            base_scale: 1.0,
            agent_factors: vec![Vec::new(); n],
        })
    }

    fn check_factor(&self, f: &Factor) -> Result<()> {
        for (&a, &d) in f.scope.iter().zip(&f.dims) {
            if a >= self.arities.len() {
                return Err(PcError::InvalidFactor(format!("agent {a} out of range")));
            }
            if d != self.arities[a] {
                return Err(PcError::InvalidFactor(format!(
                    "factor dimension {d} for agent {a} differs from arity {}",
                    self.arities[a]
                )));
            }
        }
        Ok(())
    }

    pub fn add_factor(&mut self, f: Factor) -> Result<()> {
        self.check_factor(&f)?;
        let id = FactorRef::Base(self.base.len());
        for &a in &f.scope {
            self.agent_factors[a].push(id);
        }
        self.base.push(f);
        Ok(())
    }

    /// Adds a constraint residual with multiplier `lambda`.
    pub fn add_constraint(&mut self, f: Factor, lambda: f64) -> Result<()> {
        self.check_factor(&f)?;
        let id = FactorRef::Constraint(self.constraints.len());
        for &a in &f.scope {
            self.agent_factors[a].push(id);
        }
        self.constraints.push(f);
        self.multipliers.push(lambda);
        Ok(())
    }

    pub fn with_factor(mut self, f: Factor) -> Result<Self> {
        self.add_factor(f)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.arities.len()
    }

    pub fn base_factors(&self) -> &[Factor] {
        &self.base
    }

    pub fn constraint_factors(&self) -> &[Factor] {
        &self.constraints
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    /// Replaces the whole multiplier vector.
    pub fn set_multipliers(&mut self, lambda: Vec<f64>) {
        assert_eq!(
            lambda.len(),
            self.constraints.len(),
            "one multiplier per constraint"
        );
        self.multipliers = lambda;
    }

    pub fn base_scale(&self) -> f64 {
        self.base_scale
    }

    /// Weight applied to the base factors; the multiplier rescaling divides
    /// the whole Lagrangian, including `G`, by the multiplier sum.
    pub fn set_base_scale(&mut self, scale: f64) {
        self.base_scale = scale;
    }

    fn factor(&self, r: FactorRef) -> (&Factor, f64) {
        match r {
            FactorRef::Base(k) => (&self.base[k], self.base_scale),
            FactorRef::Constraint(k) => (&self.constraints[k], self.multipliers[k]),
        }
    }

    fn weighted_factors(&self) -> impl Iterator<Item = (&Factor, f64)> {
        self.base.iter().map(move |f| (f, self.base_scale)).chain(
            self.constraints
                .iter()
                .zip(self.multipliers.iter().copied()),
        )
    }

    pub fn factor_graph(&self) -> FactorGraph {
        let n = self.n();
        let mut neighbors = vec![Vec::new(); n];
        for f in self.base.iter().chain(&self.constraints) {
            for &a in &f.scope {
                for &b in &f.scope {
                    if a != b {
                        neighbors[a].push(b);
                    }
                }
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        FactorGraph {
            agent_factors: self.agent_factors.clone(),
            neighbors,
        }
    }

    /// `G(x)` or, with `include_constraints`, the effective objective
    /// `base_scale * G(x) + sum_a lambda_a c_a(x)`.
    pub fn evaluate(&self, x: &JointConfiguration, include_constraints: bool) -> Result<f64> {
        x.validate(&self.arities)?;
        let g = self.base_value(x.values());
        if !include_constraints {
            return Ok(g);
        }
        Ok(self.base_scale * g + self.penalty(x.values()))
    }

    /// Unscaled `G(x)` without validation.
    pub fn base_value(&self, x: &[usize]) -> f64 {
        self.base.iter().map(|f| f.value(x)).sum()
    }

    fn penalty(&self, x: &[usize]) -> f64 {
        self.constraints
            .iter()
            .zip(&self.multipliers)
            .map(|(f, l)| l * f.value(x))
            .sum()
    }

    /// Constraint residuals `c_a(x)`.
    pub fn residuals(&self, x: &[usize]) -> Vec<f64> {
        self.constraints.iter().map(|f| f.value(x)).collect()
    }

    /// Number of constraints with a nonzero residual at `x`.
    pub fn violation_count(&self, x: &[usize]) -> usize {
        self.constraints
            .iter()
            .filter(|f| f.value(x) != 0.0)
            .count()
    }

    /// `E_{q_{-i}}[G_eff | x_i]` for every move of agent `i`.
    pub fn conditional_expectation(&self, q: &ProductDistribution, i: usize) -> Vec<f64> {
        let total = self.expected_value(q, true);
        self.conditional_with_total(q, i, total)
    }

    /// Shares the constant part (factors not touching `i`) through `total`.
    fn conditional_with_total(&self, q: &ProductDistribution, i: usize, total: f64) -> Vec<f64> {
        let mut out = self.local_conditional(q, i);
        let local_total: f64 = out.iter().zip(q.row(i)).map(|(c, p)| c * p).sum();
        let rest = total - local_total;
        out.iter_mut().for_each(|o| *o += rest);
        out
    }

    /// Contribution of the factors touching `i` to `E[G_eff | x_i]`. Differs
    /// from [`Self::conditional_expectation`] by a constant, which is all a
    /// softmax update needs.
    pub fn local_conditional(&self, q: &ProductDistribution, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.arities[i]];
        for &r in &self.agent_factors[i] {
            let (f, w) = self.factor(r);
            if w == 0.0 {
                continue;
            }
            let pos = f
                .scope
                .iter()
                .position(|&a| a == i)
                .expect("agent in scope");
            for (o, c) in out.iter_mut().zip(f.conditional(q, pos)) {
                *o += w * c;
            }
        }
        out
    }

    /// Conditional expectations for every agent.
    pub fn conditional_expectations(&self, q: &ProductDistribution) -> Vec<Vec<f64>> {
        let total = self.expected_value(q, true);
        (0..self.n())
            .map(|i| self.conditional_with_total(q, i, total))
            .collect()
    }

    /// Conditional expectations for the listed agents only.
    pub fn conditional_expectations_for(
        &self,
        q: &ProductDistribution,
        agents: &[usize],
    ) -> Vec<Vec<f64>> {
        let total = self.expected_value(q, true);
        agents
            .iter()
            .map(|&i| self.conditional_with_total(q, i, total))
            .collect()
    }

    /// `E_q[G]` (unscaled) or the effective objective's expectation.
    pub fn expected_value(&self, q: &ProductDistribution, include_constraints: bool) -> f64 {
        if include_constraints {
            self.weighted_factors()
                .filter(|(_, w)| *w != 0.0)
                .map(|(f, w)| w * f.expectation(q))
                .sum()
        } else {
            self.base.iter().map(|f| f.expectation(q)).sum()
        }
    }

    /// `E_q[c_a]` for every constraint.
    pub fn expected_residuals(&self, q: &ProductDistribution) -> Vec<f64> {
        self.constraints.iter().map(|f| f.expectation(q)).collect()
    }

    /// `L(q) = E_q[G_eff] - T S(q)`.
    pub fn lagrangian(&self, q: &ProductDistribution, t: f64) -> f64 {
        self.expected_value(q, true) - t * q.entropy()
    }

    /// Centered gradient: `E[G|x_i] + T ln q_i(x_i) - eta_i`, each agent's
    /// block summing to zero.
    pub fn gradient(&self, q: &ProductDistribution, t: f64) -> Vec<Vec<f64>> {
        let cond = self.conditional_expectations(q);
        centered_gradient(q, &cond, t)
    }

    /// Gradient norm with floor-active entries projected out (see
    /// [`projected_gradient_norm`]).
    pub fn gradient_norm(&self, q: &ProductDistribution, t: f64) -> f64 {
        let cond = self.conditional_expectations(q);
        projected_gradient_norm(q, &cond, t)
    }
}

impl Objective for FactoredObjective {
    fn arities(&self) -> &[usize] {
        &self.arities
    }

    fn value(&self, x: &[usize]) -> f64 {
        self.base_scale * self.base_value(x) + self.penalty(x)
    }
}

fn safe_ln(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE).ln()
}

/// Raw gradient block `E[G|x_i] + T ln q_i(x_i)` for one agent.
pub fn raw_gradient_row(row: &[f64], cond: &[f64], t: f64) -> Vec<f64> {
    cond.iter()
        .zip(row)
        .map(|(c, &p)| c + t * safe_ln(p))
        .collect()
}

/// Centered gradient from precomputed conditional expectations.
pub fn centered_gradient(q: &ProductDistribution, cond: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    cond.iter()
        .enumerate()
        .map(|(i, c)| {
            let raw = raw_gradient_row(q.row(i), c, t);
            let eta = raw.iter().sum::<f64>() / raw.len() as f64;
            raw.into_iter().map(|g| g - eta).collect()
        })
        .collect()
}

/// 2-norm of the centered gradient with the probability floor treated as a
/// bound: entries sitting on the floor whose descent direction points below
/// it are dropped, and the per-agent mean is taken over the free entries.
/// Equals the plain centered-gradient norm when no entry is on the floor.
pub fn projected_gradient_norm(q: &ProductDistribution, cond: &[Vec<f64>], t: f64) -> f64 {
    let floor = q.floor();
    let on_floor = |p: f64| floor > 0.0 && p <= floor * (1.0 + 1e-9);
    let mut total = 0.0;
    for (i, c) in cond.iter().enumerate() {
        let row = q.row(i);
        let raw = raw_gradient_row(row, c, t);
        let free: Vec<f64> = raw
            .iter()
            .zip(row)
            .filter(|(_, &p)| !on_floor(p))
            .map(|(g, _)| *g)
            .collect();
        let mu = if free.is_empty() {
            raw.iter().sum::<f64>() / raw.len() as f64
        } else {
            free.iter().sum::<f64>() / free.len() as f64
        };
        for (g, &p) in raw.iter().zip(row) {
            let r = g - mu;
            let r = if on_floor(p) { r.min(0.0) } else { r };
            total += r * r;
        }
    }
    total.sqrt()
}

/// 2-norm of a per-agent vector family.
pub fn block_norm(blocks: &[Vec<f64>]) -> f64 {
    blocks
        .iter()
        .flat_map(|b| b.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::JointSpace;
    use approx::assert_relative_eq;

    /// G(0,0)=0, G(1,0)=25, G(0,1)=18, G(1,1)=2 with x_1 most significant.
    fn landscape() -> FactoredObjective {
        FactoredObjective::new(vec![2, 2])
            .unwrap()
            .with_factor(Factor::new(vec![0, 1], vec![2, 2], vec![0.0, 18.0, 25.0, 2.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn single_factor_lookup() {
        let obj = FactoredObjective::new(vec![2])
            .unwrap()
            .with_factor(Factor::new(vec![0], vec![2], vec![0.0, 25.0]).unwrap())
            .unwrap();
        assert_eq!(obj.evaluate(&vec![1].into(), false).unwrap(), 25.0);
    }

    #[test]
    fn pure_penalty_evaluation() {
        let mut obj = FactoredObjective::new(vec![2, 2]).unwrap();
        // clause (z1 or z2): violated only at (0,0)
        obj.add_constraint(
            Factor::new(vec![0, 1], vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
            2.0,
        )
        .unwrap();
        assert_eq!(obj.evaluate(&vec![0, 0].into(), true).unwrap(), 2.0);
        assert_eq!(obj.evaluate(&vec![0, 0].into(), false).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_rejects_dimension_mismatch() {
        let obj = landscape();
        assert!(matches!(
            obj.evaluate(&vec![0].into(), false),
            Err(PcError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            obj.evaluate(&vec![0, 2].into(), false),
            Err(PcError::MoveOutOfRange { .. })
        ));
    }

    #[test]
    fn landscape_conditional_expectations() {
        let obj = landscape();
        let q = ProductDistribution::binary(&[0.5, 0.5]).unwrap();
        let c = obj.conditional_expectation(&q, 0);
        assert_relative_eq!(c[0], 9.0, epsilon = 1e-12);
        assert_relative_eq!(c[1], 13.5, epsilon = 1e-12);
        assert_relative_eq!(obj.expected_value(&q, false), 11.25, epsilon = 1e-12);
    }

    #[test]
    fn constant_objective_passes_through() {
        let obj = FactoredObjective::new(vec![2, 3])
            .unwrap()
            .with_factor(Factor::new(vec![], vec![], vec![4.5]).unwrap())
            .unwrap();
        let q = ProductDistribution::from_rows(vec![vec![0.2, 0.8], vec![0.1, 0.3, 0.6]]).unwrap();
        for i in 0..2 {
            for v in obj.conditional_expectation(&q, i) {
                assert_relative_eq!(v, 4.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_expectation_is_point_value() {
        let obj = landscape();
        let q = ProductDistribution::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(obj.expected_value(&q, false), 25.0);
    }

    #[test]
    fn two_agent_landscape_lagrangian_values() {
        let obj = landscape();
        let global = ProductDistribution::binary(&[0.95, 0.91]).unwrap();
        assert!((obj.lagrangian(&global, 7.0) + 0.82).abs() < 0.03);
        let local = ProductDistribution::binary(&[0.14, 0.08]).unwrap();
        assert!((obj.lagrangian(&local, 7.0) - 0.83).abs() < 0.03);
    }

    #[test]
    fn uniform_zero_objective_lagrangian_is_entropy_term() {
        let obj = FactoredObjective::new(vec![2, 3, 4]).unwrap();
        let q = ProductDistribution::uniform(&[2, 3, 4]).unwrap();
        let t = 0.7;
        assert_relative_eq!(obj.lagrangian(&q, t), -t * (24f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn gradient_blocks_are_centered() {
        let obj = landscape();
        let q = ProductDistribution::binary(&[0.3, 0.8]).unwrap();
        for block in obj.gradient(&q, 2.0) {
            assert!(block.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn factor_graph_neighbors() {
        let mut obj = FactoredObjective::new(vec![2; 4]).unwrap();
        obj.add_factor(Factor::new(vec![0, 2], vec![2, 2], vec![0.0; 4]).unwrap())
            .unwrap();
        obj.add_constraint(
            Factor::new(vec![1, 2], vec![2, 2], vec![0.0; 4]).unwrap(),
            1.0,
        )
        .unwrap();
        let fg = obj.factor_graph();
        assert_eq!(fg.neighbors[2], vec![0, 1]);
        assert!(fg.are_neighbors(0, 2));
        assert!(!fg.are_neighbors(0, 1));
        assert!(fg.neighbors[3].is_empty());
    }

    #[test]
    fn factor_rejects_bad_tables() {
        assert!(Factor::new(vec![0, 0], vec![2, 2], vec![0.0; 4]).is_err());
        assert!(Factor::new(vec![0], vec![2], vec![0.0; 3]).is_err());
        assert!(matches!(
            Factor::from_fn((0..21).collect(), vec![2; 21], |_| 0.0),
            Err(PcError::ScopeTooLarge { .. })
        ));
        let mut obj = FactoredObjective::new(vec![2, 3]).unwrap();
        assert!(obj
            .add_factor(Factor::new(vec![1], vec![2], vec![0.0; 2]).unwrap())
            .is_err());
    }

    #[test]
    fn from_fn_matches_row_major_layout() {
        let f = Factor::from_fn(vec![1, 0], vec![3, 2], |l| (l[0] * 10 + l[1]) as f64).unwrap();
        assert_eq!(f.table(), &[0.0, 1.0, 10.0, 11.0, 20.0, 21.0]);
        assert_eq!(f.value(&[1, 2]), 21.0);
    }

    #[test]
    fn consistency_with_enumeration_on_mixed_arities() {
        let mut obj = FactoredObjective::new(vec![2, 3, 2]).unwrap();
        obj.add_factor(
            Factor::from_fn(vec![0, 1], vec![2, 3], |l| (l[0] + 2 * l[1]) as f64).unwrap(),
        )
        .unwrap();
        obj.add_constraint(
            Factor::from_fn(vec![2, 1], vec![2, 3], |l| (l[0] * l[1]) as f64).unwrap(),
            0.7,
        )
        .unwrap();
        let q = ProductDistribution::from_rows(vec![
            vec![0.3, 0.7],
            vec![0.2, 0.5, 0.3],
            vec![0.6, 0.4],
        ])
        .unwrap();
        let space = JointSpace::new(&[2, 3, 2], 100).unwrap();
        let brute: f64 = space.iter().map(|x| q.prob(&x) * obj.value(&x)).sum();
        assert_relative_eq!(obj.expected_value(&q, true), brute, epsilon = 1e-12);
        for i in 0..3 {
            let c = obj.conditional_expectation(&q, i);
            let avg: f64 = c.iter().zip(q.row(i)).map(|(a, b)| a * b).sum();
            assert_relative_eq!(avg, brute, epsilon = 1e-12);
        }
    }
}
