//! Finite-domain product distributions and the simplex arithmetic shared by
//! every solver in the crate.
//!
//! A [`ProductDistribution`] holds one probability row per agent; the joint
//! distribution is the product of the rows. Rows are replaced wholesale by the
//! update rules, so a snapshot can be shared freely between threads.

use rand::Rng;

use crate::error::{PcError, Result};

/// Default probability floor applied by every repair pass.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Tolerance used when validating user-supplied rows.
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// One move index per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointConfiguration(pub Vec<usize>);

impl JointConfiguration {
    pub fn new(values: Vec<usize>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks the configuration against a list of arities.
    pub fn validate(&self, arities: &[usize]) -> Result<()> {
        if self.0.len() != arities.len() {
            return Err(PcError::DimensionMismatch {
                expected: arities.len(),
                got: self.0.len(),
            });
        }
        for (agent, (&value, &arity)) in self.0.iter().zip(arities).enumerate() {
            if value >= arity {
                return Err(PcError::MoveOutOfRange {
                    agent,
                    value,
                    arity,
                });
            }
        }
        Ok(())
    }

    /// Number of positions at which two configurations differ.
    pub fn hamming(&self, other: &JointConfiguration) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl From<Vec<usize>> for JointConfiguration {
    fn from(values: Vec<usize>) -> Self {
        Self(values)
    }
}

impl std::ops::Index<usize> for JointConfiguration {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

impl std::fmt::Display for JointConfiguration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let arity_two = self.0.iter().all(|&v| v < 2);
        for (k, v) in self.0.iter().enumerate() {
            if arity_two {
                write!(f, "{v}")?;
            } else {
                if k > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{v}")?;
            }
        }
        Ok(())
    }
}

/// A product distribution `q(x) = prod_i q_i(x_i)` over finite move sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductDistribution {
    rows: Vec<Vec<f64>>,
    floor: f64,
}

impl ProductDistribution {
    /// The maximum entropy distribution: every row uniform.
    pub fn uniform(arities: &[usize]) -> Result<Self> {
        if arities.is_empty() {
            return Err(PcError::InvalidDistribution("no agents".into()));
        }
        if let Some(agent) = arities.iter().position(|&a| a == 0) {
            return Err(PcError::InvalidDistribution(format!(
                "agent {agent} has no moves"
            )));
        }
        let rows = arities.iter().map(|&a| vec![1.0 / a as f64; a]).collect();
        Ok(Self {
            rows,
            floor: DEFAULT_FLOOR,
        })
    }

    /// Builds a distribution from explicit rows. Rows must be nonnegative and
    /// sum to one (to 1e-9); they are renormalized exactly. Zero entries are
    /// kept as given.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(PcError::InvalidDistribution("no agents".into()));
        }
        let mut out = Vec::with_capacity(rows.len());
        for (agent, row) in rows.into_iter().enumerate() {
            if row.is_empty() {
                return Err(PcError::InvalidDistribution(format!(
                    "agent {agent} has no moves"
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(PcError::InvalidDistribution(format!(
                    "agent {agent} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(PcError::InvalidDistribution(format!(
                    "agent {agent} row sums to {sum}"
                )));
            }
            out.push(row.iter().map(|p| p / sum).collect());
        }
        Ok(Self {
            rows: out,
            floor: DEFAULT_FLOOR,
        })
    }

    /// Binary distribution from the probabilities of move 0.
    pub fn binary(p0: &[f64]) -> Result<Self> {
        Self::from_rows(p0.iter().map(|&p| vec![p, 1.0 - p]).collect())
    }

    /// Replaces the probability floor used by repair passes.
    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn arity(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn arities(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Replaces row `i` after flooring and renormalizing it.
    pub fn set_row(&mut self, i: usize, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.rows[i].len());
        self.rows[i] = apply_floor(row, self.floor);
    }

    /// Copy of the distribution with row `i` replaced.
    pub fn with_row(&self, i: usize, row: Vec<f64>) -> Self {
        let mut next = self.clone();
        next.set_row(i, row);
        next
    }

    /// Joint probability of a configuration.
    pub fn prob(&self, x: &[usize]) -> f64 {
        self.rows.iter().zip(x).map(|(row, &v)| row[v]).product()
    }

    /// Shannon entropy `sum_i S(q_i)`, with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.rows.iter().map(|r| row_entropy(r)).sum()
    }

    /// Draws one joint configuration, each agent independently.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> JointConfiguration {
        JointConfiguration(self.rows.iter().map(|r| sample_row(r, rng)).collect())
    }

    /// Per-agent argmax; ties go to the lowest move index.
    pub fn mode(&self) -> JointConfiguration {
        JointConfiguration(self.rows.iter().map(|r| argmax(r)).collect())
    }

    /// Largest absolute entry-wise difference to another distribution.
    pub fn sup_distance(&self, other: &ProductDistribution) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Entropy of a single probability vector.
pub fn row_entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = k;
        }
    }
    best
}

/// Index of the smallest entry, lowest index on ties.
pub fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate().skip(1) {
        if p < row[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left `acc` just below one; fall back to the last move with mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Boltzmann row `p(k) ∝ exp(-energy[k] / t)`, computed with max-subtraction.
pub fn softmax_row(energies: &[f64], t: f64) -> Vec<f64> {
    let min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut out: Vec<f64> = energies.iter().map(|e| (-(e - min) / t).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// Lifts entries below `floor` to `floor` and rescales the remaining entries
/// so the row sums to one. Repeats until no free entry falls under the floor.
pub fn apply_floor(mut row: Vec<f64>, floor: f64) -> Vec<f64> {
    let k = row.len();
    if k == 1 {
        row[0] = 1.0;
        return row;
    }
    if floor <= 0.0 {
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= sum);
        return row;
    }
    let mut pinned = vec![false; k];
    loop {
        let mut changed = false;
        for (p, pin) in row.iter_mut().zip(pinned.iter_mut()) {
            if !*pin && *p < floor {
                *pin = true;
                changed = true;
            }
            if *pin {
                *p = floor;
            }
        }
        let n_pinned = pinned.iter().filter(|&&b| b).count();
        let free_sum: f64 = row
            .iter()
            .zip(&pinned)
            .filter(|(_, &pin)| !pin)
            .map(|(p, _)| *p)
            .sum();
        let target = 1.0 - n_pinned as f64 * floor;
        if free_sum > 0.0 {
            let scale = target / free_sum;
            for (p, &pin) in row.iter_mut().zip(&pinned) {
                if !pin {
                    *p *= scale;
                }
            }
        }
        if !changed {
            break;
        }
        // Rescaling may have pushed a free entry under the floor.
        let still_low = row.iter().zip(&pinned).any(|(p, &pin)| !pin && *p < floor);
        if !still_low {
            break;
        }
    }
    row
}

/// Euclidean projection onto the probability simplex (sort-based), followed
/// by the floor lift of [`apply_floor`].
pub fn simplex_repair(v: &[f64], floor: f64) -> Vec<f64> {
    apply_floor(project_to_simplex(v), floor)
}

/// Nearest point of the probability simplex in Euclidean distance.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Row-major enumeration helper over a finite joint space; the first agent is
/// the most significant digit.
#[derive(Debug, Clone)]
pub struct JointSpace {
    arities: Vec<usize>,
    size: usize,
}

impl JointSpace {
    /// Fails with [`PcError::SpaceTooLarge`] when the space exceeds `cap`.
    pub fn new(arities: &[usize], cap: usize) -> Result<Self> {
        let size: u128 = arities.iter().map(|&a| a as u128).product();
        if size > cap as u128 {
            return Err(PcError::SpaceTooLarge { size, cap });
        }
        Ok(Self {
            arities: arities.to_vec(),
            size: size as usize,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn index_of(&self, x: &[usize]) -> usize {
        x.iter()
            .zip(&self.arities)
            .fold(0, |acc, (&v, &a)| acc * a + v)
    }

    pub fn config_at(&self, mut index: usize) -> Vec<usize> {
        let mut x = vec![0; self.arities.len()];
        for k in (0..self.arities.len()).rev() {
            x[k] = index % self.arities[k];
            index /= self.arities[k];
        }
        x
    }

    /// Iterates configurations in index order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size).map(move |i| self.config_at(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn entropy_of_fair_coin() {
        let q = ProductDistribution::binary(&[0.5]).unwrap();
        assert_relative_eq!(q.entropy(), std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn entropy_of_deterministic_rows_is_zero() {
        let q = ProductDistribution::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(q.entropy(), 0.0);
    }

    #[test]
    fn entropy_matches_joint_enumeration() {
        let q = ProductDistribution::binary(&[0.25, 0.5]).unwrap();
        let space = JointSpace::new(&q.arities(), 1 << 20).unwrap();
        let brute: f64 = -space
            .iter()
            .map(|x| q.prob(&x))
            .map(|p| p * p.ln())
            .sum::<f64>();
        assert_relative_eq!(q.entropy(), brute, epsilon = 1e-14);
    }

    #[test]
    fn sample_degenerate_rows() {
        let q = ProductDistribution::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(q.sample(&mut rng).values(), &[0, 1]);
        }
    }

    #[test]
    fn sample_frequencies_match_uniform_product() {
        let q = ProductDistribution::uniform(&[2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let x = q.sample(&mut rng);
            counts[x[0] * 2 + x[1]] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn sample_is_deterministic_per_seed() {
        let q = ProductDistribution::binary(&[0.3, 0.6, 0.9]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| q.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
    }

    #[test]
    fn mode_is_componentwise_argmax() {
        let q = ProductDistribution::binary(&[0.9, 0.2]).unwrap();
        assert_eq!(q.mode().values(), &[0, 1]);
        let u = ProductDistribution::uniform(&[2, 3, 4]).unwrap();
        assert_eq!(u.mode().values(), &[0, 0, 0]);
    }

    #[test]
    fn repair_keeps_valid_rows() {
        let r = simplex_repair(&[0.3, 0.7], DEFAULT_FLOOR);
        assert_relative_eq!(r[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(r[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn repair_clamps_overflow_then_floors() {
        let r = simplex_repair(&[1.2, -0.2], DEFAULT_FLOOR);
        assert_eq!(r[1], DEFAULT_FLOOR);
        assert_relative_eq!(r[0], 1.0 - DEFAULT_FLOOR, epsilon = 1e-16);
    }

    #[test]
    fn projection_beats_grid_search() {
        let v = [0.5, 0.4, 0.3];
        let p = project_to_simplex(&v);
        let dist = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let steps = 400;
        let mut best = f64::INFINITY;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let a = i as f64 / steps as f64;
                let b = j as f64 / steps as f64;
                best = best.min(dist(&[a, b, 1.0 - a - b]));
            }
        }
        assert!(dist(&p) <= best + 1e-12);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        // Shift by (1.2 - 1) / 3 on every coordinate.
        assert_relative_eq!(p[0], 0.5 - 0.2 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn from_rows_rejects_bad_rows() {
        assert!(ProductDistribution::from_rows(vec![vec![0.5, 0.6]]).is_err());
        assert!(ProductDistribution::from_rows(vec![vec![-0.1, 1.1]]).is_err());
        assert!(ProductDistribution::from_rows(vec![]).is_err());
        assert!(ProductDistribution::uniform(&[2, 0]).is_err());
    }

    #[test]
    fn arity_one_rows_are_constant() {
        let q = ProductDistribution::uniform(&[1, 2]).unwrap();
        assert_eq!(q.row(0), &[1.0]);
        assert_eq!(q.entropy(), std::f64::consts::LN_2);
    }

    #[test]
    fn joint_space_round_trips_indices() {
        let s = JointSpace::new(&[2, 3, 2], 100).unwrap();
        for (k, x) in s.iter().enumerate() {
            assert_eq!(s.index_of(&x), k);
        }
        assert!(JointSpace::new(&[2; 30], 1 << 20).is_err());
    }

    fn row_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn repair_output_is_a_floored_simplex(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let r = simplex_repair(&v, DEFAULT_FLOOR);
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            if r.len() > 1 {
                prop_assert!(r.iter().all(|&p| p >= DEFAULT_FLOOR));
            }
        }

        #[test]
        fn entropy_is_concave_under_mixing(a in row_strategy(4), b in row_strategy(4), lam in 0.0f64..1.0) {
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
            prop_assert!(row_entropy(&mix) + 1e-12 >= lam * row_entropy(&a) + (1.0 - lam) * row_entropy(&b));
        }

        #[test]
        fn entropy_is_bounded(rows in prop::collection::vec(row_strategy(3), 1..5)) {
            let q = ProductDistribution::from_rows(rows).unwrap();
            let s = q.entropy();
            prop_assert!(s >= 0.0);
            prop_assert!(s <= q.n() as f64 * 3f64.ln() + 1e-12);
        }

        #[test]
        fn mode_matches_exhaustive_argmax(rows in prop::collection::vec(row_strategy(2), 1..11)) {
            let q = ProductDistribution::from_rows(rows).unwrap();
            let space = JointSpace::new(&q.arities(), 1 << 12).unwrap();
            let mut best = (f64::NEG_INFINITY, vec![]);
            for x in space.iter() {
                let p = q.prob(&x);
                if p > best.0 {
                    best = (p, x);
                }
            }
            let mode = q.mode();
            prop_assert_eq!(mode.values(), best.1.as_slice());
        }
    }
}
