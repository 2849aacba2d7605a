//! Semicoordinate systems: onto maps `zeta: X -> Z` that let a product
//! distribution over `X` induce a coupled distribution over `Z`.

use rayon::prelude::*;

use crate::distribution::{JointSpace, ProductDistribution};
use crate::error::{PcError, Result};
use crate::objective::{block_norm, Factor, FactoredObjective};
use crate::oracle::{DenseDistribution, ENUMERATION_CAP};

/// Default cap on the number of candidates scored by escape search.
pub const MAX_ESCAPE_CANDIDATES: usize = 10_000;

/// Largest subset joint space for which all permutations are enumerated.
pub const MAX_EXHAUSTIVE_VALUES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Identity,
    /// Permutes the joint values of `subset` (row-major index, first subset
    /// variable most significant); identity on every other variable.
    JointPermutation {
        subset: Vec<usize>,
        perm: Vec<usize>,
    },
    /// One `X` component per variable and realizable parent value.
    BayesNet {
        parents: Vec<Vec<usize>>,
        /// Index of the first `X` component belonging to each variable.
        offsets: Vec<usize>,
    },
    /// `x = [x0, x^1, ..., x^M]` with `z_i = x^{x0}_i`.
    MixtureEmbedding {
        components: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemicoordinateMap {
    kind: MapKind,
    x_arities: Vec<usize>,
    z_arities: Vec<usize>,
}

impl SemicoordinateMap {
    pub fn identity(arities: Vec<usize>) -> Self {
        Self {
            kind: MapKind::Identity,
            x_arities: arities.clone(),
            z_arities: arities,
        }
    }

    /// A bijection of the joint values of `subset`. `perm[k]` is the image of
    /// the `k`-th joint value.
    pub fn joint_permutation(
        arities: Vec<usize>,
        subset: Vec<usize>,
        perm: Vec<usize>,
    ) -> Result<Self> {
        for (k, &a) in subset.iter().enumerate() {
            if a >= arities.len() || subset[..k].contains(&a) {
                return Err(PcError::InvalidConfig(format!(
                    "bad permutation subset {subset:?}"
                )));
            }
        }
        let size: usize = subset.iter().map(|&a| arities[a]).product();
        let mut seen = vec![false; size];
        if perm.len() != size {
            return Err(PcError::DimensionMismatch {
                expected: size,
                got: perm.len(),
            });
        }
        for &p in &perm {
            if p >= size || seen[p] {
                return Err(PcError::InvalidConfig(
                    "permutation is not a bijection".into(),
                ));
            }
            seen[p] = true;
        }
        Ok(Self {
            kind: MapKind::JointPermutation { subset, perm },
            x_arities: arities.clone(),
            z_arities: arities,
        })
    }

    /// Embedding of an `m`-component mixture over `Z` into a product space.
    pub fn mixture_embedding(components: usize, z_arities: Vec<usize>) -> Result<Self> {
        if components == 0 {
            return Err(PcError::InvalidConfig(
                "a mixture needs at least one component".into(),
            ));
        }
        let mut x_arities = vec![components];
        for _ in 0..components {
            x_arities.extend_from_slice(&z_arities);
        }
        Ok(Self {
            kind: MapKind::MixtureEmbedding { components },
            x_arities,
            z_arities,
        })
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn x_arities(&self) -> &[usize] {
        &self.x_arities
    }

    pub fn z_arities(&self) -> &[usize] {
        &self.z_arities
    }

    /// `zeta(x)`.
    pub fn apply(&self, x: &[usize]) -> Vec<usize> {
        match &self.kind {
            MapKind::Identity => x.to_vec(),
            MapKind::JointPermutation { subset, perm } => {
                let dims: Vec<usize> = subset.iter().map(|&a| self.x_arities[a]).collect();
                let idx = subset
                    .iter()
                    .zip(&dims)
                    .fold(0, |acc, (&a, &d)| acc * d + x[a]);
                let mut image = perm[idx];
                let mut z = x.to_vec();
                for (&a, &d) in subset.iter().zip(&dims).rev() {
                    z[a] = image % d;
                    image /= d;
                }
                z
            }
            MapKind::BayesNet { parents, offsets } => {
                let n = self.z_arities.len();
                let mut z = vec![0; n];
                for i in (0..n).rev() {
                    let local = parents[i]
                        .iter()
                        .fold(0, |acc, &p| acc * self.z_arities[p] + z[p]);
                    z[i] = x[offsets[i] + local];
                }
                z
            }
            MapKind::MixtureEmbedding { .. } => {
                let n = self.z_arities.len();
                let m = x[0];
                x[1 + m * n..1 + (m + 1) * n].to_vec()
            }
        }
    }

    /// The `X` components that `z_j` depends on, sorted.
    pub fn z_dependencies(&self, j: usize) -> Vec<usize> {
        let mut deps = match &self.kind {
            MapKind::Identity => vec![j],
            MapKind::JointPermutation { subset, .. } => {
                if subset.contains(&j) {
                    subset.clone()
                } else {
                    vec![j]
                }
            }
            MapKind::BayesNet { parents, offsets } => {
                let mut out = Vec::new();
                let mut stack = vec![j];
                let mut visited = vec![false; self.z_arities.len()];
                while let Some(v) = stack.pop() {
                    if std::mem::replace(&mut visited[v], true) {
                        continue;
                    }
                    let count: usize = parents[v].iter().map(|&p| self.z_arities[p]).product();
                    out.extend(offsets[v]..offsets[v] + count);
                    stack.extend(parents[v].iter().copied());
                }
                out
            }
            MapKind::MixtureEmbedding { components } => {
                let n = self.z_arities.len();
                std::iter::once(0)
                    .chain((0..*components).map(|m| 1 + m * n + j))
                    .collect()
            }
        };
        deps.sort_unstable();
        deps.dedup();
        deps
    }
}

/// Builds the Bayes-net map for parent sets `parents[i]`, each referencing
/// only variables with a larger index. `X` lists, for `i` from the last
/// variable down to the first, one component per parent value
/// (lexicographic, first parent most significant).
pub fn bayes_net_map(z_arities: Vec<usize>, parents: Vec<Vec<usize>>) -> Result<SemicoordinateMap> {
    let n = z_arities.len();
    if parents.len() != n {
        return Err(PcError::InvalidParents(format!(
            "{} parent sets for {n} variables",
            parents.len()
        )));
    }
    for (i, pa) in parents.iter().enumerate() {
        for (k, &p) in pa.iter().enumerate() {
            if p <= i || p >= n {
                return Err(PcError::InvalidParents(format!(
                    "parent {p} of variable {i} must lie in ({i}, {n})"
                )));
            }
            if pa[..k].contains(&p) {
                return Err(PcError::InvalidParents(format!(
                    "parent {p} repeated for {i}"
                )));
            }
        }
    }
    let mut offsets = vec![0; n];
    let mut x_arities = Vec::new();
    for i in (0..n).rev() {
        offsets[i] = x_arities.len();
        let count: usize = parents[i].iter().map(|&p| z_arities[p]).product();
        x_arities.extend(std::iter::repeat_n(z_arities[i], count));
    }
    Ok(SemicoordinateMap {
        kind: MapKind::BayesNet { parents, offsets },
        x_arities,
        z_arities,
    })
}

/// `P_Z(z) = sum_x q(x) [zeta(x) = z]` by enumeration over `X`.
pub fn pushforward(q: &ProductDistribution, map: &SemicoordinateMap) -> Result<DenseDistribution> {
    if q.arities() != map.x_arities {
        return Err(PcError::DimensionMismatch {
            expected: map.x_arities.len(),
            got: q.n(),
        });
    }
    let z_space = JointSpace::new(&map.z_arities, ENUMERATION_CAP)?;
    let x_space = JointSpace::new(&map.x_arities, ENUMERATION_CAP)?;
    let mut probs = vec![0.0; z_space.size()];
    for x in x_space.iter() {
        probs[z_space.index_of(&map.apply(&x))] += q.prob(&x);
    }
    DenseDistribution::new(&map.z_arities, probs)
}

fn pull_back_factor(f: &Factor, map: &SemicoordinateMap) -> Result<Factor> {
    let mut scope: Vec<usize> = f
        .scope()
        .iter()
        .flat_map(|&j| map.z_dependencies(j))
        .collect();
    scope.sort_unstable();
    scope.dedup();
    let dims: Vec<usize> = scope.iter().map(|&a| map.x_arities[a]).collect();
    let mut x = vec![0usize; map.x_arities.len()];
    Factor::from_fn(scope.clone(), dims, |local| {
        for (&a, &v) in scope.iter().zip(local) {
            x[a] = v;
        }
        f.value(&map.apply(&x))
    })
}

/// The objective `G(zeta(x))` over `X`, factor by factor. Factors whose
/// scope is untouched by a permutation are copied unchanged.
pub fn pull_back_objective(
    obj: &FactoredObjective,
    map: &SemicoordinateMap,
) -> Result<FactoredObjective> {
    if crate::objective::Objective::arities(obj) != map.z_arities.as_slice() {
        return Err(PcError::DimensionMismatch {
            expected: map.z_arities.len(),
            got: obj.n(),
        });
    }
    let untouched = |f: &Factor| match &map.kind {
        MapKind::Identity => true,
        MapKind::JointPermutation { subset, .. } => f.scope().iter().all(|a| !subset.contains(a)),
        _ => false,
    };
    let convert = |f: &Factor| {
        if untouched(f) {
            Ok(f.clone())
        } else {
            pull_back_factor(f, map)
        }
    };
    let mut out = FactoredObjective::new(map.x_arities.clone())?;
    for f in obj.base_factors() {
        out.add_factor(convert(f)?)?;
    }
    for (f, &l) in obj.constraint_factors().iter().zip(obj.multipliers()) {
        out.add_constraint(convert(f)?, l)?;
    }
    out.set_base_scale(obj.base_scale());
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeCriterion {
    /// Lowest Lagrangian at the held-fixed `q`.
    MinLagrangian,
    /// Largest centered-gradient norm at the held-fixed `q`.
    MaxGradientNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateSet {
    /// Every permutation of the subset's joint values (at most 8 values).
    Exhaustive,
    /// Identity plus every transposition of two joint values.
    Transpositions,
    /// Caller-supplied permutations; the identity is always added.
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone)]
pub struct EscapeResult {
    pub map: SemicoordinateMap,
    pub score: f64,
    pub identity_score: f64,
    pub candidates: usize,
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // Next permutation in lexicographic order.
        let Some(k) = (0..n.saturating_sub(1)).rev().find(|&k| p[k] < p[k + 1]) else {
            break;
        };
        let l = (k + 1..n).rev().find(|&l| p[k] < p[l]).unwrap();
        p.swap(k, l);
        p[k + 1..].reverse();
    }
    out
}

/// Scores permutations of the joint values of `subset` with `q` held fixed
/// and returns the best one under `criterion`. Ties keep the earliest
/// candidate; the identity is always scored first.
pub fn permutation_escape_search(
    obj: &FactoredObjective,
    q: &ProductDistribution,
    subset: &[usize],
    criterion: EscapeCriterion,
    t: f64,
    candidates: &CandidateSet,
) -> Result<EscapeResult> {
    let arities = crate::objective::Objective::arities(obj).to_vec();
    let size: usize = subset
        .iter()
        .map(|&a| arities.get(a).copied().unwrap_or(0))
        .product();
    let identity: Vec<usize> = (0..size).collect();
    let mut perms = vec![identity.clone()];
    match candidates {
        CandidateSet::Exhaustive => {
            if size > MAX_EXHAUSTIVE_VALUES {
                return Err(PcError::InvalidConfig(format!(
                    "{size} joint values is too many for exhaustive search; supply candidates"
                )));
            }
            perms.extend(all_permutations(size).into_iter().skip(1));
        }
        CandidateSet::Transpositions => {
            'outer: for a in 0..size {
                for b in a + 1..size {
                    if perms.len() >= MAX_ESCAPE_CANDIDATES {
                        break 'outer;
                    }
                    let mut p = identity.clone();
                    p.swap(a, b);
                    perms.push(p);
                }
            }
        }
        CandidateSet::Explicit(list) => {
            perms.extend(list.iter().filter(|p| **p != identity).cloned());
        }
    }
    let maps: Vec<SemicoordinateMap> = perms
        .into_iter()
        .map(|p| SemicoordinateMap::joint_permutation(arities.clone(), subset.to_vec(), p))
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = maps
        .par_iter()
        .map(|m| {
            let pulled = pull_back_objective(obj, m)?;
            Ok(match criterion {
                EscapeCriterion::MinLagrangian => pulled.lagrangian(q, t),
                EscapeCriterion::MaxGradientNorm => block_norm(&pulled.gradient(q, t)),
            })
        })
        .collect::<Result<_>>()?;
    let better = |a: f64, b: f64| match criterion {
        EscapeCriterion::MinLagrangian => a < b,
        EscapeCriterion::MaxGradientNorm => a > b,
    };
    let mut best = 0;
    for k in 1..scores.len() {
        if better(scores[k], scores[best]) {
            best = k;
        }
    }
    Ok(EscapeResult {
        score: scores[best],
        identity_score: scores[0],
        candidates: scores.len(),
        map: maps[best].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::row_entropy;
    use approx::assert_relative_eq;

    fn landscape() -> FactoredObjective {
        FactoredObjective::new(vec![2, 2])
            .unwrap()
            .with_factor(Factor::new(vec![0, 1], vec![2, 2], vec![0.0, 18.0, 25.0, 2.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn worked_permutation_example() {
        let map =
            SemicoordinateMap::joint_permutation(vec![2, 2], vec![0, 1], vec![0, 3, 2, 1]).unwrap();
        assert_eq!(map.apply(&[0, 1]), vec![1, 1]);
        assert_eq!(map.apply(&[1, 1]), vec![0, 1]);
        let q = ProductDistribution::binary(&[2.0 / 3.0, 2.0 / 3.0]).unwrap();
        let p = pushforward(&q, &map).unwrap();
        let expected = [4.0 / 9.0, 1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0];
        for (a, b) in p.probs().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_pushforward_and_pullback() {
        let q = ProductDistribution::binary(&[0.3, 0.9]).unwrap();
        let map = SemicoordinateMap::identity(vec![2, 2]);
        let p = pushforward(&q, &map).unwrap();
        for x in JointSpace::new(&[2, 2], 4).unwrap().iter() {
            assert_relative_eq!(p.prob(&x), q.prob(&x), epsilon = 1e-15);
        }
        let obj = landscape();
        assert_eq!(pull_back_objective(&obj, &map).unwrap(), obj);
    }

    #[test]
    fn swap_changes_expectation_by_weighted_swap() {
        let obj = landscape();
        // Swap joint values (0,1) and (1,0).
        let map =
            SemicoordinateMap::joint_permutation(vec![2, 2], vec![0, 1], vec![0, 2, 1, 3]).unwrap();
        let pulled = pull_back_objective(&obj, &map).unwrap();
        let q = ProductDistribution::binary(&[0.3, 0.6]).unwrap();
        let p01 = q.prob(&[0, 1]);
        let p10 = q.prob(&[1, 0]);
        let delta = p01 * (25.0 - 18.0) + p10 * (18.0 - 25.0);
        let diff = pulled.expected_value(&q, true) - obj.expected_value(&q, true);
        assert_relative_eq!(diff, delta, epsilon = 1e-12);
        let dl = pulled.lagrangian(&q, 7.0) - obj.lagrangian(&q, 7.0);
        assert_relative_eq!(dl, diff, epsilon = 1e-12);
    }

    #[test]
    fn escape_search_on_local_minimum() {
        let obj = landscape();
        let q = ProductDistribution::binary(&[0.14, 0.08]).unwrap();
        let t = 7.0;
        let grad = permutation_escape_search(
            &obj,
            &q,
            &[0, 1],
            EscapeCriterion::MaxGradientNorm,
            t,
            &CandidateSet::Exhaustive,
        )
        .unwrap();
        assert_eq!(grad.candidates, 24);
        assert!(grad.score > grad.identity_score);

        let min_l = permutation_escape_search(
            &obj,
            &q,
            &[0, 1],
            EscapeCriterion::MinLagrangian,
            t,
            &CandidateSet::Exhaustive,
        )
        .unwrap();
        for p in all_permutations(4) {
            let m = SemicoordinateMap::joint_permutation(vec![2, 2], vec![0, 1], p).unwrap();
            let l = pull_back_objective(&obj, &m).unwrap().lagrangian(&q, t);
            assert!(min_l.score <= l + 1e-12);
        }
    }

    #[test]
    fn exhaustive_rejects_large_subsets() {
        let obj = FactoredObjective::new(vec![2; 4]).unwrap();
        let q = ProductDistribution::uniform(&[2; 4]).unwrap();
        let err = permutation_escape_search(
            &obj,
            &q,
            &[0, 1, 2, 3],
            EscapeCriterion::MinLagrangian,
            1.0,
            &CandidateSet::Exhaustive,
        );
        assert!(err.is_err());
        let ok = permutation_escape_search(
            &obj,
            &q,
            &[0, 1, 2, 3],
            EscapeCriterion::MinLagrangian,
            1.0,
            &CandidateSet::Transpositions,
        )
        .unwrap();
        assert_eq!(ok.candidates, 1 + 16 * 15 / 2);
    }

    #[test]
    fn bayes_net_component_layout() {
        let map = bayes_net_map(vec![2; 4], vec![vec![1, 2], vec![3], vec![], vec![]]).unwrap();
        assert_eq!(map.x_arities().len(), 8);
        let independent = bayes_net_map(vec![2, 2], vec![vec![], vec![]]).unwrap();
        assert_eq!(independent.x_arities(), &[2, 2]);
        assert!(bayes_net_map(vec![2, 2], vec![vec![0], vec![]]).is_err());
        assert!(bayes_net_map(vec![2, 2], vec![vec![], vec![0]]).is_err());
    }

    #[test]
    fn bayes_net_pushforward_factorizes() {
        let map = bayes_net_map(vec![2, 3, 2], vec![vec![1, 2], vec![2], vec![]]).unwrap();
        let rows: Vec<Vec<f64>> = map
            .x_arities()
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let raw: Vec<f64> = (0..a).map(|v| 1.0 + ((k * 7 + v * 3) % 5) as f64).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|r| r / s).collect()
            })
            .collect();
        let q = ProductDistribution::from_rows(rows).unwrap();
        let p = pushforward(&q, &map).unwrap();
        let MapKind::BayesNet { parents, offsets } = map.kind().clone() else {
            unreachable!()
        };
        for z in p.space().iter() {
            let mut prod = 1.0;
            for i in 0..3 {
                let local = parents[i]
                    .iter()
                    .fold(0, |acc, &pa| acc * map.z_arities()[pa] + z[pa]);
                prod *= q.row(offsets[i] + local)[z[i]];
            }
            assert!((p.prob(&z) - prod).abs() < 1e-12);
        }
        assert!(row_entropy(p.probs()) > 0.0);
    }

    #[test]
    fn mixture_embedding_pushforward_is_mixture() {
        let map = SemicoordinateMap::mixture_embedding(2, vec![2, 2]).unwrap();
        assert_eq!(map.x_arities(), &[2, 2, 2, 2, 2]);
        let q = ProductDistribution::from_rows(vec![
            vec![0.3, 0.7],
            vec![0.9, 0.1],
            vec![0.2, 0.8],
            vec![0.5, 0.5],
            vec![0.6, 0.4],
        ])
        .unwrap();
        let p = pushforward(&q, &map).unwrap();
        for z in p.space().iter() {
            let m0 = 0.3 * q.row(1)[z[0]] * q.row(2)[z[1]];
            let m1 = 0.7 * q.row(3)[z[0]] * q.row(4)[z[1]];
            assert!((p.prob(&z) - m0 - m1).abs() < 1e-12);
        }
        assert_eq!(map.z_dependencies(1), vec![0, 2, 4]);
    }

    #[test]
    fn permutation_enumeration_counts() {
        assert_eq!(all_permutations(1).len(), 1);
        assert_eq!(all_permutations(4).len(), 24);
        assert!(
            SemicoordinateMap::joint_permutation(vec![2, 2], vec![0, 1], vec![0, 0, 1, 2]).is_err()
        );
    }
}
