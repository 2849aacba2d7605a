//! Exact references on enumerable spaces, used by tests and acceptance
//! checks. Nothing here is meant for production-scale problems.

use crate::distribution::{JointSpace, ProductDistribution};
use crate::error::{PcError, Result};
use crate::montecarlo::DifferenceUtility;
use crate::objective::Objective;

/// Largest joint space the oracles will enumerate.
pub const ENUMERATION_CAP: usize = 1 << 20;

/// A full probability table over an enumerable joint space.
#[derive(Debug, Clone)]
pub struct DenseDistribution {
    space: JointSpace,
    probs: Vec<f64>,
}

impl DenseDistribution {
    /// Validates nonnegativity and normalization (to 1e-12).
    pub fn new(arities: &[usize], probs: Vec<f64>) -> Result<Self> {
        let space = JointSpace::new(arities, ENUMERATION_CAP)?;
        if probs.len() != space.size() {
            return Err(PcError::DimensionMismatch {
                expected: space.size(),
                got: probs.len(),
            });
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(PcError::InvalidDistribution(
                "negative or non-finite entry".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PcError::InvalidDistribution(format!(
                "table sums to {total}"
            )));
        }
        Ok(Self { space, probs })
    }

    pub fn from_product(q: &ProductDistribution) -> Result<Self> {
        let space = JointSpace::new(&q.arities(), ENUMERATION_CAP)?;
        let probs = space.iter().map(|x| q.prob(&x)).collect();
        Ok(Self { space, probs })
    }

    pub(crate) fn from_parts(space: JointSpace, probs: Vec<f64>) -> Self {
        Self { space, probs }
    }

    pub fn space(&self) -> &JointSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: &[usize]) -> f64 {
        self.probs[self.space.index_of(x)]
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }

    /// Single-variable marginal of variable `i`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.space.arities()[i]];
        for (x, p) in self.space.iter().zip(&self.probs) {
            out[x[i]] += p;
        }
        out
    }
}

/// `sum_x q(x) G(x)` by enumeration.
pub fn exhaustive_expectation<O: Objective + ?Sized>(
    obj: &O,
    q: &ProductDistribution,
) -> Result<f64> {
    let space = JointSpace::new(obj.arities(), ENUMERATION_CAP)?;
    Ok(space.iter().map(|x| q.prob(&x) * obj.value(&x)).sum())
}

/// `E_{q_-i}[G | x_i]` by enumeration over `x_-i`.
pub fn exhaustive_conditional<O: Objective + ?Sized>(
    obj: &O,
    q: &ProductDistribution,
    i: usize,
) -> Result<Vec<f64>> {
    let space = JointSpace::new(obj.arities(), ENUMERATION_CAP)?;
    let mut out = vec![0.0; obj.arities()[i]];
    for x in space.iter() {
        let w: f64 = (0..x.len())
            .filter(|&j| j != i)
            .map(|j| q.row(j)[x[j]])
            .product();
        out[x[i]] += w * obj.value(&x);
    }
    Ok(out)
}

/// `ln Z(T)` with `Z = sum_x exp(-G(x)/T)`, via log-sum-exp.
pub fn log_partition<O: Objective + ?Sized>(obj: &O, t: f64) -> Result<f64> {
    let space = JointSpace::new(obj.arities(), ENUMERATION_CAP)?;
    let energies: Vec<f64> = space.iter().map(|x| -obj.value(&x) / t).collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(max + energies.iter().map(|e| (e - max).exp()).sum::<f64>().ln())
}

/// The Boltzmann distribution `exp(-G/T) / Z(T)`.
pub fn exact_boltzmann<O: Objective + ?Sized>(obj: &O, t: f64) -> Result<DenseDistribution> {
    if !(t > 0.0) {
        return Err(PcError::InvalidConfig(format!(
            "temperature must be positive, got {t}"
        )));
    }
    let space = JointSpace::new(obj.arities(), ENUMERATION_CAP)?;
    let energies: Vec<f64> = space.iter().map(|x| -obj.value(&x) / t).collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = energies.iter().map(|e| (e - max).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(DenseDistribution::from_parts(space, probs))
}

/// Product of the single-variable marginals of the Boltzmann distribution.
pub fn boltzmann_marginals<O: Objective + ?Sized>(obj: &O, t: f64) -> Result<ProductDistribution> {
    let p = exact_boltzmann(obj, t)?;
    let rows = (0..obj.arities().len()).map(|i| p.marginal(i)).collect();
    ProductDistribution::from_rows(rows)
}

/// `D(q || p) = sum_x q(x) ln(q(x)/p(x))`; infinite when `p` vanishes where
/// `q` does not.
pub fn kl_qp(q: &ProductDistribution, p: &DenseDistribution) -> Result<f64> {
    if q.arities() != p.space.arities() {
        return Err(PcError::DimensionMismatch {
            expected: p.space.arities().len(),
            got: q.n(),
        });
    }
    let mut total = 0.0;
    for (x, &px) in p.space.iter().zip(&p.probs) {
        let qx = q.prob(&x);
        if qx > 0.0 {
            if px <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += qx * (qx / px).ln();
        }
    }
    Ok(total)
}

/// `D(p || q)`, the reverse direction.
pub fn kl_pq(p: &DenseDistribution, q: &ProductDistribution) -> Result<f64> {
    let mut total = 0.0;
    for (x, &px) in p.space.iter().zip(&p.probs) {
        if px > 0.0 {
            let qx = q.prob(&x);
            if qx <= 0.0 {
                return Ok(f64::INFINITY);
            }
            total += px * (px / qx).ln();
        }
    }
    Ok(total)
}

/// Exact moments of the per-move sample means for agent `i`, conditional on
/// the cell counts, obtained by enumerating every tuple of `x_-i` samples in
/// each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMoments {
    /// `E[g_hat_x]` per move.
    pub mean: Vec<f64>,
    /// `Var[g_hat_x]` per move.
    pub variance: Vec<f64>,
    /// Expected centered gradient estimate (including the `T ln q` term).
    pub gradient_mean: Vec<f64>,
    /// Total variance `sum_x Var[f_hat_x]` of the centered gradient estimate.
    pub gradient_variance: f64,
    /// Expected random part of the Nearest-Newton direction.
    pub newton_mean: Vec<f64>,
    /// Total variance of that direction.
    pub newton_variance: f64,
}

const MAX_TUPLES: u128 = 1 << 22;

/// Moments of the block estimator for an arbitrary baseline `D(x_-i)`
/// (`baseline` receives a full configuration; `x_i` must be ignored).
pub fn enumerate_blocks_with_baseline<O, F>(
    obj: &O,
    q: &ProductDistribution,
    i: usize,
    counts: &[usize],
    t: f64,
    baseline: F,
) -> Result<BlockMoments>
where
    O: Objective + ?Sized,
    F: Fn(&[usize]) -> f64,
{
    let arities = obj.arities();
    let k = arities[i];
    if counts.len() != k {
        return Err(PcError::DimensionMismatch {
            expected: k,
            got: counts.len(),
        });
    }
    if let Some(mv) = counts.iter().position(|&c| c == 0) {
        return Err(PcError::EmptyCell { agent: i, mv });
    }
    let rest: Vec<usize> = (0..arities.len()).filter(|&j| j != i).collect();
    let rest_arities: Vec<usize> = rest.iter().map(|&j| arities[j]).collect();
    let rest_space = JointSpace::new(&rest_arities, ENUMERATION_CAP)?;
    let r = rest_space.size();
    let weights: Vec<f64> = rest_space
        .iter()
        .map(|y| y.iter().zip(&rest).map(|(&v, &j)| q.row(j)[v]).product())
        .collect();

    let mut mean = vec![0.0; k];
    let mut variance = vec![0.0; k];
    let mut full = vec![0usize; arities.len()];
    for x in 0..k {
        let g: Vec<f64> = rest_space
            .iter()
            .map(|y| {
                for (&j, &v) in rest.iter().zip(&y) {
                    full[j] = v;
                }
                full[i] = x;
                obj.value(&full) - baseline(&full)
            })
            .collect();
        let l = counts[x];
        let tuples = (r as u128).pow(l as u32);
        if tuples > MAX_TUPLES {
            return Err(PcError::SpaceTooLarge {
                size: tuples,
                cap: MAX_TUPLES as usize,
            });
        }
        let mut idx = vec![0usize; l];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for _ in 0..tuples {
            let p: f64 = idx.iter().map(|&a| weights[a]).product();
            let avg = idx.iter().map(|&a| g[a]).sum::<f64>() / l as f64;
            m1 += p * avg;
            m2 += p * avg * avg;
            for d in (0..l).rev() {
                idx[d] += 1;
                if idx[d] < r {
                    break;
                }
                idx[d] = 0;
            }
        }
        mean[x] = m1;
        variance[x] = (m2 - m1 * m1).max(0.0);
    }

    // Cells are independent given the counts, so linear maps of the
    // per-move means combine variances with squared coefficients.
    let q_i = q.row(i);
    let ln_q: Vec<f64> = q_i
        .iter()
        .map(|p| t * p.max(f64::MIN_POSITIVE).ln())
        .collect();
    let raw_mean: Vec<f64> = mean.iter().zip(&ln_q).map(|(m, l)| m + l).collect();
    let avg = raw_mean.iter().sum::<f64>() / k as f64;
    let gradient_mean = raw_mean.iter().map(|r| avg - r).collect();
    let kf = k as f64;
    let mut gradient_variance = 0.0;
    let mut newton_variance = 0.0;
    for x in 0..k {
        for y in 0..k {
            let delta = if x == y { 1.0 } else { 0.0 };
            gradient_variance += (delta - 1.0 / kf).powi(2) * variance[y];
            newton_variance += (q_i[x] * (delta - q_i[y])).powi(2) * variance[y];
        }
    }
    let e: f64 = q_i.iter().zip(&mean).map(|(p, m)| p * m).sum();
    let newton_mean = q_i.iter().zip(&mean).map(|(p, m)| p * (m - e)).collect();
    Ok(BlockMoments {
        mean,
        variance,
        gradient_mean,
        gradient_variance,
        newton_mean,
        newton_variance,
    })
}

/// [`enumerate_blocks_with_baseline`] for one of the built-in difference
/// utilities.
pub fn enumerate_blocks_expectation<O: Objective + ?Sized>(
    obj: &O,
    q: &ProductDistribution,
    i: usize,
    counts: &[usize],
    utility: DifferenceUtility,
    t: f64,
) -> Result<BlockMoments> {
    let beta = utility.baseline_coefficients(i, q.row(i), counts)?;
    let k = obj.arities()[i];
    enumerate_blocks_with_baseline(obj, q, i, counts, t, |x| {
        let mut probe = x.to_vec();
        (0..k)
            .map(|y| {
                probe[i] = y;
                beta[y] * obj.value(&probe)
            })
            .sum()
    })
}

/// Closed-form total variance of the centered gradient estimate,
/// `(|X_i| - 1)/|X_i| * sum_x Var(g(x, .)) / L_x`, and of the Nearest-Newton
/// direction, `sum_x w_x Var(g(x, .))` with the weights of
/// [`crate::montecarlo::nn_au_weights`]. `Var` is over `x_-i ~ q_-i`.
pub fn closed_form_variances<O, F>(
    obj: &O,
    q: &ProductDistribution,
    i: usize,
    counts: &[usize],
    baseline: F,
) -> Result<(f64, f64)>
where
    O: Objective + ?Sized,
    F: Fn(&[usize]) -> f64,
{
    let arities = obj.arities();
    let k = arities[i];
    let space = JointSpace::new(arities, ENUMERATION_CAP)?;
    let mut m1 = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    for x in space.iter() {
        let w: f64 = (0..x.len())
            .filter(|&j| j != i)
            .map(|j| q.row(j)[x[j]])
            .product();
        let g = obj.value(&x) - baseline(&x);
        m1[x[i]] += w * g;
        m2[x[i]] += w * g * g;
    }
    let var: Vec<f64> = m1
        .iter()
        .zip(&m2)
        .map(|(a, b)| (b - a * a).max(0.0))
        .collect();
    let kf = k as f64;
    let grad = (kf - 1.0) / kf
        * var
            .iter()
            .zip(counts)
            .map(|(v, &l)| v / l as f64)
            .sum::<f64>();
    let c: Vec<f64> = counts.iter().map(|&l| l as f64).collect();
    let w = crate::montecarlo::nn_au_weights(q.row(i), &c);
    let newton = var.iter().zip(&w).map(|(v, w)| v * w).sum();
    Ok((grad, newton))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Factor, FactoredObjective};
    use approx::assert_relative_eq;

    fn landscape() -> FactoredObjective {
        FactoredObjective::new(vec![2, 2])
            .unwrap()
            .with_factor(Factor::new(vec![0, 1], vec![2, 2], vec![0.0, 18.0, 25.0, 2.0]).unwrap())
            .unwrap()
    }

    #[test]
    fn zero_objective_gives_uniform() {
        let obj = FactoredObjective::new(vec![2, 3]).unwrap();
        let p = exact_boltzmann(&obj, 1.0).unwrap();
        assert!(p.probs().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
        let m = boltzmann_marginals(&obj, 1.0).unwrap();
        assert_eq!(m.row(1), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn cold_limit_concentrates_on_argmin() {
        let p = exact_boltzmann(&landscape(), 1e-6).unwrap();
        assert!(p.prob(&[0, 0]) > 1.0 - 1e-6);
    }

    #[test]
    fn landscape_table_matches_direct_evaluation() {
        let t = 7.0;
        let p = exact_boltzmann(&landscape(), t).unwrap();
        let g: [f64; 4] = [0.0, 18.0, 25.0, 2.0];
        let z: f64 = g.iter().map(|v| (-v / t).exp()).sum();
        for (k, v) in g.iter().enumerate() {
            assert_relative_eq!(p.probs()[k], (-v / t).exp() / z, epsilon = 1e-15);
        }
        assert_relative_eq!(
            log_partition(&landscape(), t).unwrap(),
            z.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn kl_identity_and_asymmetry() {
        let obj = landscape();
        let t = 7.0;
        let p = exact_boltzmann(&obj, t).unwrap();
        let ln_z = log_partition(&obj, t).unwrap();
        let q = ProductDistribution::binary(&[0.3, 0.8]).unwrap();
        let kl = kl_qp(&q, &p).unwrap();
        assert_relative_eq!(obj.lagrangian(&q, t), t * kl - t * ln_z, epsilon = 1e-10);
        assert!(kl > 0.0);
        assert!((kl - kl_pq(&p, &q).unwrap()).abs() > 1e-3);
        let same = DenseDistribution::from_product(&q).unwrap();
        assert!(kl_qp(&q, &same).unwrap().abs() < 1e-15);
    }

    #[test]
    fn separable_marginals_equal_brouwer_fixed_point() {
        let obj = FactoredObjective::new(vec![2, 3])
            .unwrap()
            .with_factor(Factor::new(vec![0], vec![2], vec![0.3, -1.0]).unwrap())
            .unwrap()
            .with_factor(Factor::new(vec![1], vec![3], vec![2.0, 0.0, 1.0]).unwrap())
            .unwrap();
        let t = 0.8;
        let m = boltzmann_marginals(&obj, t).unwrap();
        let q = ProductDistribution::uniform(&[2, 3]).unwrap();
        let b = crate::updaters::brouwer_step(&obj, &q, &[0, 1], t);
        assert!(m.sup_distance(&b) < 1e-14);
    }

    #[test]
    fn exhaustive_helpers_agree_with_closed_forms() {
        let obj = landscape();
        let q = ProductDistribution::binary(&[0.25, 0.6]).unwrap();
        assert_relative_eq!(
            exhaustive_expectation(&obj, &q).unwrap(),
            obj.expected_value(&q, true),
            epsilon = 1e-12
        );
        let a = exhaustive_conditional(&obj, &q, 1).unwrap();
        let b = obj.conditional_expectation(&q, 1);
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_objective_has_zero_estimator_variance() {
        let obj = FactoredObjective::new(vec![2, 3])
            .unwrap()
            .with_factor(Factor::new(vec![0, 1], vec![2, 3], vec![4.0; 6]).unwrap())
            .unwrap();
        let q = ProductDistribution::from_rows(vec![vec![0.4, 0.6], vec![0.2, 0.3, 0.5]]).unwrap();
        for u in [
            DifferenceUtility::RawG,
            DifferenceUtility::Aristocrat { smoothing: false },
            DifferenceUtility::WonderfulLife {
                clamp: crate::montecarlo::ClampRule::LeastSampled,
            },
        ] {
            let m = enumerate_blocks_expectation(&obj, &q, 0, &[2, 3], u, 1.0).unwrap();
            assert!(m.gradient_variance < 1e-24);
            assert!(m.variance.iter().all(|&v| v < 1e-24));
        }
    }

    #[test]
    fn dense_distribution_validation() {
        assert!(DenseDistribution::new(&[2], vec![0.5, 0.6]).is_err());
        assert!(DenseDistribution::new(&[2], vec![1.5, -0.5]).is_err());
        let d = DenseDistribution::new(&[2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_relative_eq!(d.marginal(0)[1], 0.7, epsilon = 1e-15);
    }
}
