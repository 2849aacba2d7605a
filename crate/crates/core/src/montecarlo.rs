//! Monte-Carlo estimation of conditional expectations.
//!
//! A block of `L` joint samples is drawn from `q`. For agent `i` the samples
//! are split by the agent's own move, and the per-move sample mean of a
//! difference utility `g = G - D(x_-i)` estimates `E[G|x_i]` up to a constant
//! that cancels in every update rule. The baselines offered here are all
//! linear in the counterfactual row `G(., x_-i)`:
//!
//! * raw `G`: `D = 0`;
//! * aristocrat (AU): weights proportional to `1 / L_{x_i}`;
//! * wonderful life (WLU): all weight on one clamped move;
//! * the Nearest-Newton analogue of AU, see [`nn_au_weights`].

use rand::Rng;

use crate::distribution::{argmin, sample_row, ProductDistribution};
use crate::error::{PcError, Result};
use crate::objective::Objective;

/// `L` joint samples drawn from one snapshot of `q`.
#[derive(Debug, Clone)]
pub struct SampleBlock {
    q: ProductDistribution,
    samples: Vec<Vec<usize>>,
    values: Vec<f64>,
    counts: Vec<Vec<usize>>,
}

impl SampleBlock {
    /// Builds a block from given samples, evaluating `obj` on each.
    pub fn from_samples<O: Objective + ?Sized>(
        q: &ProductDistribution,
        obj: &O,
        samples: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(PcError::InvalidConfig(
                "a block needs at least one sample".into(),
            ));
        }
        let arities = q.arities();
        let mut counts: Vec<Vec<usize>> = arities.iter().map(|&a| vec![0; a]).collect();
        for s in &samples {
            if s.len() != arities.len() {
                return Err(PcError::DimensionMismatch {
                    expected: arities.len(),
                    got: s.len(),
                });
            }
            for (agent, (&v, &a)) in s.iter().zip(&arities).enumerate() {
                if v >= a {
                    return Err(PcError::MoveOutOfRange {
                        agent,
                        value: v,
                        arity: a,
                    });
                }
                counts[agent][v] += 1;
            }
        }
        let values = samples.iter().map(|s| obj.value(s)).collect();
        Ok(Self {
            q: q.clone(),
            samples,
            values,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<usize>] {
        &self.samples
    }

    /// `G` at every sample.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `L_{x_i}` for every move of agent `i`.
    pub fn counts(&self, i: usize) -> &[usize] {
        &self.counts[i]
    }

    /// The snapshot the block was drawn from.
    pub fn distribution(&self) -> &ProductDistribution {
        &self.q
    }
}

/// Draws `l` independent joint samples from `q`.
pub fn draw_block<O: Objective + ?Sized, R: Rng + ?Sized>(
    q: &ProductDistribution,
    obj: &O,
    l: usize,
    rng: &mut R,
) -> Result<SampleBlock> {
    if l == 0 {
        return Err(PcError::InvalidConfig(
            "block size must be at least 1".into(),
        ));
    }
    let samples = (0..l).map(|_| q.sample(rng).0).collect();
    SampleBlock::from_samples(q, obj, samples)
}

/// How the WLU clamp move is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampRule {
    /// The move with the fewest samples in the block.
    LeastSampled,
    /// The move with the lowest probability under `q_i`.
    LeastProbable,
    Fixed(usize),
}

/// Difference utility `g = G - D(x_-i)` used by the estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DifferenceUtility {
    RawG,
    /// AU; with `smoothing` the counts are replaced by `q_i(x_i) L`.
    Aristocrat {
        smoothing: bool,
    },
    WonderfulLife {
        clamp: ClampRule,
    },
    /// AU with the Nearest-Newton weights of [`nn_au_weights`].
    NewtonAristocrat {
        smoothing: bool,
    },
}

/// What to do with a move that has no samples in the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyCellPolicy {
    Error,
    /// Smoothed counts for the baseline; the empty move's estimate averages
    /// the counterfactual utility `g(x'_i, x_-i)` over every sample.
    #[default]
    Smooth,
    /// Draw one extra sample with `x_i` forced to the empty move.
    ForceSample,
}

fn smoothed_counts(q_i: &[f64], counts: &[usize], smoothing: bool) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if smoothing {
        q_i.iter().map(|p| p * total as f64).collect()
    } else {
        counts.iter().map(|&c| c as f64).collect()
    }
}

fn check_cells(agent: usize, counts: &[f64]) -> Result<()> {
    match counts.iter().position(|&c| c <= 0.0) {
        Some(mv) => Err(PcError::EmptyCell { agent, mv }),
        None => Ok(()),
    }
}

/// Normalized AU weights `(1/L_x) / sum_x' (1/L_x')`.
pub fn au_weights(counts: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = counts.iter().map(|c| 1.0 / c).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

/// Replacement for `1/L_x` in the AU baseline when the estimates drive a
/// Nearest-Newton update:
/// `q(x)^2 / L_x * ((1 - q(x))^2 + sum_{x' != x} q(x')^2)`. Unnormalized.
pub fn nn_au_weights(q_i: &[f64], counts: &[f64]) -> Vec<f64> {
    let sq: f64 = q_i.iter().map(|p| p * p).sum();
    q_i.iter()
        .zip(counts)
        .map(|(&p, &c)| p * p / c * ((1.0 - p) * (1.0 - p) + sq - p * p))
        .collect()
}

/// Clamp move for WLU.
pub fn wlu_clamp(q_i: &[f64], counts: &[usize], rule: ClampRule) -> usize {
    match rule {
        ClampRule::LeastSampled => {
            let c: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            argmin(&c)
        }
        ClampRule::LeastProbable => argmin(q_i),
        ClampRule::Fixed(m) => m,
    }
}

impl DifferenceUtility {
    /// Coefficients `beta` with `D(x_-i) = sum_y beta_y G(y, x_-i)`.
    pub fn baseline_coefficients(
        &self,
        agent: usize,
        q_i: &[f64],
        counts: &[usize],
    ) -> Result<Vec<f64>> {
        let k = q_i.len();
        match *self {
            DifferenceUtility::RawG => Ok(vec![0.0; k]),
            DifferenceUtility::Aristocrat { smoothing } => {
                let c = smoothed_counts(q_i, counts, smoothing);
                check_cells(agent, &c)?;
                Ok(au_weights(&c))
            }
            DifferenceUtility::NewtonAristocrat { smoothing } => {
                let c = smoothed_counts(q_i, counts, smoothing);
                check_cells(agent, &c)?;
                let w = nn_au_weights(q_i, &c);
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Ok(vec![1.0 / k as f64; k]);
                }
                Ok(w.iter().map(|v| v / total).collect())
            }
            DifferenceUtility::WonderfulLife { clamp } => {
                let m = wlu_clamp(q_i, counts, clamp);
                if m >= k {
                    return Err(PcError::MoveOutOfRange {
                        agent,
                        value: m,
                        arity: k,
                    });
                }
                let mut beta = vec![0.0; k];
                beta[m] = 1.0;
                Ok(beta)
            }
        }
    }
}

/// `G(y, x_-i)` for every move `y` of agent `i`.
pub fn counterfactual_row<O: Objective + ?Sized>(obj: &O, x: &[usize], i: usize) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..obj.arities()[i])
        .map(|y| {
            probe[i] = y;
            obj.value(&probe)
        })
        .collect()
}

fn baseline_at<O: Objective + ?Sized>(obj: &O, x: &[usize], i: usize, beta: &[f64]) -> f64 {
    if beta.iter().all(|&b| b == 0.0) {
        return 0.0;
    }
    counterfactual_row(obj, x, i)
        .iter()
        .zip(beta)
        .map(|(g, b)| g * b)
        .sum()
}

/// Per-sample AU values `g` together with the baseline `D` at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AuValues {
    pub utility: Vec<f64>,
    pub baseline: Vec<f64>,
}

pub fn au_utility<O: Objective + ?Sized>(
    block: &SampleBlock,
    obj: &O,
    i: usize,
    smoothing: bool,
) -> Result<AuValues> {
    let beta = DifferenceUtility::Aristocrat { smoothing }.baseline_coefficients(
        i,
        block.q.row(i),
        block.counts(i),
    )?;
    let baseline: Vec<f64> = block
        .samples
        .iter()
        .map(|s| baseline_at(obj, s, i, &beta))
        .collect();
    let utility = block
        .values
        .iter()
        .zip(&baseline)
        .map(|(g, d)| g - d)
        .collect();
    Ok(AuValues { utility, baseline })
}

/// `G(x) - G(clamp, x_-i)` at every sample.
pub fn wlu_utility<O: Objective + ?Sized>(
    block: &SampleBlock,
    obj: &O,
    i: usize,
    clamp: usize,
) -> Vec<f64> {
    block
        .samples
        .iter()
        .zip(&block.values)
        .map(|(s, g)| {
            if s[i] == clamp {
                return 0.0;
            }
            let mut probe = s.clone();
            probe[i] = clamp;
            g - obj.value(&probe)
        })
        .collect()
}

/// Per-sample values of any difference utility.
pub fn utility_values<O: Objective + ?Sized>(
    block: &SampleBlock,
    obj: &O,
    i: usize,
    utility: DifferenceUtility,
) -> Result<Vec<f64>> {
    let beta = utility.baseline_coefficients(i, block.q.row(i), block.counts(i))?;
    Ok(block
        .samples
        .iter()
        .zip(&block.values)
        .map(|(s, g)| g - baseline_at(obj, s, i, &beta))
        .collect())
}

/// Per-move sample mean of `values` over the block (the maximum-likelihood
/// estimate of each conditional expectation).
pub fn ml_conditional_estimate(block: &SampleBlock, i: usize, values: &[f64]) -> Result<Vec<f64>> {
    let k = block.counts(i).len();
    let mut sums = vec![0.0; k];
    for (s, v) in block.samples.iter().zip(values) {
        sums[s[i]] += v;
    }
    for (mv, (sum, &c)) in sums.iter_mut().zip(block.counts(i)).enumerate() {
        if c == 0 {
            return Err(PcError::EmptyCell { agent: i, mv });
        }
        *sum /= c as f64;
    }
    Ok(sums)
}

/// Estimate of `E[g|x_i]` for every move of agent `i`, handling empty cells
/// according to `policy`.
pub fn estimate_conditional<O: Objective + ?Sized, R: Rng + ?Sized>(
    block: &SampleBlock,
    obj: &O,
    i: usize,
    utility: DifferenceUtility,
    policy: EmptyCellPolicy,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let counts = block.counts(i);
    let empty: Vec<usize> = (0..counts.len()).filter(|&m| counts[m] == 0).collect();
    if empty.is_empty() || policy == EmptyCellPolicy::Error {
        let values = utility_values(block, obj, i, utility)?;
        return ml_conditional_estimate(block, i, &values);
    }
    let smoothed = match utility {
        DifferenceUtility::Aristocrat { .. } => DifferenceUtility::Aristocrat { smoothing: true },
        DifferenceUtility::NewtonAristocrat { .. } => {
            DifferenceUtility::NewtonAristocrat { smoothing: true }
        }
        other => other,
    };
    let q_i = block.q.row(i);
    let beta = smoothed.baseline_coefficients(i, q_i, counts)?;
    let mut sums = vec![0.0; counts.len()];
    let mut n = vec![0usize; counts.len()];
    for (s, g) in block.samples.iter().zip(&block.values) {
        sums[s[i]] += g - baseline_at(obj, s, i, &beta);
        n[s[i]] += 1;
    }
    match policy {
        EmptyCellPolicy::Smooth => {
            for &m in &empty {
                let mut probe;
                for s in &block.samples {
                    probe = s.clone();
                    probe[i] = m;
                    sums[m] += obj.value(&probe) - baseline_at(obj, &probe, i, &beta);
                }
                n[m] = block.samples.len();
            }
        }
        EmptyCellPolicy::ForceSample => {
            for &m in &empty {
                let mut forced: Vec<usize> =
                    block.q.rows().iter().map(|r| sample_row(r, rng)).collect();
                forced[i] = m;
                sums[m] += obj.value(&forced) - baseline_at(obj, &forced, i, &beta);
                n[m] = 1;
            }
        }
        EmptyCellPolicy::Error => unreachable!(),
    }
    Ok(sums.iter().zip(&n).map(|(s, &c)| s / c as f64).collect())
}

/// Exponentially aged average `sum_k gamma^k e_{t-k} / sum_k gamma^k` of a
/// history ordered oldest first.
pub fn aged_estimate(history: &[Vec<f64>], gamma: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(PcError::InvalidConfig(format!(
            "aging weight must lie in [0, 1), got {gamma}"
        )));
    }
    let latest = history.last().ok_or(PcError::EmptyHistory)?;
    let mut num = vec![0.0; latest.len()];
    let mut den = 0.0;
    let mut w = 1.0;
    for e in history.iter().rev() {
        if w == 0.0 {
            break;
        }
        for (n, v) in num.iter_mut().zip(e) {
            *n += w * v;
        }
        den += w;
        w *= gamma;
    }
    Ok(num.iter().map(|n| n / den).collect())
}

/// Centered gradient estimate `f_x = -(g_x + T ln q(x)) + mean_x'(g_x' + T ln q(x'))`
/// from per-move estimates.
pub fn gradient_estimate(q_i: &[f64], estimates: &[f64], t: f64) -> Vec<f64> {
    let raw: Vec<f64> = estimates
        .iter()
        .zip(q_i)
        .map(|(g, &p)| g + t * p.max(f64::MIN_POSITIVE).ln())
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.iter().map(|r| mean - r).collect()
}

/// Random part of the Nearest-Newton direction,
/// `q(x) (g_x - sum_x' q(x') g_x')`, from per-move estimates.
pub fn newton_direction(q_i: &[f64], estimates: &[f64]) -> Vec<f64> {
    let e: f64 = q_i.iter().zip(estimates).map(|(p, g)| p * g).sum();
    q_i.iter()
        .zip(estimates)
        .map(|(p, g)| p * (g - e))
        .collect()
}
