//! Joint-policy space checks: how far a joint distribution is from any
//! product of independent marginals, and how a shared Gaussian signal
//! realizes an arbitrary joint distribution.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exec::map_chunks;
use crate::rng::stream;

/// Probabilities over a finite joint-action set.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub probs: Vec<f64>,
    pub sample_count: usize,
}

impl JointDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_count(probs, 0)
    }

    pub fn with_count(probs: Vec<f64>, sample_count: usize) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Distribution(format!("invalid probabilities {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Distribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs, sample_count })
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let n: usize = counts.iter().sum();
        if n == 0 {
            return Err(Error::Distribution("no samples".into()));
        }
        Self::with_count(counts.iter().map(|&c| c as f64 / n as f64).collect(), n)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
            sample_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductFit {
    /// Frobenius distance `‖J − p⊗q‖`.
    pub error: f64,
    pub p: [f64; 2],
    pub q: [f64; 2],
}

fn product_error(j: &[f64], p: f64, q: f64) -> f64 {
    let pv = [p, 1.0 - p];
    let qv = [q, 1.0 - q];
    let mut s = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let d = j[2 * a + b] - pv[a] * qv[b];
            s += d * d;
        }
    }
    s.sqrt()
}

/// Exact minimizer over `q ∈ [0, 1]` of the squared error for fixed `p`.
/// The error is a quadratic in `q`.
fn best_q(j: &[f64], p: f64) -> f64 {
    // residual_ab = j_ab − p_a·q_b with q_0 = q, q_1 = 1 − q.
    // d/dq Σ r² = −2 Σ_a p_a (r_a0 − r_a1) = 0.
    let pv = [p, 1.0 - p];
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..2 {
        // r_a0 − r_a1 = j_a0 − j_a1 − p_a(2q − 1)
        num += pv[a] * (j[2 * a] - j[2 * a + 1] + pv[a]);
        den += 2.0 * pv[a] * pv[a];
    }
    if den == 0.0 {
        0.5
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

fn transpose(j: &[f64]) -> [f64; 4] {
    [j[0], j[2], j[1], j[3]]
}

/// Distance from a 2×2 joint distribution (index `2·a₀ + a₁`) to the
/// nearest product of marginals: a 1e-3 grid over `(p₀, q₀)` followed by
/// alternating exact minimization from the best grid point.
pub fn product_fit(dist: &JointDistribution) -> Result<ProductFit> {
    if dist.probs.len() != 4 {
        return Err(Error::Distribution(format!(
            "product fit needs a 2x2 joint distribution, got {} entries",
            dist.probs.len()
        )));
    }
    JointDistribution::new(dist.probs.clone())?;
    let j = &dist.probs;
    let jt = transpose(j);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=1000 {
        let p = i as f64 / 1000.0;
        for k in 0..=1000 {
            let q = k as f64 / 1000.0;
            let e = product_error(j, p, q);
            if e < best.0 {
                best = (e, p, q);
            }
        }
    }
    let (_, mut p, mut q) = best;
    for _ in 0..10_000 {
        let q_new = best_q(j, p);
        let p_new = best_q(&jt, q_new);
        let moved = (p_new - p).abs() + (q_new - q).abs();
        p = p_new;
        q = q_new;
        if moved < 1e-15 {
            break;
        }
    }
    let refined = product_error(j, p, q);
    let (error, p, q) = if refined <= best.0 { (refined, p, q) } else { best };
    Ok(ProductFit {
        error,
        p: [p, 1.0 - p],
        q: [q, 1.0 - q],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalRealization {
    /// Upper boundary of each joint action's interval on the signal line;
    /// the last is `+∞`. Empty intervals have equal neighbours.
    pub boundaries: Vec<f64>,
    pub realized: JointDistribution,
    /// Largest absolute gap between realized and target probabilities.
    pub max_error: f64,
}

/// Joint action assigned to a one-dimensional signal by the partition.
pub fn assign_region(boundaries: &[f64], z: f64) -> usize {
    boundaries.iter().position(|&b| z < b).unwrap_or(boundaries.len() - 1)
}

/// Partitions the standard-normal line into consecutive intervals whose
/// masses equal the target probabilities, then checks by Monte Carlo with
/// `n_signals` draws that the deterministic map realizes the target.
pub fn signal_realization_check(target: &JointDistribution, n_signals: usize, seed: u64) -> Result<SignalRealization> {
    JointDistribution::new(target.probs.clone())?;
    if n_signals == 0 {
        return Err(Error::Parameter("need at least one signal".into()));
    }
    let normal = Normal::standard();
    let k = target.probs.len();
    let mut boundaries = Vec::with_capacity(k);
    let mut cum = 0.0;
    for (i, &p) in target.probs.iter().enumerate() {
        cum += p;
        let last_mass = target.probs[i + 1..].iter().all(|&r| r == 0.0);
        boundaries.push(if last_mass || cum >= 1.0 {
            f64::INFINITY
        } else if cum <= 0.0 {
            f64::NEG_INFINITY
        } else {
            normal.inverse_cdf(cum)
        });
    }
    let counts = map_chunks(n_signals, 1 << 16, |chunk, len| {
        let mut rng = stream(seed, &format!("realization/{chunk}"));
        let mut c = vec![0usize; k];
        for _ in 0..len {
            let z: f64 = rng.sample(StandardNormal);
            c[assign_region(&boundaries, z)] += 1;
        }
        c
    });
    let mut total = vec![0usize; k];
    for c in counts {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    let realized = JointDistribution::from_counts(&total)?;
    let max_error = realized
        .probs
        .iter()
        .zip(&target.probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SignalRealization {
        boundaries,
        realized,
        max_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn product(p: f64, q: f64) -> JointDistribution {
        JointDistribution::new(vec![p * q, p * (1.0 - q), (1.0 - p) * q, (1.0 - p) * (1.0 - q)]).unwrap()
    }

    #[test]
    fn unnormalized_input_is_rejected() {
        let d = JointDistribution {
            probs: vec![0.5, 0.5, 0.5, 0.0],
            sample_count: 0,
        };
        assert!(matches!(product_fit(&d), Err(Error::Distribution(_))));
    }

    #[test]
    fn uniform_is_a_product() {
        let fit = product_fit(&JointDistribution::uniform(4)).unwrap();
        assert!(fit.error <= 1e-6);
        assert!((fit.p[0] - 0.5).abs() < 1e-6 && (fit.q[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn one_hot_target_is_a_single_region() {
        let target = JointDistribution::new(vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let r = signal_realization_check(&target, 10_000, 1).unwrap();
        assert_eq!(r.realized.probs, target.probs);
        assert_eq!(r.max_error, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn products_fit_exactly(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            prop_assert!(product_fit(&product(p, q)).unwrap().error <= 1e-6);
        }

        #[test]
        fn any_target_is_realized(weights in prop::collection::vec(0.0f64..1.0, 1..=16), seed in 0u64..100) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1e-6);
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let target = JointDistribution::new(probs).unwrap();
            let n = 40_000;
            let r = signal_realization_check(&target, n, seed).unwrap();
            prop_assert!(r.max_error <= 2.0 / (n as f64).sqrt());
        }
    }
}
