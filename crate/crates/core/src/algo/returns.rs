//! Return and advantage estimators.

/// `G_t = Σ_{k≥t} γ^{k−t} r_k`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Generalized advantage estimation. `values` carries one extra trailing
/// bootstrap entry (0 at a terminal state).
pub fn gae_compute(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(
        values.len(),
        rewards.len() + 1,
        "gae needs one bootstrap value beyond the rewards"
    );
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    adv
}

/// Counterfactual advantage `q[taken] − Σ_a π(a)·q[a]`.
pub fn coma_advantage(q_values: &[f64], policy_probs: &[f64], taken: usize) -> f64 {
    let baseline: f64 = q_values.iter().zip(policy_probs).map(|(q, p)| q * p).sum();
    q_values[taken] - baseline
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_discount_returns_rewards() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(discounted_returns(&r, 0.0), r.to_vec());
        assert_eq!(discounted_returns(&[0.0; 4], 0.9), vec![0.0; 4]);
    }

    #[test]
    fn sparse_terminal_reward() {
        let g = discounted_returns(&[0.0, 0.0, 0.0, 4.0], 0.9);
        for (a, b) in g.iter().zip([2.916, 3.24, 3.6, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_lambda_zero_is_td_residual() {
        let r = [1.0, 0.5, -1.0];
        let v = [0.2, 0.4, 0.1, 0.0];
        let adv = gae_compute(&r, &v, 0.9, 0.0);
        for t in 0..3 {
            assert!((adv[t] - (r[t] + 0.9 * v[t + 1] - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_lambda_one_telescopes() {
        let r = [1.0, 0.5, -1.0];
        let v = [0.2, 0.4, 0.1, 0.0];
        let adv = gae_compute(&r, &v, 0.9, 1.0);
        let g = discounted_returns(&r, 0.9);
        for t in 0..3 {
            assert!((adv[t] - (g[t] - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_two_step_by_hand() {
        // δ1 = 1 − 0.5 = 0.5; δ0 = 1 + 0.99·0.5 − 0.5 = 0.995;
        // A1 = 0.5; A0 = 0.995 + 0.99·0.8·0.5 = 1.391.
        let adv = gae_compute(&[1.0, 1.0], &[0.5, 0.5, 0.0], 0.99, 0.8);
        assert!((adv[1] - 0.5).abs() < 1e-12);
        assert!((adv[0] - 1.391).abs() < 1e-12);
    }

    #[test]
    fn counterfactual_examples() {
        for a in 0..5 {
            assert_eq!(coma_advantage(&[1.0; 5], &[0.2; 5], a), 0.0);
        }
        assert_eq!(coma_advantage(&[2.0, 5.0], &[1.0, 0.0], 0), 0.0);
        assert_eq!(coma_advantage(&[1.0, 3.0], &[0.5, 0.5], 1), 1.0);
    }
}
