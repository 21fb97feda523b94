use super::mlp::Tensor;
use crate::error::{Error, Result};

/// First and second moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Euclidean norm of all gradients taken together.
pub fn global_grad_norm(params: &[Tensor]) -> f64 {
    params
        .iter()
        .flat_map(|t| t.grad.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// One bias-corrected Adam update from the `grad` fields of `params`.
///
/// With `clip_norm` set, gradients are rescaled so their global norm is at
/// most `clip_norm` first. A non-finite gradient aborts the update and
/// leaves both parameters and state untouched.
pub fn adam_step(
    params: &mut [Tensor],
    state: &mut AdamState,
    lr: f64,
    clip_norm: Option<f64>,
) -> Result<()> {
    let n: usize = params.iter().map(Tensor::len).sum();
    if n != state.m.len() || n != state.v.len() {
        return Err(Error::Shape(format!(
            "optimizer state sized for {} parameters, network has {n}",
            state.m.len()
        )));
    }
    if !(lr > 0.0) {
        return Err(Error::Parameter(format!("learning rate must be positive, got {lr}")));
    }
    let norm = global_grad_norm(params);
    if !norm.is_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    let scale = match clip_norm {
        Some(c) if norm > c => c / norm,
        _ => 1.0,
    };
    state.step_count += 1;
    let t = state.step_count as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let mut k = 0;
    for tensor in params.iter_mut() {
        for (value, &grad) in tensor.values.iter_mut().zip(&tensor.grad) {
            let g = grad * scale;
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = state.beta1 * *m + (1.0 - state.beta1) * g;
            *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *value -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
            k += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(value: f64, grad: f64) -> Vec<Tensor> {
        let mut t = Tensor::from_values(&[1], vec![value]).unwrap();
        t.grad[0] = grad;
        vec![t]
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut params = scalar(0.75, 0.0);
        let mut state = AdamState::new(1);
        adam_step(&mut params, &mut state, 0.01, None).unwrap();
        assert_eq!(params[0].values[0], 0.75);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
        let mut params = scalar(1.0, 1.0);
        let mut state = AdamState::new(1);
        adam_step(&mut params, &mut state, 0.001, None).unwrap();
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((params[0].values[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn clipping_scales_gradients_before_moments() {
        let mut t = Tensor::from_values(&[2], vec![0.0, 0.0]).unwrap();
        t.grad = vec![0.6, 0.8];
        let mut params = vec![t];
        let mut state = AdamState::new(2);
        adam_step(&mut params, &mut state, 0.1, Some(0.1)).unwrap();
        assert!((state.m[0] - 0.1 * 0.06).abs() < 1e-15);
        assert!((state.m[1] - 0.1 * 0.08).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_leaves_state_untouched() {
        let mut params = scalar(2.0, f64::NAN);
        let mut state = AdamState::new(1);
        let before = state.clone();
        assert!(matches!(
            adam_step(&mut params, &mut state, 0.1, None),
            Err(Error::Numerical(_))
        ));
        assert_eq!(state, before);
        assert_eq!(params[0].values[0], 2.0);
    }
}
