//! Adam and plain SGD parameter updates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor2;

/// Adam optimizer state for an ordered list of parameter tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    first_moment: Vec<Tensor2>,
    second_moment: Vec<Tensor2>,
}

impl AdamState {
    pub fn new(param_shapes: &[(usize, usize)], lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step_count: 0,
            first_moment: param_shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
            second_moment: param_shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
        }
    }

    /// State sized for an existing parameter list.
    pub fn for_params(params: &[&Tensor2], lr: f64, beta1: f64, beta2: f64) -> Self {
        let shapes: Vec<(usize, usize)> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes, lr, beta1, beta2)
    }
}

/// One Adam update with bias correction. Rejects the whole update if any
/// gradient entry is non-finite; parameters and moments are left untouched.
pub fn adam_step(
    params: &mut [&mut Tensor2],
    grads: &[Tensor2],
    state: &mut AdamState,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "adam_step: param {:?} vs grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::Numeric("non-finite gradient, update rejected".into()));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut().zip(&mut state.second_moment))
    {
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gd[i];
            vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gd[i] * gd[i];
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_are_a_fixed_point() {
        let mut p = Tensor2::from_vec(1, 2, vec![1.5, -2.5]).unwrap();
        let before = p.clone();
        let mut state = AdamState::for_params(&[&p], 1e-3, 0.9, 0.999);
        adam_step(&mut [&mut p], &[Tensor2::zeros(1, 2)], &mut state).unwrap();
        assert_eq!(p, before);
        assert!(state.first_moment[0].data().iter().all(|&v| v == 0.0));
        assert!(state.second_moment[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let lr = 1e-3;
        let mut p = Tensor2::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let g = Tensor2::from_vec(1, 2, vec![0.004, -250.0]).unwrap();
        let mut state = AdamState::for_params(&[&p], lr, 0.9, 0.999);
        adam_step(&mut [&mut p], &[g], &mut state).unwrap();
        // bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g)
        assert!((p.data()[0] + lr).abs() < 1e-6);
        assert!((p.data()[1] - lr).abs() < 1e-6);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        // loss(x) = (x - 3)^2, gradient 2(x - 3)
        let mut x = Tensor2::scalar(10.0);
        let mut state = AdamState::for_params(&[&x], 0.1, 0.9, 0.999);
        let mut last = (x.scalar_value() - 3.0_f64).powi(2);
        for _ in 0..2 {
            let g = Tensor2::scalar(2.0 * (x.scalar_value() - 3.0));
            adam_step(&mut [&mut x], &[g], &mut state).unwrap();
            let loss = (x.scalar_value() - 3.0_f64).powi(2);
            assert!(loss < last, "loss {loss} did not decrease from {last}");
            last = loss;
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = Tensor2::scalar(1.0);
        let mut state = AdamState::for_params(&[&p], 1e-3, 0.9, 0.999);
        let err = adam_step(&mut [&mut p], &[Tensor2::scalar(f64::NAN)], &mut state);
        assert!(matches!(err, Err(Error::Numeric(_))));
        assert_eq!(p.scalar_value(), 1.0);
        assert_eq!(state.step_count, 0);
    }
}
