//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    pub step_count: u64,
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    /// Moment buffers sized to the parameter set; defaults beta1 0.9,
    /// beta2 0.999, eps 1e-8.
    pub fn new(lr: S, param_sizes: &[usize]) -> Self {
        AdamState {
            step_count: 0,
            lr,
            beta1: S::from_f64(0.9),
            beta2: S::from_f64(0.999),
            eps: S::from_f64(1e-8),
            m: param_sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: param_sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }
}

/// One Adam update. Gradients are read from each parameter's grad buffer and
/// the values are updated in place; `names` is used for diagnostics.
pub fn adam_step<S: Scalar>(
    params: &mut [&mut Tensor<S>],
    names: &[&str],
    state: &mut AdamState<S>,
) -> Result<()> {
    assert_eq!(params.len(), state.m.len(), "optimizer/parameter mismatch");
    for (i, p) in params.iter().enumerate() {
        let g = p.grad().unwrap_or(&[]);
        if g.len() != p.numel() {
            return Err(Error::InvalidArgument(format!(
                "parameter {} has no gradient buffer",
                names.get(i).copied().unwrap_or("?")
            )));
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("gradient of {}", names.get(i).copied().unwrap_or("?")),
            });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let one = S::one();
    let bc1 = one - state.beta1.powi(t);
    let bc2 = one - state.beta2.powi(t);

    for (i, p) in params.iter_mut().enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        // split borrow: read grads first, then write values
        let grads: Vec<S> = p.grad().unwrap().to_vec();
        let values = p.data_mut();
        for j in 0..values.len() {
            let g = grads[j];
            m[j] = state.beta1 * m[j] + (one - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (one - state.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            values[j] = values[j] - state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: Vec<f64>, g: Vec<f64>) -> Tensor<f64> {
        let n = v.len();
        let mut t = Tensor::new(vec![n], v).unwrap();
        t.grad_mut().copy_from_slice(&g);
        t
    }

    #[test]
    fn first_step_hand_value() {
        let mut p = param(vec![1.0], vec![1.0]);
        let mut state = AdamState::new(1e-4, &[1]);
        adam_step(&mut [&mut p], &["w"], &mut state).unwrap();
        // m_hat = v_hat = 1 after bias correction; update = lr / (1 + eps)
        let expect = 1.0 - 1e-4 * (1.0 / (1.0 + 1e-8));
        assert!((p.data()[0] - expect).abs() < 1e-12);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn zero_gradient_is_identity_on_values() {
        let mut p = param(vec![0.3, -0.7], vec![0.0, 0.0]);
        let mut state = AdamState::new(1e-3, &[2]);
        adam_step(&mut [&mut p], &["w"], &mut state).unwrap();
        assert_eq!(p.data(), &[0.3, -0.7]);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn two_steps_match_hand_trace() {
        // Scripted two-step trace with constant gradient 0.5, lr 0.01.
        let g = 0.5;
        let lr = 0.01;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let mut m = 0.0;
        let mut v = 0.0;
        let mut x = 2.0;
        for t in 1..=2i32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - f64::powi(b1, t));
            let vh = v / (1.0 - f64::powi(b2, t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        // implementation
        let mut p = param(vec![2.0], vec![g]);
        let mut state = AdamState::new(lr, &[1]);
        adam_step(&mut [&mut p], &["w"], &mut state).unwrap();
        p.grad_mut()[0] = g;
        adam_step(&mut [&mut p], &["w"], &mut state).unwrap();
        assert!((p.data()[0] - x).abs() < 1e-12, "{} vs {}", p.data()[0], x);
    }

    #[test]
    fn non_finite_gradient_rejected_with_name() {
        let mut p = param(vec![1.0], vec![f64::NAN]);
        let mut state = AdamState::new(1e-4, &[1]);
        let err = adam_step(&mut [&mut p], &["conv1.weight"], &mut state).unwrap_err();
        assert!(err.to_string().contains("conv1.weight"));
        assert_eq!(state.step_count, 0);
    }
}
