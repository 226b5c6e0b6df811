//! Mean squared error.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Returns (loss, d loss / d pred). Gradient is 2 (pred - target) / N.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            expected: target.shape().to_vec(),
            got: pred.shape().to_vec(),
            context: "mse_loss".into(),
        });
    }
    let n = pred.numel();
    if n == 0 {
        return Err(Error::InvalidArgument("mse_loss on an empty batch".into()));
    }
    let inv_n = S::one() / S::from_f64(n as f64);
    let two = S::from_f64(2.0);
    let mut loss = S::zero();
    let mut grad = vec![S::zero(); n];
    for i in 0..n {
        let d = pred.data()[i] - target.data()[i];
        loss += d * d;
        grad[i] = two * d * inv_n;
    }
    Ok((loss * inv_n, Tensor::new(pred.shape().to_vec(), grad)?))
}
