//! Fully connected (affine) layer.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<(usize, usize)> {
    let n_in = match *input.shape() {
        [n] => n,
        _ => {
            return Err(Error::ShapeMismatch {
                expected: vec![0],
                got: input.shape().to_vec(),
                context: "dense input must be a vector".into(),
            })
        }
    };
    let (n_out, w_in) = match *weights.shape() {
        [o, i] => (o, i),
        _ => {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 0],
                got: weights.shape().to_vec(),
                context: "dense weights must be out x in".into(),
            })
        }
    };
    if w_in != n_in {
        return Err(Error::ShapeMismatch {
            expected: weights.shape().to_vec(),
            got: input.shape().to_vec(),
            context: format!("dense input has {n_in} features, weights expect {w_in}"),
        });
    }
    if bias.shape() != [n_out] {
        return Err(Error::ShapeMismatch {
            expected: vec![n_out],
            got: bias.shape().to_vec(),
            context: "dense bias".into(),
        });
    }
    Ok((n_in, n_out))
}

/// y = W x + b
pub fn dense_forward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    let (n_in, n_out) = check(input, weights, bias)?;
    let mut out = bias.data().to_vec();
    S::gemm_strided(
        n_out,
        n_in,
        1,
        S::one(),
        weights.data(),
        n_in as isize,
        1,
        input.data(),
        1,
        1,
        S::one(),
        &mut out,
    );
    Tensor::new(vec![n_out], out)
}

/// Accumulating backward pass; returns the input gradient when requested.
pub fn dense_backward_into<S: Scalar>(
    upstream: &Tensor<S>,
    cached_input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    weight_grad: &mut [S],
    bias_grad: &mut [S],
    need_input_grad: bool,
) -> Result<Option<Tensor<S>>> {
    let (n_in, n_out) = check(cached_input, weights, bias)?;
    if upstream.shape() != [n_out] {
        return Err(Error::ShapeMismatch {
            expected: vec![n_out],
            got: upstream.shape().to_vec(),
            context: "dense upstream gradient".into(),
        });
    }
    // dW (out x in) += dy (out x 1) * x^T (1 x in)
    S::gemm_strided(
        n_out,
        1,
        n_in,
        S::one(),
        upstream.data(),
        1,
        1,
        cached_input.data(),
        1,
        1,
        S::one(),
        weight_grad,
    );
    for (g, u) in bias_grad.iter_mut().zip(upstream.data()) {
        *g += *u;
    }
    if !need_input_grad {
        return Ok(None);
    }
    // dx (in) = W^T (in x out) * dy (out)
    let mut dx = vec![S::zero(); n_in];
    S::gemm_strided(
        n_in,
        n_out,
        1,
        S::one(),
        weights.data(),
        1,
        n_in as isize,
        upstream.data(),
        1,
        1,
        S::zero(),
        &mut dx,
    );
    Ok(Some(Tensor::new(vec![n_in], dx)?))
}

/// Backward pass returning (input_grad, weight_grad, bias_grad).
pub fn dense_backward<S: Scalar>(
    upstream: &Tensor<S>,
    cached_input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let mut wg = vec![S::zero(); weights.numel()];
    let mut bg = vec![S::zero(); bias.numel()];
    let ig = dense_backward_into(upstream, cached_input, weights, bias, &mut wg, &mut bg, true)?
        .expect("input grad requested");
    Ok((
        ig,
        Tensor::new(weights.shape().to_vec(), wg)?,
        Tensor::new(bias.shape().to_vec(), bg)?,
    ))
}
