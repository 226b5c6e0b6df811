//! Independent reference implementations used by the test suites: a naive
//! direct convolution and a central finite-difference gradient checker.
//! These deliberately avoid the im2col/GEMM path so they can vouch for it.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Direct quadruple-loop valid convolution.
pub fn naive_conv2d<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    stride: (usize, usize),
) -> Tensor<S> {
    let (ic, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oc, kh, kw) = (weights.shape()[0], weights.shape()[2], weights.shape()[3]);
    let (sh, sw) = stride;
    let oh = (h - kh) / sh + 1;
    let ow = (w - kw) / sw + 1;
    let mut out = Tensor::zeros(vec![oc, oh, ow]);
    for m in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.data()[m];
                for c in 0..ic {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iv = input.data()[c * h * w + (oy * sh + ky) * w + (ox * sw + kx)];
                            let wv = weights.data()[((m * ic + c) * kh + ky) * kw + kx];
                            acc += iv * wv;
                        }
                    }
                }
                out.data_mut()[m * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    out
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Central finite difference of a scalar function at every coordinate of `x`.
pub fn finite_difference_grad(
    f: &dyn Fn(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    step: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; x.numel()];
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - step;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad[i] = (fp - fm) / (2.0 * step);
    }
    grad
}

/// Finite difference restricted to a subset of coordinates; used when the
/// parameter tensor is too large for an exhaustive sweep.
pub fn finite_difference_grad_at(
    f: &dyn Fn(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    step: f64,
    coords: &[usize],
) -> Vec<f64> {
    let mut grad = vec![0.0; coords.len()];
    let mut probe = x.clone();
    for (j, &i) in coords.iter().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let fp = f(&probe);
        probe.data_mut()[i] = orig - step;
        let fm = f(&probe);
        probe.data_mut()[i] = orig;
        grad[j] = (fp - fm) / (2.0 * step);
    }
    grad
}

/// Relative error with an absolute floor so near-zero pairs compare sanely.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / scale
}

/// Assert that an analytic gradient matches central finite differences.
pub fn assert_grad_close(
    f: &dyn Fn(&Tensor<f64>) -> f64,
    x: &Tensor<f64>,
    analytic: &[f64],
    step: f64,
    tol: f64,
) {
    let numeric = finite_difference_grad(f, x, step);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(*a, *n);
        assert!(
            err < tol,
            "gradient mismatch at {i}: analytic {a}, numeric {n}, rel err {err:.3e}"
        );
    }
}
