//! Valid (no padding) 2-D convolution, forward and backward, lowered to
//! im2col + GEMM.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Extent of a valid convolution along one axis.
pub fn conv_extent(input: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || input < kernel {
        None
    } else {
        Some((input - kernel) / stride + 1)
    }
}

struct Geom {
    ic: usize,
    h: usize,
    w: usize,
    oc: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn geometry<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    stride: (usize, usize),
) -> Result<Geom> {
    let (ic, h, w) = match *input.shape() {
        [c, h, w] => (c, h, w),
        _ => {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 0, 0],
                got: input.shape().to_vec(),
                context: "conv2d input must be channels x height x width".into(),
            })
        }
    };
    let (oc, wc, kh, kw) = match *weights.shape() {
        [o, c, kh, kw] => (o, c, kh, kw),
        _ => {
            return Err(Error::ShapeMismatch {
                expected: vec![0, 0, 0, 0],
                got: weights.shape().to_vec(),
                context: "conv2d weights must be out x in x kh x kw".into(),
            })
        }
    };
    if wc != ic {
        return Err(Error::ShapeMismatch {
            expected: weights.shape().to_vec(),
            got: input.shape().to_vec(),
            context: format!("input has {ic} channels, weights expect {wc}"),
        });
    }
    if bias.shape() != [oc] {
        return Err(Error::ShapeMismatch {
            expected: vec![oc],
            got: bias.shape().to_vec(),
            context: "conv2d bias".into(),
        });
    }
    match (conv_extent(h, kh, stride.0), conv_extent(w, kw, stride.1)) {
        (Some(oh), Some(ow)) => Ok(Geom {
            ic,
            h,
            w,
            oc,
            kh,
            kw,
            oh,
            ow,
        }),
        _ => Err(Error::BadGeometry {
            layer: format!("conv {kh}x{kw} stride {}x{}", stride.0, stride.1),
            reason: format!("input {h}x{w} yields a non-positive output extent"),
        }),
    }
}

/// Lower the input into a (ic*kh*kw) x (oh*ow) column matrix.
fn im2col<S: Scalar>(input: &[S], g: &Geom, stride: (usize, usize), col: &mut [S]) {
    let (sh, sw) = stride;
    let n = g.oh * g.ow;
    debug_assert_eq!(col.len(), g.ic * g.kh * g.kw * n);
    let mut row = 0;
    for c in 0..g.ic {
        let plane = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst_row = &mut col[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let src_base = (oy * sh + ky) * g.w + kx;
                    let dst = &mut dst_row[oy * g.ow..(oy + 1) * g.ow];
                    if sw == 1 {
                        dst.copy_from_slice(&plane[src_base..src_base + g.ow]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = plane[src_base + ox * sw];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add a column-matrix gradient back onto the input grid.
fn col2im_add<S: Scalar>(col: &[S], g: &Geom, stride: (usize, usize), input_grad: &mut [S]) {
    let (sh, sw) = stride;
    let n = g.oh * g.ow;
    let mut row = 0;
    for c in 0..g.ic {
        let plane = &mut input_grad[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src_row = &col[row * n..(row + 1) * n];
                for oy in 0..g.oh {
                    let dst_base = (oy * sh + ky) * g.w + kx;
                    let src = &src_row[oy * g.ow..(oy + 1) * g.ow];
                    for (ox, s) in src.iter().enumerate() {
                        plane[dst_base + ox * sw] += *s;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward valid convolution. Output shape is
/// (out_channels, (h-kh)/sh+1, (w-kw)/sw+1).
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    stride: (usize, usize),
) -> Result<Tensor<S>> {
    let g = geometry(input, weights, bias, stride)?;
    let k = g.ic * g.kh * g.kw;
    let n = g.oh * g.ow;
    let mut col = vec![S::zero(); k * n];
    im2col(input.data(), &g, stride, &mut col);
    let mut out = vec![S::zero(); g.oc * n];
    S::gemm(g.oc, k, n, weights.data(), &col, &mut out);
    for (m, chunk) in out.chunks_mut(n).enumerate() {
        let b = bias.data()[m];
        for v in chunk.iter_mut() {
            *v += b;
        }
    }
    Tensor::new(vec![g.oc, g.oh, g.ow], out)
}

/// Backward pass. Accumulates (+=) the weight and bias gradients into the
/// provided buffers and optionally returns the input gradient.
pub fn conv2d_backward_into<S: Scalar>(
    upstream: &Tensor<S>,
    cached_input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    stride: (usize, usize),
    weight_grad: &mut [S],
    bias_grad: &mut [S],
    need_input_grad: bool,
) -> Result<Option<Tensor<S>>> {
    let g = geometry(cached_input, weights, bias, stride)?;
    if upstream.shape() != [g.oc, g.oh, g.ow] {
        return Err(Error::ShapeMismatch {
            expected: vec![g.oc, g.oh, g.ow],
            got: upstream.shape().to_vec(),
            context: "conv2d upstream gradient".into(),
        });
    }
    let k = g.ic * g.kh * g.kw;
    let n = g.oh * g.ow;
    let mut col = vec![S::zero(); k * n];
    im2col(cached_input.data(), &g, stride, &mut col);

    // dW (oc x k) += up (oc x n) * col^T (n x k)
    S::gemm_strided(
        g.oc,
        n,
        k,
        S::one(),
        upstream.data(),
        n as isize,
        1,
        &col,
        1,
        n as isize,
        S::one(),
        weight_grad,
    );
    // db += row sums of upstream
    for (m, chunk) in upstream.data().chunks(n).enumerate() {
        let mut acc = S::zero();
        for v in chunk {
            acc += *v;
        }
        bias_grad[m] += acc;
    }

    if !need_input_grad {
        return Ok(None);
    }
    // dcol (k x n) = W^T (k x oc) * up (oc x n)
    let mut dcol = vec![S::zero(); k * n];
    S::gemm_strided(
        k,
        g.oc,
        n,
        S::one(),
        weights.data(),
        1,
        k as isize,
        upstream.data(),
        n as isize,
        1,
        S::zero(),
        &mut dcol,
    );
    let mut input_grad = Tensor::zeros(vec![g.ic, g.h, g.w]);
    col2im_add(&dcol, &g, stride, input_grad.data_mut());
    Ok(Some(input_grad))
}

/// Backward pass returning freshly allocated gradients
/// (input_grad, weight_grad, bias_grad).
pub fn conv2d_backward<S: Scalar>(
    upstream: &Tensor<S>,
    cached_input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    stride: (usize, usize),
) -> Result<(Tensor<S>, Tensor<S>, Tensor<S>)> {
    let mut wg = vec![S::zero(); weights.numel()];
    let mut bg = vec![S::zero(); bias.numel()];
    let ig = conv2d_backward_into(
        upstream,
        cached_input,
        weights,
        bias,
        stride,
        &mut wg,
        &mut bg,
        true,
    )?
    .expect("input grad requested");
    Ok((
        ig,
        Tensor::new(weights.shape().to_vec(), wg)?,
        Tensor::new(bias.shape().to_vec(), bg)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn camera_first_layer_shape() {
        let input = Tensor::<f64>::zeros(vec![3, 63, 306]);
        let weights = Tensor::<f64>::zeros(vec![24, 3, 5, 5]);
        let bias = Tensor::<f64>::zeros(vec![24]);
        let out = conv2d_forward(&input, &weights, &bias, (2, 2)).unwrap();
        assert_eq!(out.shape(), &[24, 30, 151]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = Tensor::<f64>::zeros(vec![2, 6, 7]);
        let weights = random_tensor(vec![3, 2, 3, 3], &mut rng);
        let bias = Tensor::<f64>::zeros(vec![3]);
        let out = conv2d_forward(&input, &weights, &bias, (1, 1)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_naive_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random_tensor(vec![1, 4, 4], &mut rng);
        let weights = random_tensor(vec![1, 1, 3, 3], &mut rng);
        let bias = random_tensor(vec![1], &mut rng);
        let out = conv2d_forward(&input, &weights, &bias, (1, 1)).unwrap();
        let naive = oracles::naive_conv2d(&input, &weights, &bias, (1, 1));
        assert_eq!(out.shape(), naive.shape());
        for (a, b) in out.data().iter().zip(naive.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_naive_on_varied_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(c, h, w, m, kh, kw, sh, sw) in &[
            (3usize, 8usize, 9usize, 4usize, 3usize, 3usize, 2usize, 2usize),
            (2, 5, 11, 3, 3, 5, 1, 2),
            (1, 7, 7, 2, 1, 3, 1, 1),
            (4, 11, 10, 5, 3, 5, 1, 2),
        ] {
            let input = random_tensor(vec![c, h, w], &mut rng);
            let weights = random_tensor(vec![m, c, kh, kw], &mut rng);
            let bias = random_tensor(vec![m], &mut rng);
            let out = conv2d_forward(&input, &weights, &bias, (sh, sw)).unwrap();
            let naive = oracles::naive_conv2d(&input, &weights, &bias, (sh, sw));
            for (a, b) in out.data().iter().zip(naive.data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn channel_mismatch_rejected_with_shapes() {
        let input = Tensor::<f64>::zeros(vec![3, 6, 6]);
        let weights = Tensor::<f64>::zeros(vec![4, 2, 3, 3]);
        let bias = Tensor::<f64>::zeros(vec![4]);
        let err = conv2d_forward(&input, &weights, &bias, (1, 1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, 6, 6]") && msg.contains("[4, 2, 3, 3]"), "{msg}");
    }

    #[test]
    fn impossible_geometry_rejected() {
        let input = Tensor::<f64>::zeros(vec![1, 2, 2]);
        let weights = Tensor::<f64>::zeros(vec![1, 1, 3, 3]);
        let bias = Tensor::<f64>::zeros(vec![1]);
        assert!(conv2d_forward(&input, &weights, &bias, (1, 1)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = random_tensor(vec![2, 5, 5], &mut rng);
        let weights = random_tensor(vec![3, 2, 3, 3], &mut rng);
        let bias = random_tensor(vec![3], &mut rng);
        let upstream = Tensor::<f64>::zeros(vec![3, 3, 3]);
        let (ig, wg, bg) = conv2d_backward(&upstream, &input, &weights, &bias, (1, 1)).unwrap();
        assert!(ig.data().iter().all(|&v| v == 0.0));
        assert!(wg.data().iter().all(|&v| v == 0.0));
        assert!(bg.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_kernel_weight_grad_is_position_sum() {
        // For a 1x1 kernel, dW[m][c] = sum over positions of input[c] * upstream[m].
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random_tensor(vec![2, 4, 4], &mut rng);
        let weights = random_tensor(vec![3, 2, 1, 1], &mut rng);
        let bias = random_tensor(vec![3], &mut rng);
        let upstream = random_tensor(vec![3, 4, 4], &mut rng);
        let (_, wg, _) = conv2d_backward(&upstream, &input, &weights, &bias, (1, 1)).unwrap();
        for m in 0..3 {
            for c in 0..2 {
                let mut expect = 0.0;
                for p in 0..16 {
                    expect += input.data()[c * 16 + p] * upstream.data()[m * 16 + p];
                }
                let got = wg.data()[m * 2 + c];
                assert!((got - expect).abs() < 1e-9, "m={m} c={c}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random_tensor(vec![2, 5, 5], &mut rng);
        let weights = random_tensor(vec![3, 2, 3, 3], &mut rng);
        let bias = random_tensor(vec![3], &mut rng);
        // Scalar objective: weighted sum of outputs, so upstream = those weights.
        let probe = random_tensor(vec![3, 3, 3], &mut rng);
        let (ig, wg, bg) = conv2d_backward(&probe, &input, &weights, &bias, (1, 1)).unwrap();

        let f_input = |x: &Tensor<f64>| {
            let out = conv2d_forward(x, &weights, &bias, (1, 1)).unwrap();
            oracles::dot(out.data(), probe.data())
        };
        oracles::assert_grad_close(&f_input, &input, ig.data(), 1e-5, 1e-4);

        let f_weights = |w: &Tensor<f64>| {
            let out = conv2d_forward(&input, w, &bias, (1, 1)).unwrap();
            oracles::dot(out.data(), probe.data())
        };
        oracles::assert_grad_close(&f_weights, &weights, wg.data(), 1e-5, 1e-4);

        let f_bias = |b: &Tensor<f64>| {
            let out = conv2d_forward(&input, &weights, b, (1, 1)).unwrap();
            oracles::dot(out.data(), probe.data())
        };
        oracles::assert_grad_close(&f_bias, &bias, bg.data(), 1e-5, 1e-4);
    }

    #[test]
    fn strided_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_tensor(vec![2, 7, 9], &mut rng);
        let weights = random_tensor(vec![3, 2, 3, 5], &mut rng);
        let bias = random_tensor(vec![3], &mut rng);
        let probe = random_tensor(vec![3, 3, 3], &mut rng);
        let (ig, wg, bg) = conv2d_backward(&probe, &input, &weights, &bias, (2, 2)).unwrap();
        let f = |x: &Tensor<f64>| {
            let out = conv2d_forward(x, &weights, &bias, (2, 2)).unwrap();
            oracles::dot(out.data(), probe.data())
        };
        oracles::assert_grad_close(&f, &input, ig.data(), 1e-5, 1e-4);
        let fw = |w: &Tensor<f64>| {
            let out = conv2d_forward(&input, w, &bias, (2, 2)).unwrap();
            oracles::dot(out.data(), probe.data())
        };
        oracles::assert_grad_close(&fw, &weights, wg.data(), 1e-5, 1e-4);
        let fb = |b: &Tensor<f64>| {
            let out = conv2d_forward(&input, &weights, b, (2, 2)).unwrap();
            oracles::dot(out.data(), probe.data())
        };
        oracles::assert_grad_close(&fb, &bias, bg.data(), 1e-5, 1e-4);
    }
}
