//! Parameter-free layers: ReLU, sigmoid, flatten, concatenation, and the
//! per-channel gate used by the gated fusion model.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Backward through ReLU given the cached forward *output* (its sign pattern
/// matches the input's almost everywhere, and both conventions agree at 0).
pub fn relu_backward<S: Scalar>(upstream: &Tensor<S>, cached_output: &Tensor<S>) -> Tensor<S> {
    let data = upstream
        .data()
        .iter()
        .zip(cached_output.data())
        .map(|(&u, &y)| if y > S::zero() { u } else { S::zero() })
        .collect();
    Tensor::new(upstream.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.map(|v| S::one() / (S::one() + (-v).exp()))
}

/// Backward through sigmoid given the cached forward output.
pub fn sigmoid_backward<S: Scalar>(upstream: &Tensor<S>, cached_output: &Tensor<S>) -> Tensor<S> {
    let data = upstream
        .data()
        .iter()
        .zip(cached_output.data())
        .map(|(&u, &y)| u * y * (S::one() - y))
        .collect();
    Tensor::new(upstream.shape().to_vec(), data).expect("same shape")
}

pub fn flatten<S: Scalar>(input: &Tensor<S>) -> Tensor<S> {
    input.reshaped(vec![input.numel()]).expect("numel preserved")
}

/// Concatenate vectors end to end.
pub fn concat<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    let mut data = Vec::new();
    for p in parts {
        if p.shape().len() != 1 {
            return Err(Error::ShapeMismatch {
                expected: vec![0],
                got: p.shape().to_vec(),
                context: "concat expects flattened vectors".into(),
            });
        }
        data.extend_from_slice(p.data());
    }
    let n = data.len();
    Tensor::new(vec![n], data)
}

/// Split an upstream gradient back into the concatenated segments.
pub fn concat_backward<S: Scalar>(upstream: &Tensor<S>, lens: &[usize]) -> Result<Vec<Tensor<S>>> {
    let total: usize = lens.iter().sum();
    if upstream.shape() != [total] {
        return Err(Error::ShapeMismatch {
            expected: vec![total],
            got: upstream.shape().to_vec(),
            context: "concat upstream gradient".into(),
        });
    }
    let mut out = Vec::with_capacity(lens.len());
    let mut off = 0;
    for &len in lens {
        out.push(Tensor::new(vec![len], upstream.data()[off..off + len].to_vec())?);
        off += len;
    }
    Ok(out)
}

/// Multiply every spatial position of channel c by gates[offset + c].
pub fn apply_channel_gates<S: Scalar>(
    gates: &Tensor<S>,
    offset: usize,
    features: &Tensor<S>,
) -> Result<Tensor<S>> {
    let [c, h, w] = *features.shape() else {
        return Err(Error::ShapeMismatch {
            expected: vec![0, 0, 0],
            got: features.shape().to_vec(),
            context: "channel gate features".into(),
        });
    };
    if gates.numel() < offset + c {
        return Err(Error::ShapeMismatch {
            expected: vec![offset + c],
            got: gates.shape().to_vec(),
            context: "gate vector too short".into(),
        });
    }
    let mut out = features.clone();
    let plane = h * w;
    for ch in 0..c {
        let g = gates.data()[offset + ch];
        for v in &mut out.data_mut()[ch * plane..(ch + 1) * plane] {
            *v = *v * g;
        }
    }
    Ok(out)
}

/// Backward of the channel gate: returns the feature gradient and adds the
/// per-channel gate gradient into `gate_grad[offset..offset+c]`.
pub fn channel_gates_backward<S: Scalar>(
    upstream: &Tensor<S>,
    gates: &Tensor<S>,
    offset: usize,
    cached_features: &Tensor<S>,
    gate_grad: &mut [S],
) -> Result<Tensor<S>> {
    let [c, h, w] = *cached_features.shape() else {
        return Err(Error::ShapeMismatch {
            expected: vec![0, 0, 0],
            got: cached_features.shape().to_vec(),
            context: "channel gate features".into(),
        });
    };
    if upstream.shape() != [c, h, w] {
        return Err(Error::ShapeMismatch {
            expected: vec![c, h, w],
            got: upstream.shape().to_vec(),
            context: "channel gate upstream".into(),
        });
    }
    let plane = h * w;
    let mut dfeat = upstream.clone();
    for ch in 0..c {
        let g = gates.data()[offset + ch];
        let up = &upstream.data()[ch * plane..(ch + 1) * plane];
        let feat = &cached_features.data()[ch * plane..(ch + 1) * plane];
        let mut acc = S::zero();
        for (u, f) in up.iter().zip(feat) {
            acc += *u * *f;
        }
        gate_grad[offset + ch] += acc;
        for v in &mut dfeat.data_mut()[ch * plane..(ch + 1) * plane] {
            *v = *v * g;
        }
    }
    Ok(dfeat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_hand_values() {
        let x = Tensor::new(vec![2], vec![-1.5, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        assert_eq!(sigmoid(&x).data(), &[0.5]);
    }

    #[test]
    fn concat_feature_lengths() {
        let a = Tensor::<f32>::zeros(vec![1984]);
        let b = Tensor::<f32>::zeros(vec![2048]);
        let c = concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[4032]);
    }

    #[test]
    fn concat_backward_splits() {
        let up = Tensor::new(vec![5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let parts = concat_backward(&up, &[2, 3]).unwrap();
        assert_eq!(parts[0].data(), &[1.0, 2.0]);
        assert_eq!(parts[1].data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn relu_sigmoid_backward_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 16;
        let x = Tensor::new(
            vec![n],
            (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let probe = Tensor::new(
            vec![n],
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        )
        .unwrap();

        let y = relu(&x);
        let g = relu_backward(&probe, &y);
        let f = |x: &Tensor<f64>| oracles::dot(relu(x).data(), probe.data());
        oracles::assert_grad_close(&f, &x, g.data(), 1e-5, 1e-4);

        let y = sigmoid(&x);
        let g = sigmoid_backward(&probe, &y);
        let f = |x: &Tensor<f64>| oracles::dot(sigmoid(x).data(), probe.data());
        oracles::assert_grad_close(&f, &x, g.data(), 1e-5, 1e-4);
    }

    #[test]
    fn gates_scale_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let feats = Tensor::new(
            vec![4, 2, 3],
            (0..24).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let gates = Tensor::new(
            vec![8],
            (0..8).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let out = apply_channel_gates(&gates, 4, &feats).unwrap();
        for c in 0..4 {
            for p in 0..6 {
                let got = out.data()[c * 6 + p];
                let expect = gates.data()[4 + c] * feats.data()[c * 6 + p];
                assert_eq!(got, expect);
            }
        }
    }

    #[test]
    fn one_hot_gate_zeroes_other_channels() {
        let feats = Tensor::new(vec![4, 1, 2], vec![1.0; 8]).unwrap();
        let mut gv = vec![0.0; 4];
        gv[3] = 1.0;
        let gates = Tensor::new(vec![4], gv).unwrap();
        let out = apply_channel_gates(&gates, 0, &feats).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn gate_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let feats = Tensor::new(
            vec![3, 2, 2],
            (0..12).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let gates = Tensor::new(
            vec![3],
            (0..3).map(|_| rng.random_range(0.1..0.9)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let probe = Tensor::new(
            vec![3, 2, 2],
            (0..12).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let mut gate_grad = vec![0.0; 3];
        let dfeat =
            channel_gates_backward(&probe, &gates, 0, &feats, &mut gate_grad).unwrap();
        let ff = |f: &Tensor<f64>| {
            oracles::dot(apply_channel_gates(&gates, 0, f).unwrap().data(), probe.data())
        };
        oracles::assert_grad_close(&ff, &feats, dfeat.data(), 1e-5, 1e-4);
        let fg = |g: &Tensor<f64>| {
            oracles::dot(apply_channel_gates(g, 0, &feats).unwrap().data(), probe.data())
        };
        oracles::assert_grad_close(&fg, &gates, &gate_grad, 1e-5, 1e-4);
    }
}
