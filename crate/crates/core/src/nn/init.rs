//! Seeded weight initialization: uniform in +-sqrt(6 / (fan_in + fan_out)),
//! biases zero. Values are drawn in f64 so f32 and f64 builds of the same
//! seed agree up to rounding.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn glorot_uniform<S: Scalar>(
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| S::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data).expect("shape/data sized together")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn deterministic_and_bounded() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let t1: Tensor<f64> = glorot_uniform(vec![4, 3], 3, 4, &mut a);
        let t2: Tensor<f64> = glorot_uniform(vec![4, 3], 3, 4, &mut b);
        assert_eq!(t1.data(), t2.data());
        let bound = (6.0 / 7.0f64).sqrt();
        assert!(t1.data().iter().all(|v| v.abs() < bound));
    }
}
