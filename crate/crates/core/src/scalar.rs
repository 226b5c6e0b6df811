//! Floating-point abstraction: training runs in f32, gradient checks in f64.

use num_traits::Float;

/// Element type for tensors and network parameters.
pub trait Scalar:
    Float + num_traits::NumAssign + Send + Sync + Default + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn to_f32(self) -> f32;

    /// C = alpha * A(m x k) * B(k x n) + beta * C, all row-major.
    /// Strides allow implicit transposes.
    #[allow(clippy::too_many_arguments)]
    fn gemm_strided(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
    );

    /// Plain row-major C = A * B (no transposes, beta = 0).
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], b: &[Self], c: &mut [Self]) {
        Self::gemm_strided(
            m,
            k,
            n,
            Self::one(),
            a,
            k as isize,
            1,
            b,
            n as isize,
            1,
            Self::zero(),
            c,
        );
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn from_f32(v: f32) -> Self {
                v as $t
            }
            #[inline]
            fn to_f32(self) -> f32 {
                self as f32
            }

            fn gemm_strided(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(c.len() >= m * n, "gemm output buffer too small");
                // Bounds of A and B are implied by the strides; debug-check the corners.
                debug_assert!(
                    m == 0
                        || k == 0
                        || ((m - 1) as isize * rsa + (k - 1) as isize * csa) < a.len() as isize
                );
                debug_assert!(
                    k == 0
                        || n == 0
                        || ((k - 1) as isize * rsb + (n - 1) as isize * csb) < b.len() as isize
                );
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        // 2x3 * 3x2
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 3, 2, &a, &b, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gemm_transposed_b() {
        // A(1x3) * B^T where B stored as 2x3 row-major; use swapped strides.
        let a = [1.0f32, 2.0, 3.0];
        let b = [1.0f32, 0.0, 1.0, 0.0, 1.0, 1.0]; // rows: [1,0,1], [0,1,1]
        let mut c = [0.0f32; 2];
        f32::gemm_strided(1, 3, 2, 1.0, &a, 3, 1, &b, 1, 3, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0]);
    }
}
