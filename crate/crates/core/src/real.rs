//! Scalar abstraction so the model runs in `f32` for training and `f64`
//! for gradient checking.

use core::fmt::Debug;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a @ b + beta * c` with explicit row/column strides.
    ///
    /// # Safety contract
    /// Callers go through the safe wrappers below, which check extents.
    #[allow(clippy::too_many_arguments)]
    fn gemm_raw(
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
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(v: f64) -> Self;
    fn to_f64_lossy(self) -> f64;
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
}

macro_rules! impl_real {
    ($t:ty, $gemm:ident) => {
        impl Real for $t {
            fn gemm_raw(
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
                rsc: isize,
                csc: isize,
            ) {
                assert!(a.len() >= extent(m, k, rsa, csa), "gemm: lhs too short");
                assert!(b.len() >= extent(k, n, rsb, csb), "gemm: rhs too short");
                assert!(c.len() >= extent(m, n, rsc, csc), "gemm: out too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: extents checked above; strides are non-negative.
                unsafe {
                    matrixmultiply::$gemm(
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
                        rsc,
                        csc,
                    );
                }
            }

            #[inline]
            fn from_f64_lossy(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, sgemm);
impl_real!(f64, dgemm);

/// `c (m×n) = a (m×k) · b (k×n)`, overwriting or accumulating into `c`.
pub fn matmul<R: Real>(a: &[R], b: &[R], c: &mut [R], m: usize, k: usize, n: usize, acc: bool) {
    let beta = if acc { R::one() } else { R::zero() };
    R::gemm_raw(m, k, n, R::one(), a, k as isize, 1, b, n as isize, 1, beta, c, n as isize, 1);
}

/// `c (k×n) += aᵀ · b` where `a` is m×k and `b` is m×n.
pub fn matmul_at_b<R: Real>(a: &[R], b: &[R], c: &mut [R], m: usize, k: usize, n: usize) {
    R::gemm_raw(k, m, n, R::one(), a, 1, k as isize, b, n as isize, 1, R::one(), c, n as isize, 1);
}

/// `c (m×k) = a · bᵀ` where `a` is m×n and `b` is k×n.
pub fn matmul_a_bt<R: Real>(a: &[R], b: &[R], c: &mut [R], m: usize, n: usize, k: usize, acc: bool) {
    let beta = if acc { R::one() } else { R::zero() };
    R::gemm_raw(m, n, k, R::one(), a, n as isize, 1, b, 1, n as isize, beta, c, k as isize, 1);
}

#[inline]
pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::zero(), |s, (&x, &y)| s + x * y)
}

/// Numerically stable softmax in place.
pub fn softmax_in_place<R: Real>(row: &mut [R]) {
    let max = row.iter().copied().fold(R::neg_infinity(), R::max);
    let mut sum = R::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `log(sum(exp(row)))`, stable.
pub fn log_sum_exp<R: Real>(row: &[R]) -> R {
    let max = row.iter().copied().fold(R::neg_infinity(), R::max);
    let sum = row.iter().fold(R::zero(), |s, &v| s + (v - max).exp());
    max + sum.ln()
}
