use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Element type of a [`Tensor`](super::Tensor).
///
/// `f64` is the verification precision: overflowing elementwise ops are errors.
/// `f32` is the training precision: they saturate and log a warning.
pub trait Scalar:
    Float + Debug + Display + Default + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    const NAME: &'static str;
    /// Non-finite results are hard errors at this precision.
    const STRICT: bool;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c = a·b (+ c if accumulate)` for row-major operands given by strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        c: &mut [Self],
        accumulate: bool,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $strict:literal, $gemm:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;
            const STRICT: bool = $strict;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                c: &mut [Self],
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                assert!(c.len() >= m * n, "gemm output too small");
                if k == 0 {
                    if !accumulate {
                        c[..m * n].iter_mut().for_each(|x| *x = 0.0);
                    }
                    return;
                }
                let last = |s: (isize, isize), r: usize, q: usize| (r as isize - 1) * s.0 + (q as isize - 1) * s.1;
                assert!((last(a_strides, m, k) as usize) < a.len(), "gemm lhs out of bounds");
                assert!((last(b_strides, k, n) as usize) < b.len(), "gemm rhs out of bounds");
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: bounds of all three operands are checked above; `c` is
                // exclusively borrowed and cannot alias `a` or `b`.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
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

impl_scalar!(f32, "f32", false, matrixmultiply::sgemm);
impl_scalar!(f64, "f64", true, matrixmultiply::dgemm);
