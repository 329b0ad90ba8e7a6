use core::fmt::{Debug, Display};

use num_traits::Float;

/// Floating-point element type of a [`Tensor`](super::Tensor).
///
/// Implemented for `f32` (training) and `f64` (gradient verification).
pub trait Real: Float + Default + Debug + Display + Send + Sync + 'static {
    /// `c = alpha * a * b + beta * c` over strided row/column views.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`. Strides are in elements
    /// and offsets index into the given slices.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: (&[Self], usize, isize, isize),
        b: (&[Self], usize, isize, isize),
        beta: Self,
        c: (&mut [Self], usize, isize, isize),
    );

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;
}

#[inline]
fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: (&[Self], usize, isize, isize),
                b: (&[Self], usize, isize, isize),
                beta: Self,
                c: (&mut [Self], usize, isize, isize),
            ) {
                assert!(a.1 + span(m, k, a.2, a.3) <= a.0.len(), "gemm: lhs out of bounds");
                assert!(b.1 + span(k, n, b.2, b.3) <= b.0.len(), "gemm: rhs out of bounds");
                assert!(
                    c.1 + span(m, n, c.2, c.3) <= c.0.len(),
                    "gemm: output out of bounds"
                );
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: all three views were bounds-checked above and the output
                // slice is uniquely borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.0.as_ptr().add(a.1),
                        a.2,
                        a.3,
                        b.0.as_ptr().add(b.1),
                        b.2,
                        b.3,
                        beta,
                        c.0.as_mut_ptr().add(c.1),
                        c.2,
                        c.3,
                    );
                }
            }

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);
