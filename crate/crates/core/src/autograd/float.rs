use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Element type of tensors. Training runs on `f32`; gradient checks rebuild
/// the same graph on `f64`.
pub trait Float:
    num_traits::Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    fn of_usize(v: usize) -> Self {
        Self::from_f64(v as f64)
    }

    /// `c ← a·b + beta·c` for an `m×k` matrix `a`, a `k×n` matrix `b` and a
    /// row-major `m×n` matrix `c`. `a` and `b` are addressed through
    /// `(row, column)` strides, so transposed operands need no copy.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], a_strides: (usize, usize), b: &[Self], b_strides: (usize, usize), beta: Self, c: &mut [Self]);
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize)) {
    assert!(rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < len, "gemm operand out of bounds");
}

macro_rules! gemm_impl {
    ($t:ty, $f:path) => {
        #[allow(clippy::too_many_arguments)]
        fn gemm(m: usize, k: usize, n: usize, a: &[$t], sa: (usize, usize), b: &[$t], sb: (usize, usize), beta: $t, c: &mut [$t]) {
            check_extent(a.len(), m, k, sa);
            check_extent(b.len(), k, n, sb);
            check_extent(c.len(), m, n, (n, 1));
            // SAFETY: every operand's addressed extent was checked against its slice.
            unsafe {
                $f(
                    m,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    sa.0 as isize,
                    sa.1 as isize,
                    b.as_ptr(),
                    sb.0 as isize,
                    sb.1 as isize,
                    beta,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                )
            }
        }
    };
}

impl Float for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    gemm_impl!(f32, matrixmultiply::sgemm);
}

impl Float for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    gemm_impl!(f64, matrixmultiply::dgemm);
}
