use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Element type of tensors and networks.
///
/// Implemented for `f32` (training precision, backed by an optimized GEMM)
/// and `f64` (reference precision used by oracles and gradient checks).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Accumulating matrix product `c += a · b`, where `a` is `m×k`, `b` is
    /// `k×n` and `c` is `m×n`. Each operand is addressed through its own
    /// row and column strides, so transposed views cost nothing.
    #[allow(clippy::too_many_arguments)]
    fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        c_strides: (usize, usize),
    );

    /// Lossy conversion from `f64`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    /// Widening conversion to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn required_len(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

impl Scalar for f32 {
    fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: &[f32],
        a_strides: (usize, usize),
        b: &[f32],
        b_strides: (usize, usize),
        c: &mut [f32],
        c_strides: (usize, usize),
    ) {
        if m == 0 || n == 0 || k == 0 {
            return;
        }
        assert!(a.len() >= required_len(m, k, a_strides));
        assert!(b.len() >= required_len(k, n, b_strides));
        assert!(c.len() >= required_len(m, n, c_strides));
        // SAFETY: the asserts above keep every addressed element inside the
        // three slices, and `c` is exclusively borrowed.
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                1.0,
                a.as_ptr(),
                a_strides.0 as isize,
                a_strides.1 as isize,
                b.as_ptr(),
                b_strides.0 as isize,
                b_strides.1 as isize,
                1.0,
                c.as_mut_ptr(),
                c_strides.0 as isize,
                c_strides.1 as isize,
            );
        }
    }
}

impl Scalar for f64 {
    /// Plain triple loop. Every output element accumulates its `k` products
    /// in ascending order, so results are bit-reproducible and unaffected by
    /// interleaved zero terms.
    fn gemm_acc(
        m: usize,
        k: usize,
        n: usize,
        a: &[f64],
        (rsa, csa): (usize, usize),
        b: &[f64],
        (rsb, csb): (usize, usize),
        c: &mut [f64],
        (rsc, csc): (usize, usize),
    ) {
        if m == 0 || n == 0 || k == 0 {
            return;
        }
        assert!(a.len() >= required_len(m, k, (rsa, csa)));
        assert!(b.len() >= required_len(k, n, (rsb, csb)));
        assert!(c.len() >= required_len(m, n, (rsc, csc)));
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * rsa + p * csa];
                let b_row = p * rsb;
                if csb == 1 && csc == 1 {
                    let c_row = &mut c[i * rsc..i * rsc + n];
                    let b_row = &b[b_row..b_row + n];
                    for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                        *cv += aip * bv;
                    }
                } else {
                    for j in 0..n {
                        c[i * rsc + j * csc] += aip * b[b_row + j * csb];
                    }
                }
            }
        }
    }
}
