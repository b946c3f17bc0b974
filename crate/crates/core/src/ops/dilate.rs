use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Inflates `[O, I, K, K']` kernels to their dilated footprint
/// `[O, I, d(K−1)+1, d(K'−1)+1]`, placing tap `(i, j)` at `(d·i, d·j)` and
/// zeros elsewhere.
pub fn dilate_kernel<T: Scalar>(weights: &Tensor<T>, dilation: usize) -> Result<Tensor<T>> {
    if dilation == 0 {
        return Err(Error::geometry(
            "dilate_kernel",
            "dilation must be at least 1",
        ));
    }
    let d = weights.dims();
    if d.h == 0 || d.w == 0 {
        return Ok(weights.clone());
    }
    let out_dims = Dims::new(d.n, d.c, dilation * (d.h - 1) + 1, dilation * (d.w - 1) + 1);
    let mut out = Tensor::zeros(out_dims);
    for o in 0..d.n {
        for i in 0..d.c {
            for y in 0..d.h {
                for x in 0..d.w {
                    out.set(o, i, dilation * y, dilation * x, weights.at(o, i, y, x));
                }
            }
        }
    }
    Ok(out)
}
