use super::{CacheKind, LayerCache};
use crate::error::{Axis, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Concatenates along the channel axis, in input order.
pub fn concat_channels<T: Scalar>(inputs: &[&Tensor<T>]) -> Result<(Tensor<T>, LayerCache<T>)> {
    const OP: &str = "concat_channels";
    let first = inputs
        .first()
        .ok_or_else(|| Error::usage(OP, "at least one input is required"))?
        .dims();
    for t in &inputs[1..] {
        let d = t.dims();
        for (axis, e, f) in [
            (Axis::Batch, first.n, d.n),
            (Axis::Height, first.h, d.h),
            (Axis::Width, first.w, d.w),
        ] {
            if e != f {
                return Err(Error::dim(OP, axis, e, f));
            }
        }
    }
    let channels: Vec<usize> = inputs.iter().map(|t| t.dims().c).collect();
    let out_dims = Dims::new(first.n, channels.iter().sum(), first.h, first.w);
    let mut data = Vec::with_capacity(out_dims.len());
    for n in 0..first.n {
        for t in inputs {
            data.extend_from_slice(t.item(n));
        }
    }
    let out = Tensor::from_vec(out_dims, data)?;
    let cache = LayerCache::new(CacheKind::Concat {
        channels,
        output_dims: out_dims,
    });
    Ok((out, cache))
}

/// Splits a gradient along the channel boundaries recorded by the forward call.
pub fn split_channels_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &LayerCache<T>,
) -> Result<Vec<Tensor<T>>> {
    const OP: &str = "split_channels_backward";
    let CacheKind::Concat {
        channels,
        output_dims,
    } = &cache.kind
    else {
        return Err(Error::usage(
            OP,
            format!("expected a concat cache, got {}", cache.kind_name()),
        ));
    };
    output_dims.expect_eq(&grad_out.dims(), OP)?;
    let d = *output_dims;
    let plane = d.plane_len();
    let mut parts: Vec<Vec<T>> = channels
        .iter()
        .map(|c| Vec::with_capacity(d.n * c * plane))
        .collect();
    for n in 0..d.n {
        let item = grad_out.item(n);
        let mut start = 0;
        for (part, &c) in parts.iter_mut().zip(channels) {
            part.extend_from_slice(&item[start * plane..(start + c) * plane]);
            start += c;
        }
    }
    parts
        .into_iter()
        .zip(channels)
        .map(|(data, &c)| Tensor::from_vec(Dims::new(d.n, c, d.h, d.w), data))
        .collect()
}
