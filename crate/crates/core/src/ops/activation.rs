use super::{CacheKind, LayerCache};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Elementwise `max(0, x)`.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, LayerCache<T>) {
    let active: Vec<bool> = input.data().iter().map(|&v| v > T::zero()).collect();
    let out = input.map(|v| if v > T::zero() { v } else { T::zero() });
    let cache = LayerCache::new(CacheKind::Relu {
        active,
        dims: input.dims(),
    });
    (out, cache)
}

/// Passes the gradient where the input was strictly positive. The
/// subgradient at exactly zero is 0.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, cache: &LayerCache<T>) -> Result<Tensor<T>> {
    const OP: &str = "relu_backward";
    let CacheKind::Relu { active, dims } = &cache.kind else {
        return Err(Error::usage(
            OP,
            format!("expected a relu cache, got {}", cache.kind_name()),
        ));
    };
    dims.expect_eq(&grad_out.dims(), OP)?;
    let data = grad_out
        .data()
        .iter()
        .zip(active)
        .map(|(&g, &on)| if on { g } else { T::zero() })
        .collect();
    Tensor::from_vec(*dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap();
        let (y, cache) = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::filled([1, 1, 1, 3], 1.0), &cache).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn finite_difference_away_from_kink() {
        let xs = [-0.7, -0.1, 0.3, 1.9];
        let eps = 1e-6;
        for &x in &xs {
            let t = Tensor::from_vec([1, 1, 1, 1], vec![x]).unwrap();
            let (_, cache) = relu(&t);
            let analytic = relu_backward(&Tensor::filled([1, 1, 1, 1], 1.0), &cache)
                .unwrap()
                .data()[0];
            let f = |v: f64| v.max(0.0);
            let numeric = (f(x + eps) - f(x - eps)) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-6, "x={x}: {analytic} vs {numeric}");
        }
    }
}
