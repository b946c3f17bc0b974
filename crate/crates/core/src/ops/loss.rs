use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Batch reconstruction loss `1/(2I) · Σᵢ ‖predᵢ − targetᵢ‖²_F` over the `I`
/// batch items, with its gradient `(pred − target)/I`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    const OP: &str = "mse_loss";
    pred.dims().expect_eq(&target.dims(), OP)?;
    if target.grad().is_some() {
        return Err(Error::usage(OP, "target must not carry a gradient"));
    }
    let items = T::of(pred.dims().n.max(1) as f64);
    let diff = pred.sub(target)?;
    let sq = diff.data().iter().fold(T::zero(), |acc, &d| acc + d * d);
    let loss = sq / (items + items);
    let grad = diff.map(|d| d / items);
    Ok((loss, grad))
}
