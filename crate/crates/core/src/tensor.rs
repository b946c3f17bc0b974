use std::fmt;

use crate::error::{Axis, Error, Result};
use crate::scalar::Scalar;

/// Shape of a rank-4 tensor in `(batch, channels, height, width)` order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements in one batch item.
    pub const fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub const fn plane_len(&self) -> usize {
        self.h * self.w
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// First axis where `self` and `other` differ.
    pub fn mismatch(&self, other: &Dims) -> Option<(Axis, usize, usize)> {
        [
            (Axis::Batch, self.n, other.n),
            (Axis::Channels, self.c, other.c),
            (Axis::Height, self.h, other.h),
            (Axis::Width, self.w, other.w),
        ]
        .into_iter()
        .find(|(_, a, b)| a != b)
    }

    /// Errors with the first differing axis, reading `self` as the expectation.
    pub fn expect_eq(&self, found: &Dims, op: &'static str) -> Result<()> {
        match self.mismatch(found) {
            Some((axis, e, f)) => Err(Error::dim(op, axis, e, f)),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}×{}×{}×{}", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Dims {
    fn from([n, c, h, w]: [usize; 4]) -> Self {
        Dims { n, c, h, w }
    }
}

/// Dense rank-4 array stored row-major in `(n, c, h, w)` order, with an
/// optional gradient buffer of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Dims,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: impl Into<Dims>) -> Self {
        let dims = dims.into();
        Tensor {
            dims,
            data: vec![T::zero(); dims.len()],
            grad: None,
        }
    }

    pub fn filled(dims: impl Into<Dims>, value: T) -> Self {
        let dims = dims.into();
        Tensor {
            dims,
            data: vec![value; dims.len()],
            grad: None,
        }
    }

    pub fn from_vec(dims: impl Into<Dims>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if data.len() != dims.len() {
            return Err(Error::dim(
                "Tensor::from_vec",
                Axis::Length,
                dims.len(),
                data.len(),
            ));
        }
        Ok(Tensor {
            dims,
            data,
            grad: None,
        })
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` at every index.
    pub fn from_fn(
        dims: impl Into<Dims>,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let dims = dims.into();
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for h in 0..dims.h {
                    for w in 0..dims.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor {
            dims,
            data,
            grad: None,
        }
    }

    /// Single-image tensor `1×1×h×w` from a row-major plane.
    pub fn from_plane(h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        Self::from_vec(Dims::new(1, 1, h, w), data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Attaches a gradient buffer; it must have the tensor's element count.
    pub fn set_grad(&mut self, grad: Option<Vec<T>>) -> Result<()> {
        if let Some(g) = &grad {
            if g.len() != self.data.len() {
                return Err(Error::dim(
                    "Tensor::set_grad",
                    Axis::Length,
                    self.data.len(),
                    g.len(),
                ));
            }
        }
        self.grad = grad;
        Ok(())
    }

    /// Zeroed gradient buffer, created on first use.
    pub fn grad_or_zeros(&mut self) -> &mut [T] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); len])
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let d = &self.dims;
        debug_assert!(n < d.n && c < d.c && h < d.h && w < d.w);
        ((n * d.c + c) * d.h + h) * d.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.offset(n, c, h, w);
        self.data[i] = v;
    }

    /// Contiguous data of batch item `n`.
    pub fn item(&self, n: usize) -> &[T] {
        let len = self.dims.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.dims.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Copy of batch item `n` as a batch-of-one tensor.
    pub fn batch_item(&self, n: usize) -> Tensor<T> {
        let d = self.dims;
        Tensor {
            dims: Dims::new(1, d.c, d.h, d.w),
            data: self.item(n).to_vec(),
            grad: None,
        }
    }

    /// Stacks same-shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::usage("Tensor::stack", "no tensors to stack"))?;
        let item_dims = Dims::new(1, first.dims.c, first.dims.h, first.dims.w);
        let mut data = Vec::with_capacity(items.len() * item_dims.len() * first.dims.n);
        let mut n = 0;
        for t in items {
            let d = t.dims;
            Dims::new(d.n, item_dims.c, item_dims.h, item_dims.w).expect_eq(&d, "Tensor::stack")?;
            data.extend_from_slice(&t.data);
            n += d.n;
        }
        Tensor::from_vec(Dims::new(n, item_dims.c, item_dims.h, item_dims.w), data)
    }

    pub fn reshape(self, dims: impl Into<Dims>) -> Result<Tensor<T>> {
        let dims = dims.into();
        if dims.len() != self.data.len() {
            return Err(Error::dim(
                "Tensor::reshape",
                Axis::Length,
                self.data.len(),
                dims.len(),
            ));
        }
        Ok(Tensor {
            dims,
            data: self.data,
            grad: None,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn zip_map(
        &self,
        other: &Tensor<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        self.dims.expect_eq(&other.dims, op)?;
        Ok(Tensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            grad: None,
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(other, "Tensor::add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(other, "Tensor::sub", |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Tensor<T> {
        self.map(|v| v * s)
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        self.dims.expect_eq(&other.dims, "Tensor::dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<T> {
        self.dims.expect_eq(&other.dims, "Tensor::max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|&v| U::of(v.as_f64())).collect()),
        }
    }
}
