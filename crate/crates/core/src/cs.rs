//! Classical block compressed-sensing reference: dense measurement
//! matrices, block measurement, the kernel-to-matrix map, sparse synthesis
//! and brute-force restricted isometry constants for tiny matrices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Axis, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Dense row-major `rows × cols` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CSMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> CSMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "CSMatrix::new",
                Axis::Length,
                rows * cols,
                data.len(),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "CSMatrix entries".into(),
                index: i,
            });
        }
        Ok(CSMatrix { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        CSMatrix {
            rows: n,
            cols: n,
            data,
        }
    }

    /// i.i.d. standard normal entries scaled by `1/√rows`, so columns have
    /// unit expected norm.
    pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(z * scale)
            })
            .collect();
        CSMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self.at(r, c)).collect()
    }

    /// Matrix with columns reordered so that column `j` is `self`'s column `perm[j]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.cols {
            return Err(Error::dim(
                "CSMatrix::permute_columns",
                Axis::Length,
                self.cols,
                perm.len(),
            ));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            data.extend(perm.iter().map(|&c| self.at(r, c)));
        }
        Ok(CSMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// `self · x`, accumulated in ascending column order.
    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::dim(
                "CSMatrix::apply",
                Axis::Length,
                self.cols,
                x.len(),
            ));
        }
        Ok(self
            .data
            .chunks_exact(self.cols)
            .map(|row| {
                row.iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }
}

/// Measures every non-overlapping `b×b` block of a single-channel image:
/// blocks are visited row-major, each is flattened row-major and multiplied
/// by `phi`.
pub fn block_measure<T: Scalar>(
    image: &Tensor<T>,
    phi: &CSMatrix<T>,
    b: usize,
) -> Result<Vec<Vec<T>>> {
    const OP: &str = "block_measure";
    let d = image.dims();
    if d.n != 1 {
        return Err(Error::dim(OP, Axis::Batch, 1, d.n));
    }
    if d.c != 1 {
        return Err(Error::dim(OP, Axis::Channels, 1, d.c));
    }
    if b == 0 || !d.h.is_multiple_of(b) || !d.w.is_multiple_of(b) {
        return Err(Error::geometry(
            OP,
            format!(
                "image {}×{} is not a multiple of the block size {b}",
                d.h, d.w
            ),
        ));
    }
    if phi.cols != b * b {
        return Err(Error::dim(OP, Axis::Length, b * b, phi.cols));
    }
    let mut out = Vec::with_capacity((d.h / b) * (d.w / b));
    let mut block = Vec::with_capacity(b * b);
    for bi in 0..d.h / b {
        for bj in 0..d.w / b {
            block.clear();
            for y in 0..b {
                for x in 0..b {
                    block.push(image.at(0, 0, bi * b + y, bj * b + x));
                }
            }
            out.push(phi.apply(&block)?);
        }
    }
    Ok(out)
}

/// Measurement matrix whose row `k` is kernel `k` flattened row-major.
pub fn kernels_to_matrix<T: Scalar>(kernels: &Tensor<T>) -> Result<CSMatrix<T>> {
    let d = kernels.dims();
    if d.c != 1 {
        return Err(Error::dim("kernels_to_matrix", Axis::Channels, 1, d.c));
    }
    if d.h != d.w {
        return Err(Error::geometry(
            "kernels_to_matrix",
            format!("kernels are {}×{}, not square", d.h, d.w),
        ));
    }
    CSMatrix::new(d.n, d.h * d.w, kernels.data().to_vec())
}

/// Number of `k`-subsets of `n` items, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // Exact at every step: acc is C(n, i) before the update.
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Maximum number of supports [`rip_constant`] will enumerate.
pub const RIP_BUDGET: u128 = 1_000_000;

/// Restricted isometry constant of order `k`: the largest deviation of a
/// squared singular value from 1 over every `k`-column submatrix.
pub fn rip_constant<T: Scalar>(phi: &CSMatrix<T>, k: usize) -> Result<f64> {
    let n = phi.cols;
    if k == 0 || k > n {
        return Err(Error::usage(
            "rip_constant",
            format!("order {k} must lie in 1..={n}"),
        ));
    }
    let supports = binomial(n, k);
    if supports > RIP_BUDGET {
        return Err(Error::Budget {
            supports,
            budget: RIP_BUDGET,
        });
    }
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|c| phi.column(c).into_iter().map(|v| v.as_f64()).collect())
        .collect();
    let mut delta: f64 = 0.0;
    let mut gram = vec![0.0; k * k];
    for_each_subset(n, k, |support| {
        for (i, &a) in support.iter().enumerate() {
            for (j, &b) in support.iter().enumerate().skip(i) {
                let g: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                gram[i * k + j] = g;
                gram[j * k + i] = g;
            }
        }
        for lambda in symmetric_eigenvalues(&gram, k) {
            delta = delta.max((1.0 - lambda).max(lambda - 1.0));
        }
    });
    Ok(delta)
}

/// Calls `f` on every increasing `k`-subset of `0..n`, in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Eigenvalues of a symmetric row-major `n×n` matrix by cyclic Jacobi sweeps.
pub fn symmetric_eigenvalues(matrix: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(matrix.len(), n * n, "matrix must be n×n");
    let mut a = matrix.to_vec();
    let scale = a
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    a[r * n + p] = c * arp - s * arq;
                    a[r * n + q] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = a[p * n + r];
                    let aqr = a[q * n + r];
                    a[p * n + r] = c * apr - s * aqr;
                    a[q * n + r] = s * apr + c * aqr;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Orthonormal DCT-II basis with the frequency-`k` atom as column `k`.
pub fn dct_basis<T: Scalar>(n: usize) -> CSMatrix<T> {
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for k in 0..n {
            let norm = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            let v = norm * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
            data.push(T::of(v));
        }
    }
    CSMatrix {
        rows: n,
        cols: n,
        data,
    }
}

/// Orthonormality tolerance for sparsifying bases.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Signal `x = Ψ s` with `s` sparse in the orthonormal basis `Ψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseModel<T> {
    psi: CSMatrix<T>,
    s: Vec<T>,
}

impl<T: Scalar> SparseModel<T> {
    pub fn new(psi: CSMatrix<T>, s: Vec<T>) -> Result<Self> {
        if psi.rows != psi.cols {
            return Err(Error::Validation(format!(
                "basis is {}×{}, not square",
                psi.rows, psi.cols
            )));
        }
        if s.len() != psi.cols {
            return Err(Error::dim(
                "SparseModel::new",
                Axis::Length,
                psi.cols,
                s.len(),
            ));
        }
        let n = psi.cols;
        for i in 0..n {
            for j in i..n {
                let g: f64 = (0..n)
                    .map(|r| psi.at(r, i).as_f64() * psi.at(r, j).as_f64())
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (g - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::Validation(format!(
                        "basis is not orthonormal: column product ({i}, {j}) = {g}"
                    )));
                }
            }
        }
        Ok(SparseModel { psi, s })
    }

    pub fn basis(&self) -> &CSMatrix<T> {
        &self.psi
    }

    pub fn coefficients(&self) -> &[T] {
        &self.s
    }

    /// Number of nonzero coefficients.
    pub fn sparsity(&self) -> usize {
        self.s.iter().filter(|v| !v.is_zero()).count()
    }
}

pub fn sparse_synthesis<T: Scalar>(model: &SparseModel<T>) -> Vec<T> {
    model
        .psi
        .apply(&model.s)
        .expect("validated at construction")
}

/// Basis-pursuit program `min ‖s‖₁ subject to Φ Ψ s = y`. Only the objective
/// and constraint residual are provided; no solver is included.
#[derive(Clone, Debug)]
pub struct BasisPursuit<'a, T> {
    pub phi: &'a CSMatrix<T>,
    pub psi: &'a CSMatrix<T>,
    pub y: &'a [T],
}

impl<T: Scalar> BasisPursuit<'_, T> {
    pub fn objective(&self, s: &[T]) -> f64 {
        s.iter().map(|v| v.as_f64().abs()).sum()
    }

    /// `‖Φ Ψ s − y‖₂`.
    pub fn residual(&self, s: &[T]) -> Result<f64> {
        let x = self.psi.apply(s)?;
        let y_hat = self.phi.apply(&x)?;
        if y_hat.len() != self.y.len() {
            return Err(Error::dim(
                "BasisPursuit::residual",
                Axis::Length,
                y_hat.len(),
                self.y.len(),
            ));
        }
        Ok(y_hat
            .iter()
            .zip(self.y)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum::<f64>()
            .sqrt())
    }
}
