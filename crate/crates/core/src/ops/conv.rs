//! Strided, dilated, zero-padded 2-D convolution and its transpose.
//!
//! Stride-1 convolutions run one GEMM per kernel tap over a zero-padded copy
//! of the input; strided ones and the transpose lower to `im2col` / `col2im`
//! plus one GEMM per batch item. Convolution is cross-correlation: kernels
//! are not flipped.

use serde::{Deserialize, Serialize};

use super::{CacheKind, LayerCache};
use crate::error::{Axis, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Geometry and flags of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    /// Tap spacing; 1 is an ordinary convolution.
    pub dilation: usize,
    /// Zero padding applied to all four borders.
    pub padding: usize,
    pub has_bias: bool,
    /// Consumed by network layers, which follow the convolution with a ReLU
    /// when set. [`conv2d`] itself is always linear.
    pub has_relu: bool,
}

impl ConvSpec {
    /// Square kernel, stride 1, no dilation or padding, with bias.
    pub fn new(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            out_channels,
            in_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            dilation: 1,
            padding: 0,
            has_bias: true,
            has_relu: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn with_relu(mut self, has_relu: bool) -> Self {
        self.has_relu = has_relu;
        self
    }

    /// Spatial extent covered by the dilated kernel, `d·(k−1)+1` per axis.
    pub fn effective_kernel(&self) -> (usize, usize) {
        (
            self.dilation * (self.kernel_h.saturating_sub(1)) + 1,
            self.dilation * (self.kernel_w.saturating_sub(1)) + 1,
        )
    }

    pub fn weight_dims(&self) -> Dims {
        Dims::new(
            self.out_channels,
            self.in_channels,
            self.kernel_h,
            self.kernel_w,
        )
    }

    /// Number of weight entries (bias excluded).
    pub fn weight_count(&self) -> usize {
        self.weight_dims().len()
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        let positive = [
            ("out_channels", self.out_channels),
            ("in_channels", self.in_channels),
            ("kernel_h", self.kernel_h),
            ("kernel_w", self.kernel_w),
            ("stride", self.stride),
            ("dilation", self.dilation),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::geometry(op, format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Output shape for `input`, or a geometry error when the dilated kernel
    /// does not fit inside the padded input.
    pub fn output_dims(&self, input: Dims) -> Result<Dims> {
        const OP: &str = "conv2d";
        self.validate(OP)?;
        if input.c != self.in_channels {
            return Err(Error::dim(OP, Axis::Channels, self.in_channels, input.c));
        }
        let (eh, ew) = self.effective_kernel();
        let (ph, pw) = (input.h + 2 * self.padding, input.w + 2 * self.padding);
        if eh > ph || ew > pw {
            return Err(Error::geometry(
                OP,
                format!("effective kernel {eh}×{ew} exceeds padded input {ph}×{pw}"),
            ));
        }
        Ok(Dims::new(
            input.n,
            self.out_channels,
            (ph - eh) / self.stride + 1,
            (pw - ew) / self.stride + 1,
        ))
    }
}

/// Sliding-window layout shared by `im2col` and `col2im`.
#[derive(Clone, Copy, Debug)]
struct Window {
    channels: usize,
    in_h: usize,
    in_w: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
    out_h: usize,
    out_w: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Outputs `lo..hi` whose tap `k` lands inside an axis of length
    /// `extent`, and the input coordinate hit by output `lo`.
    #[inline]
    fn valid(&self, k: usize, extent: usize, outputs: usize) -> (usize, usize, usize) {
        let shift = k * self.dilation;
        // First output with o·s + shift ≥ padding.
        let lo = self
            .padding
            .saturating_sub(shift)
            .div_ceil(self.stride)
            .min(outputs);
        // Outputs with o·s + shift − padding ≤ extent − 1.
        let hi = if extent + self.padding > shift {
            ((extent - 1 + self.padding - shift) / self.stride + 1).min(outputs)
        } else {
            0
        };
        let hi = hi.max(lo);
        (
            lo,
            hi,
            lo * self.stride + shift - self.padding.min(lo * self.stride + shift),
        )
    }

    /// `col[(c,ky,kx), (oy,ox)] = image[c, oy·s + ky·d − p, ox·s + kx·d − p]`.
    fn im2col<T: Scalar>(&self, image: &[T], col: &mut [T]) {
        let cols = self.cols();
        let plane = self.in_h * self.in_w;
        let s = self.stride;
        let mut row = 0;
        for c in 0..self.channels {
            let src = &image[c * plane..(c + 1) * plane];
            for ky in 0..self.kernel_h {
                let (ylo, yhi, iy0) = self.valid(ky, self.in_h, self.out_h);
                for kx in 0..self.kernel_w {
                    let (xlo, xhi, ix0) = self.valid(kx, self.in_w, self.out_w);
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    dst[..ylo * self.out_w].fill(T::zero());
                    dst[yhi * self.out_w..].fill(T::zero());
                    for oy in ylo..yhi {
                        let iy = iy0 + (oy - ylo) * s;
                        let out_row = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        let line = &src[iy * self.in_w..(iy + 1) * self.in_w];
                        out_row[..xlo].fill(T::zero());
                        out_row[xhi..].fill(T::zero());
                        if xlo == xhi {
                            continue;
                        }
                        if s == 1 {
                            out_row[xlo..xhi].copy_from_slice(&line[ix0..ix0 + (xhi - xlo)]);
                        } else {
                            for (v, &x) in out_row[xlo..xhi]
                                .iter_mut()
                                .zip(line[ix0..].iter().step_by(s))
                            {
                                *v = x;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`Window::im2col`]: scatter-adds columns back into `image`.
    fn col2im_add<T: Scalar>(&self, col: &[T], image: &mut [T]) {
        let cols = self.cols();
        let plane = self.in_h * self.in_w;
        let s = self.stride;
        let mut row = 0;
        for c in 0..self.channels {
            let dst = &mut image[c * plane..(c + 1) * plane];
            for ky in 0..self.kernel_h {
                let (ylo, yhi, iy0) = self.valid(ky, self.in_h, self.out_h);
                for kx in 0..self.kernel_w {
                    let (xlo, xhi, ix0) = self.valid(kx, self.in_w, self.out_w);
                    let src = &col[row * cols..(row + 1) * cols];
                    if xlo == xhi {
                        row += 1;
                        continue;
                    }
                    for oy in ylo..yhi {
                        let iy = iy0 + (oy - ylo) * s;
                        let line = &mut dst[iy * self.in_w..(iy + 1) * self.in_w];
                        let src_row = &src[oy * self.out_w + xlo..oy * self.out_w + xhi];
                        if s == 1 {
                            for (x, &v) in line[ix0..ix0 + (xhi - xlo)].iter_mut().zip(src_row) {
                                *x += v;
                            }
                        } else {
                            for (x, &v) in line[ix0..].iter_mut().step_by(s).zip(src_row) {
                                *x += v;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Stride-1 convolution as a sum over kernel taps. The input is copied into
/// a zero-padded `C × Hp × Wp` buffer; tap `(ky, kx)` then reads that buffer
/// at a fixed offset, so the output is formed on a "wide" `Ho × Wp` grid
/// whose trailing `Wp − Wo` columns of every row are discarded.
struct TapPlan {
    in_c: usize,
    out_c: usize,
    kernel_h: usize,
    kernel_w: usize,
    dilation: usize,
    padding: usize,
    in_h: usize,
    in_w: usize,
    pad_h: usize,
    pad_w: usize,
    out_h: usize,
    out_w: usize,
}

impl TapPlan {
    /// Per-tap products need enough input channels to give the forward
    /// GEMM a useful inner dimension.
    fn suits(spec: &ConvSpec) -> bool {
        spec.stride == 1 && spec.in_channels >= 8
    }

    fn new(spec: &ConvSpec, input: Dims, output: Dims) -> Self {
        debug_assert_eq!(spec.stride, 1);
        TapPlan {
            in_c: spec.in_channels,
            out_c: spec.out_channels,
            kernel_h: spec.kernel_h,
            kernel_w: spec.kernel_w,
            dilation: spec.dilation,
            padding: spec.padding,
            in_h: input.h,
            in_w: input.w,
            pad_h: input.h + 2 * spec.padding,
            pad_w: input.w + 2 * spec.padding,
            out_h: output.h,
            out_w: output.w,
        }
    }

    fn plane(&self) -> usize {
        self.pad_h * self.pad_w
    }

    /// The last tap of the last channel reads up to `(Kw−1)·d` elements
    /// past the final padded plane.
    fn padded_len(&self) -> usize {
        self.in_c * self.plane() + (self.kernel_w - 1) * self.dilation
    }

    fn wide_cols(&self) -> usize {
        self.out_h * self.pad_w
    }

    fn taps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let d = self.dilation;
        let kk = self.kernel_w;
        (0..self.kernel_h * kk).map(move |t| (t, (t / kk) * d * self.pad_w + (t % kk) * d))
    }

    fn pad<T: Scalar>(&self, image: &[T], padded: &mut [T]) {
        let (p, plane) = (self.padding, self.in_h * self.in_w);
        for c in 0..self.in_c {
            let dst = &mut padded[c * self.plane()..(c + 1) * self.plane()];
            for y in 0..self.in_h {
                let row = (y + p) * self.pad_w + p;
                let src = c * plane + y * self.in_w;
                dst[row..row + self.in_w].copy_from_slice(&image[src..src + self.in_w]);
            }
        }
    }

    fn unpad<T: Scalar>(&self, padded: &[T], image: &mut [T]) {
        let (p, plane) = (self.padding, self.in_h * self.in_w);
        for c in 0..self.in_c {
            let src = &padded[c * self.plane()..(c + 1) * self.plane()];
            for y in 0..self.in_h {
                let row = (y + p) * self.pad_w + p;
                let dst = c * plane + y * self.in_w;
                image[dst..dst + self.in_w].copy_from_slice(&src[row..row + self.in_w]);
            }
        }
    }

    /// Drops the discarded columns of a wide `O × Ho·Wp` result.
    fn narrow<T: Scalar>(&self, wide: &[T], out: &mut [T]) {
        for (o, plane) in out.chunks_exact_mut(self.out_h * self.out_w).enumerate() {
            let src = &wide[o * self.wide_cols()..];
            for (y, row) in plane.chunks_exact_mut(self.out_w).enumerate() {
                row.copy_from_slice(&src[y * self.pad_w..y * self.pad_w + self.out_w]);
            }
        }
    }

    /// Inverse of [`TapPlan::narrow`] with zeros in the discarded columns.
    fn widen<T: Scalar>(&self, out: &[T], wide: &mut [T]) {
        wide.fill(T::zero());
        for (o, plane) in out.chunks_exact(self.out_h * self.out_w).enumerate() {
            let dst = &mut wide[o * self.wide_cols()..];
            for (y, row) in plane.chunks_exact(self.out_w).enumerate() {
                dst[y * self.pad_w..y * self.pad_w + self.out_w].copy_from_slice(row);
            }
        }
    }

    fn weight_strides(&self) -> (usize, usize) {
        (
            self.in_c * self.kernel_h * self.kernel_w,
            self.kernel_h * self.kernel_w,
        )
    }

    /// `wide[o, j] += Σ_taps Σ_c W[o, c, tap] · padded[c, offset(tap) + j]`.
    fn forward<T: Scalar>(&self, weights: &[T], padded: &[T], wide: &mut [T]) {
        let n = self.wide_cols();
        for (t, off) in self.taps() {
            T::gemm_acc(
                self.out_c,
                self.in_c,
                n,
                &weights[t..],
                self.weight_strides(),
                &padded[off..],
                (self.plane(), 1),
                wide,
                (n, 1),
            );
        }
    }

    /// `dW[o, c, tap] += Σ_j dwide[o, j] · padded[c, offset(tap) + j]`.
    fn weight_grad<T: Scalar>(&self, grad_wide: &[T], padded: &[T], grad_w: &mut [T]) {
        let n = self.wide_cols();
        for (t, off) in self.taps() {
            T::gemm_acc(
                self.out_c,
                n,
                self.in_c,
                grad_wide,
                (n, 1),
                &padded[off..],
                (1, self.plane()),
                &mut grad_w[t..],
                self.weight_strides(),
            );
        }
    }

    /// `dpadded[c, offset(tap) + j] += Σ_o W[o, c, tap] · dwide[o, j]`.
    fn input_grad<T: Scalar>(&self, weights: &[T], grad_wide: &[T], grad_padded: &mut [T]) {
        let n = self.wide_cols();
        let (rs, cs) = self.weight_strides();
        for (t, off) in self.taps() {
            T::gemm_acc(
                self.in_c,
                self.out_c,
                n,
                &weights[t..],
                (cs, rs),
                grad_wide,
                (n, 1),
                &mut grad_padded[off..],
                (self.plane(), 1),
            );
        }
    }
}

fn check_bias<T>(
    op: &'static str,
    bias: Option<&[T]>,
    has_bias: bool,
    channels: usize,
) -> Result<()> {
    match (bias, has_bias) {
        (Some(b), true) if b.len() != channels => {
            Err(Error::dim(op, Axis::Length, channels, b.len()))
        }
        (Some(_), false) => Err(Error::usage(
            op,
            "bias supplied to a layer declared without bias",
        )),
        (None, true) => Err(Error::usage(
            op,
            "layer declares a bias but none was supplied",
        )),
        _ => Ok(()),
    }
}

fn add_bias<T: Scalar>(out: &mut Tensor<T>, bias: &[T]) {
    let d = out.dims();
    let plane = d.plane_len();
    for n in 0..d.n {
        let item = out.item_mut(n);
        for (c, &b) in bias.iter().enumerate() {
            item[c * plane..(c + 1) * plane]
                .iter_mut()
                .for_each(|v| *v += b);
        }
    }
}

fn bias_grad<T: Scalar>(grad_out: &Tensor<T>) -> Vec<T> {
    let d = grad_out.dims();
    let plane = d.plane_len();
    let mut g = vec![T::zero(); d.c];
    for n in 0..d.n {
        let item = grad_out.item(n);
        for (c, gc) in g.iter_mut().enumerate() {
            *gc += item[c * plane..(c + 1) * plane]
                .iter()
                .fold(T::zero(), |acc, &v| acc + v);
        }
    }
    g
}

/// Gradients returned by the convolution backward passes.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Option<Vec<T>>,
}

/// Forward convolution. `weights` has dims `[O, I, Kh, Kw]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    spec: &ConvSpec,
) -> Result<(Tensor<T>, LayerCache<T>)> {
    const OP: &str = "conv2d";
    spec.weight_dims().expect_eq(&weights.dims(), OP)?;
    check_bias(OP, bias, spec.has_bias, spec.out_channels)?;
    let in_dims = input.dims();
    let out_dims = spec.output_dims(in_dims)?;
    let win = window(spec, in_dims, out_dims);

    let mut out = Tensor::zeros(out_dims);
    if TapPlan::suits(spec) {
        let taps = TapPlan::new(spec, in_dims, out_dims);
        let mut padded = vec![T::zero(); taps.padded_len()];
        let mut wide = vec![T::zero(); spec.out_channels * taps.wide_cols()];
        for n in 0..in_dims.n {
            taps.pad(input.item(n), &mut padded);
            wide.fill(T::zero());
            taps.forward(weights.data(), &padded, &mut wide);
            taps.narrow(&wide, out.item_mut(n));
        }
    } else {
        let mut col = vec![T::zero(); win.rows() * win.cols()];
        let (m, k, p) = (spec.out_channels, win.rows(), win.cols());
        for n in 0..in_dims.n {
            win.im2col(input.item(n), &mut col);
            T::gemm_acc(
                m,
                k,
                p,
                weights.data(),
                (k, 1),
                &col,
                (p, 1),
                out.item_mut(n),
                (p, 1),
            );
        }
    }
    if let Some(b) = bias {
        add_bias(&mut out, b);
    }
    let cache = LayerCache::new(CacheKind::Conv {
        input: input.clone(),
        weights: weights.clone(),
        spec: *spec,
        output_dims: out_dims,
    });
    Ok((out, cache))
}

fn window(spec: &ConvSpec, input: Dims, output: Dims) -> Window {
    Window {
        channels: input.c,
        in_h: input.h,
        in_w: input.w,
        kernel_h: spec.kernel_h,
        kernel_w: spec.kernel_w,
        stride: spec.stride,
        dilation: spec.dilation,
        padding: spec.padding,
        out_h: output.h,
        out_w: output.w,
    }
}

/// Exact gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &LayerCache<T>,
) -> Result<ConvGrads<T>> {
    const OP: &str = "conv2d_backward";
    let CacheKind::Conv {
        input,
        weights,
        spec,
        output_dims,
    } = &cache.kind
    else {
        return Err(Error::usage(
            OP,
            format!("expected a conv2d cache, got {}", cache.kind_name()),
        ));
    };
    output_dims.expect_eq(&grad_out.dims(), OP).map_err(|e| {
        Error::usage(
            OP,
            format!("gradient does not match the cached forward output ({e})"),
        )
    })?;

    let in_dims = input.dims();
    let win = window(spec, in_dims, *output_dims);
    let (m, k, p) = (spec.out_channels, win.rows(), win.cols());
    let mut grad_input = Tensor::zeros(in_dims);
    let mut grad_w = Tensor::zeros(weights.dims());
    if TapPlan::suits(spec) {
        let taps = TapPlan::new(spec, in_dims, *output_dims);
        let mut padded = vec![T::zero(); taps.padded_len()];
        let mut grad_padded = vec![T::zero(); taps.padded_len()];
        let mut wide = vec![T::zero(); m * taps.wide_cols()];
        for n in 0..in_dims.n {
            taps.pad(input.item(n), &mut padded);
            taps.widen(grad_out.item(n), &mut wide);
            taps.weight_grad(&wide, &padded, grad_w.data_mut());
            grad_padded.fill(T::zero());
            taps.input_grad(weights.data(), &wide, &mut grad_padded);
            taps.unpad(&grad_padded, grad_input.item_mut(n));
        }
        return Ok(ConvGrads {
            input: grad_input,
            weights: grad_w,
            bias: spec.has_bias.then(|| bias_grad(grad_out)),
        });
    }
    let mut col = vec![T::zero(); k * p];
    let mut grad_col = vec![T::zero(); k * p];
    for n in 0..in_dims.n {
        let g = grad_out.item(n);
        win.im2col(input.item(n), &mut col);
        // dW (m×k) += dY (m×p) · colᵀ (p×k)
        T::gemm_acc(m, p, k, g, (p, 1), &col, (1, p), grad_w.data_mut(), (k, 1));
        // dcol (k×p) = Wᵀ (k×m) · dY (m×p)
        grad_col.fill(T::zero());
        T::gemm_acc(
            k,
            m,
            p,
            weights.data(),
            (1, k),
            g,
            (p, 1),
            &mut grad_col,
            (p, 1),
        );
        win.col2im_add(&grad_col, grad_input.item_mut(n));
    }
    Ok(ConvGrads {
        input: grad_input,
        weights: grad_w,
        bias: spec.has_bias.then(|| bias_grad(grad_out)),
    })
}

/// Output shape of a transposed convolution: `(h−1)·stride + Kh` per axis.
pub fn conv_transpose_output_dims(input: Dims, weights: Dims, stride: usize) -> Result<Dims> {
    const OP: &str = "conv_transpose2d";
    if stride == 0 {
        return Err(Error::geometry(OP, "stride must be positive"));
    }
    if input.c != weights.n {
        return Err(Error::dim(OP, Axis::Channels, weights.n, input.c));
    }
    if input.h == 0 || input.w == 0 || weights.h == 0 || weights.w == 0 {
        return Err(Error::geometry(OP, "empty spatial extent"));
    }
    Ok(Dims::new(
        input.n,
        weights.c,
        (input.h - 1) * stride + weights.h,
        (input.w - 1) * stride + weights.w,
    ))
}

fn transpose_window(weights: Dims, stride: usize, input: Dims, output: Dims) -> Window {
    // The transposed map scatters through the window of the forward
    // convolution from `output` back to `input`.
    Window {
        channels: weights.c,
        in_h: output.h,
        in_w: output.w,
        kernel_h: weights.h,
        kernel_w: weights.w,
        stride,
        dilation: 1,
        padding: 0,
        out_h: input.h,
        out_w: input.w,
    }
}

/// Transposed convolution with `weights` of dims `[I, O, Kh, Kw]`. Without
/// bias it is the adjoint of [`conv2d`] with the same weights and stride.
pub fn conv_transpose2d<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    stride: usize,
) -> Result<(Tensor<T>, LayerCache<T>)> {
    const OP: &str = "conv_transpose2d";
    let in_dims = input.dims();
    let w_dims = weights.dims();
    let out_dims = conv_transpose_output_dims(in_dims, w_dims, stride)?;
    if let Some(b) = bias {
        if b.len() != w_dims.c {
            return Err(Error::dim(OP, Axis::Length, w_dims.c, b.len()));
        }
    }
    let win = transpose_window(w_dims, stride, in_dims, out_dims);
    let (k, i, p) = (win.rows(), w_dims.n, win.cols());

    let mut out = Tensor::zeros(out_dims);
    let mut col = vec![T::zero(); k * p];
    for n in 0..in_dims.n {
        // col (k×p) = Wᵀ (k×i) · Y (i×p)
        col.fill(T::zero());
        T::gemm_acc(
            k,
            i,
            p,
            weights.data(),
            (1, k),
            input.item(n),
            (p, 1),
            &mut col,
            (p, 1),
        );
        win.col2im_add(&col, out.item_mut(n));
    }
    if let Some(b) = bias {
        add_bias(&mut out, b);
    }
    let cache = LayerCache::new(CacheKind::ConvTranspose {
        input: input.clone(),
        weights: weights.clone(),
        stride,
        has_bias: bias.is_some(),
        output_dims: out_dims,
    });
    Ok((out, cache))
}

/// Exact gradients of [`conv_transpose2d`]. The input gradient is the
/// forward convolution of `grad_out` with the same weights.
pub fn conv_transpose2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &LayerCache<T>,
) -> Result<ConvGrads<T>> {
    const OP: &str = "conv_transpose2d_backward";
    let CacheKind::ConvTranspose {
        input,
        weights,
        stride,
        has_bias,
        output_dims,
    } = &cache.kind
    else {
        return Err(Error::usage(
            OP,
            format!(
                "expected a conv_transpose2d cache, got {}",
                cache.kind_name()
            ),
        ));
    };
    output_dims.expect_eq(&grad_out.dims(), OP).map_err(|e| {
        Error::usage(
            OP,
            format!("gradient does not match the cached forward output ({e})"),
        )
    })?;

    let in_dims = input.dims();
    let w_dims = weights.dims();
    let win = transpose_window(w_dims, *stride, in_dims, *output_dims);
    let (k, i, p) = (win.rows(), w_dims.n, win.cols());
    let mut grad_input = Tensor::zeros(in_dims);
    let mut grad_w = Tensor::zeros(w_dims);
    let mut col = vec![T::zero(); k * p];
    for n in 0..in_dims.n {
        win.im2col(grad_out.item(n), &mut col);
        // dY (i×p) = W (i×k) · col (k×p)
        T::gemm_acc(
            i,
            k,
            p,
            weights.data(),
            (k, 1),
            &col,
            (p, 1),
            grad_input.item_mut(n),
            (p, 1),
        );
        // dW (i×k) += Y (i×p) · colᵀ (p×k)
        T::gemm_acc(
            i,
            p,
            k,
            input.item(n),
            (p, 1),
            &col,
            (1, p),
            grad_w.data_mut(),
            (k, 1),
        );
    }
    Ok(ConvGrads {
        input: grad_input,
        weights: grad_w,
        bias: has_bias.then(|| bias_grad(grad_out)),
    })
}

/// Direct-summation convolution used as an independent test oracle.
#[cfg(test)]
pub(crate) fn conv2d_direct(
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    bias: Option<&[f64]>,
    spec: &ConvSpec,
) -> Tensor<f64> {
    let out_dims = spec.output_dims(input.dims()).unwrap();
    let id = input.dims();
    Tensor::from_fn(out_dims, |n, o, oy, ox| {
        let mut acc = 0.0;
        for c in 0..spec.in_channels {
            for ky in 0..spec.kernel_h {
                for kx in 0..spec.kernel_w {
                    let iy =
                        (oy * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                    let ix =
                        (ox * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < id.h && (ix as usize) < id.w {
                        acc += weights.at(o, c, ky, kx) * input.at(n, c, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc + bias.map_or(0.0, |b| b[o])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::dilate_kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(dims: impl Into<Dims>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let dims = dims.into();
        Tensor::from_vec(
            dims,
            (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::from_vec([1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let w = Tensor::filled([1, 1, 1, 1], 1.0);
        let (y, _) = conv2d(&x, &w, None, &ConvSpec::new(1, 1, 1).with_bias(false)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn mean_pooling_as_strided_conv() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::filled([1, 1, 2, 2], 0.25);
        let spec = ConvSpec::new(1, 1, 2).with_stride(2).with_bias(false);
        let (y, _) = conv2d(&x, &w, None, &spec).unwrap();
        assert_eq!(y.dims(), Dims::new(1, 1, 1, 1));
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn dilated_ramp_matches_direct_summation_and_inflated_kernel() {
        let x = Tensor::from_fn([1, 1, 5, 5], |_, _, h, w| (h * 5 + w) as f64);
        let w = Tensor::from_vec(
            [1, 1, 3, 3],
            vec![1.0, -2.0, 0.5, 3.0, 1.5, -1.0, 0.25, 2.0, -0.75],
        )
        .unwrap();
        let spec = ConvSpec::new(1, 1, 3).with_dilation(2).with_bias(false);
        let (y, _) = conv2d(&x, &w, None, &spec).unwrap();
        // Direct oracle: a single output at the centre of a 5×5 window.
        let expect: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| w.at(0, 0, i, j) * x.at(0, 0, 2 * i, 2 * j))
            .sum();
        assert_eq!(y.data(), &[expect]);
        assert_eq!(y, conv2d_direct(&x, &w, None, &spec));

        let inflated = dilate_kernel(&w, 2).unwrap();
        let (y2, _) = conv2d(
            &x,
            &inflated,
            None,
            &ConvSpec::new(1, 1, 5).with_bias(false),
        )
        .unwrap();
        assert_eq!(y.data()[0].to_bits(), y2.data()[0].to_bits());
    }

    #[test]
    fn matches_direct_oracle_with_padding_stride_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(stride, dilation, padding) in &[(1, 1, 1), (2, 1, 0), (1, 2, 2), (2, 3, 3), (3, 1, 2)]
        {
            let spec = ConvSpec::new(3, 2, 3)
                .with_stride(stride)
                .with_dilation(dilation)
                .with_padding(padding);
            let x = random([2, 2, 9, 8], &mut rng);
            let w = random(spec.weight_dims(), &mut rng);
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (y, _) = conv2d(&x, &w, Some(&b), &spec).unwrap();
            let z = conv2d_direct(&x, &w, Some(&b), &spec);
            assert!(y.max_abs_diff(&z).unwrap() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_names_axis() {
        let x = Tensor::<f64>::zeros([1, 3, 4, 4]);
        let w = Tensor::zeros([1, 2, 3, 3]);
        let err = conv2d(&x, &w, None, &ConvSpec::new(1, 2, 3).with_bias(false)).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                axis: Axis::Channels,
                expected: 2,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn oversized_dilated_kernel_is_a_geometry_error() {
        let x = Tensor::<f64>::zeros([1, 1, 4, 4]);
        let w = Tensor::zeros([1, 1, 3, 3]);
        let spec = ConvSpec::new(1, 1, 3).with_dilation(3).with_bias(false);
        assert!(matches!(
            conv2d(&x, &w, None, &spec),
            Err(Error::Geometry { .. })
        ));
    }

    #[test]
    fn bias_contract_enforced() {
        let x = Tensor::<f64>::zeros([1, 1, 3, 3]);
        let w = Tensor::zeros([2, 1, 1, 1]);
        let spec = ConvSpec::new(2, 1, 1);
        assert!(matches!(
            conv2d(&x, &w, None, &spec),
            Err(Error::Usage { .. })
        ));
        assert!(conv2d(&x, &w, Some(&[1.0]), &spec).is_err());
        assert!(conv2d(&x, &w, Some(&[1.0, 2.0]), &spec.with_bias(false)).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = ConvSpec::new(2, 2, 3).with_padding(1);
        let x = random([1, 2, 5, 5], &mut rng);
        let w = random(spec.weight_dims(), &mut rng);
        let (y, cache) = conv2d(&x, &w, Some(&[0.5, -0.5]), &spec).unwrap();
        let g = conv2d_backward(&Tensor::zeros(y.dims()), &cache).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert_eq!(g.bias.unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_kernel_backward_passes_gradient_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random([1, 1, 3, 3], &mut rng);
        let w = Tensor::filled([1, 1, 1, 1], 1.0);
        let (_, cache) = conv2d(&x, &w, None, &ConvSpec::new(1, 1, 1).with_bias(false)).unwrap();
        let g_out = random([1, 1, 3, 3], &mut rng);
        let g = conv2d_backward(&g_out, &cache).unwrap();
        assert_eq!(g.input, g_out);
        assert!(g.bias.is_none());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let x = Tensor::<f64>::zeros([1, 1, 4, 4]);
        let w = Tensor::zeros([1, 1, 3, 3]);
        let (_, cache) = conv2d(&x, &w, None, &ConvSpec::new(1, 1, 3).with_bias(false)).unwrap();
        let wrong = Tensor::zeros([1, 1, 3, 3]);
        assert!(matches!(
            conv2d_backward(&wrong, &cache),
            Err(Error::Usage { .. })
        ));
        assert!(matches!(
            conv_transpose2d_backward(&wrong, &cache),
            Err(Error::Usage { .. })
        ));
    }

    #[test]
    fn transpose_stamps_kernel() {
        let y = Tensor::from_vec([1, 1, 1, 1], vec![2.0]).unwrap();
        let w = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let (x, _) = conv_transpose2d(&y, &w, None, 2).unwrap();
        assert_eq!(x.dims(), Dims::new(1, 1, 2, 2));
        assert_eq!(x.data(), &[2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn transpose_output_shape_for_block_reconstruction() {
        let y = Tensor::<f32>::zeros([1, 10, 3, 3]);
        let w = Tensor::zeros([10, 1, 32, 32]);
        let (x, _) = conv_transpose2d(&y, &w, Some(&[0.0]), 32).unwrap();
        assert_eq!(x.dims(), Dims::new(1, 1, 96, 96));
    }

    #[test]
    fn transpose_input_gradient_is_forward_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = random([3, 2, 2, 3], &mut rng);
        let y = random([2, 3, 3, 2], &mut rng);
        let (x, cache) = conv_transpose2d(&y, &w, Some(&[0.1, 0.2]), 2).unwrap();
        let g_out = random(x.dims(), &mut rng);
        let g = conv_transpose2d_backward(&g_out, &cache).unwrap();
        let spec = ConvSpec {
            out_channels: 3,
            in_channels: 2,
            kernel_h: 2,
            kernel_w: 3,
            stride: 2,
            dilation: 1,
            padding: 0,
            has_bias: false,
            has_relu: false,
        };
        let (direct, _) = conv2d(&g_out, &w, None, &spec).unwrap();
        assert!(g.input.max_abs_diff(&direct).unwrap() < 1e-12);
    }
}
