//! Oracle suites bundled by `msdcnn verify`. Each suite returns a one-line
//! summary on success and an error describing the first violation.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use msdcnn::cs::{block_measure, dct_basis, kernels_to_matrix, rip_constant, CSMatrix};
use msdcnn::gradcheck::gradcheck;
use msdcnn::ops::{
    concat_channels, conv2d, conv2d_backward, conv_transpose2d, conv_transpose2d_backward,
    dilate_kernel, mse_loss, relu, relu_backward, split_channels_backward, ConvGrads, ConvSpec,
    LayerCache,
};
use msdcnn::{
    build_network, count_parameters, Dims, Network64, NetworkConfig, ParamScope, PatternPreset,
    Tensor64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Backward pass of `conv2d` used by the operator gradient checks.
pub type ConvBackward = fn(&Tensor64, &LayerCache<f64>) -> msdcnn::Result<ConvGrads<f64>>;

/// Relative-error bound of every gradient check.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Finite-difference step. Smaller steps are dominated by roundoff on small
/// gradient entries; larger ones start crossing ReLU kinks in the network.
pub const GRADCHECK_EPS: f64 = 1e-5;

pub struct Suite {
    pub name: &'static str,
    check: Box<dyn Fn() -> Result<String>>,
}

impl Suite {
    pub fn new(name: &'static str, check: impl Fn() -> Result<String> + 'static) -> Self {
        Suite {
            name,
            check: Box::new(check),
        }
    }

    pub fn run(&self) -> Result<String> {
        (self.check)()
    }
}

/// Every suite, checking the library's own conv backward pass.
pub fn default_suites() -> Vec<Suite> {
    suites_with(conv2d_backward)
}

/// Every suite, with the operator gradient check using `conv_backward`.
pub fn suites_with(conv_backward: ConvBackward) -> Vec<Suite> {
    vec![
        Suite::new("parameter-counts", parameter_counts),
        Suite::new("gradcheck-ops", move || gradcheck_ops(conv_backward, 0..3)),
        Suite::new("gradcheck-network", || gradcheck_network(0..3)),
        Suite::new("measurement-equivalence", || measurement_equivalence(0..10)),
        Suite::new("adjoint", || adjoint(0..10)),
        Suite::new("dilation", || dilation(0..10)),
        Suite::new("rip", rip_fixtures),
    ]
}

/// Runs `suites` in order, writing one `PASS`/`FAIL` line per suite.
/// Returns whether all passed.
pub fn run_suites(suites: &[Suite], out: &mut impl Write) -> bool {
    let mut all = true;
    for s in suites {
        let start = Instant::now();
        let result = s.run();
        let secs = start.elapsed().as_secs_f64();
        let line = match &result {
            Ok(detail) => format!("PASS {} ({secs:.2}s): {detail}", s.name),
            Err(e) => format!("FAIL {} ({secs:.2}s): {e:#}", s.name),
        };
        all &= result.is_ok();
        // A closed stdout must not mask the verdict.
        let _ = writeln!(out, "{line}");
    }
    all
}

fn normal_tensor(rng: &mut ChaCha8Rng, dims: impl Into<Dims>) -> Tensor64 {
    Tensor64::from_fn(dims, |_, _, _, _| rng.sample(StandardNormal))
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn parameter_counts() -> Result<String> {
    // Channel 1 is four 3×3 layers in every pattern.
    let first = 9 * 32 + 3 * 9 * 32 * 32;
    let expected = [
        (PatternPreset::Dilated, 2 * first),
        (PatternPreset::Conv, first + 25 * 32 + 3 * 25 * 32 * 32),
        (
            PatternPreset::Alternating,
            first + 9 * 32 + 25 * 32 * 32 + 9 * 32 * 32 + 25 * 32 * 32,
        ),
    ];
    let mut got = Vec::new();
    for (preset, want) in expected {
        let cfg = NetworkConfig::new(0.1, 2).with_pattern(preset);
        let n = count_parameters(&cfg, ParamScope::MfeOnly)?;
        ensure!(n == want, "{preset}: counted {n}, expected {want}");
        got.push(format!("{preset} {n}"));
    }
    Ok(got.join(", "))
}

/// Checks one differentiable map `params ↦ Σ r ⊙ f(params)`.
fn check(
    label: &str,
    point: &[f64],
    f: impl FnMut(&[f64]) -> msdcnn::Result<(f64, Vec<f64>)>,
) -> Result<f64> {
    let report = gradcheck(f, point, GRADCHECK_EPS)?;
    ensure!(
        report.max_relative_error < GRADCHECK_TOL,
        "{label}: relative error {:.3e} at coordinate {} (analytic {:.6e}, numeric {:.6e})",
        report.max_relative_error,
        report.worst_index,
        report.analytic,
        report.numeric
    );
    Ok(report.max_relative_error)
}

fn split3(p: &[f64], a: usize, b: usize) -> (&[f64], &[f64], &[f64]) {
    (&p[..a], &p[a..a + b], &p[a + b..])
}

/// Gradient of `Σ r ⊙ conv2d(x, w, b)` with respect to `(x, w, b)`.
fn conv_case(
    rng: &mut ChaCha8Rng,
    spec: ConvSpec,
    input: Dims,
    backward: ConvBackward,
) -> Result<f64> {
    let out = spec.output_dims(input)?;
    let r = normal_tensor(rng, out);
    let (nx, nw) = (input.len(), spec.weight_count());
    let nb = if spec.has_bias { spec.out_channels } else { 0 };
    let point = normal_vec(rng, nx + nw + nb);
    check(&format!("conv2d {spec:?}"), &point, |p| {
        let (x, w, b) = split3(p, nx, nw);
        let x = Tensor64::from_vec(input, x.to_vec())?;
        let w = Tensor64::from_vec(spec.weight_dims(), w.to_vec())?;
        let (y, cache) = conv2d(&x, &w, spec.has_bias.then_some(b), &spec)?;
        let g = backward(&r, &cache)?;
        let mut grad = g.input.into_data();
        grad.extend(g.weights.into_data());
        grad.extend(g.bias.unwrap_or_default());
        Ok((y.dot(&r)?, grad))
    })
}

fn conv_transpose_case(
    rng: &mut ChaCha8Rng,
    input: Dims,
    weights: Dims,
    stride: usize,
) -> Result<f64> {
    let out = msdcnn::ops::conv_transpose_output_dims(input, weights, stride)?;
    let r = normal_tensor(rng, out);
    let (nx, nw, nb) = (input.len(), weights.len(), weights.c);
    let point = normal_vec(rng, nx + nw + nb);
    check("conv_transpose2d", &point, |p| {
        let (x, w, b) = split3(p, nx, nw);
        let x = Tensor64::from_vec(input, x.to_vec())?;
        let w = Tensor64::from_vec(weights, w.to_vec())?;
        let (y, cache) = conv_transpose2d(&x, &w, Some(b), stride)?;
        let g = conv_transpose2d_backward(&r, &cache)?;
        let mut grad = g.input.into_data();
        grad.extend(g.weights.into_data());
        grad.extend(g.bias.unwrap_or_default());
        Ok((y.dot(&r)?, grad))
    })
}

/// Gradient checks of every layer operation over the given seeds.
pub fn gradcheck_ops(conv_backward: ConvBackward, seeds: std::ops::Range<u64>) -> Result<String> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = [
            (
                ConvSpec::new(3, 2, 3).with_padding(1),
                Dims::new(2, 2, 6, 5),
            ),
            (
                ConvSpec::new(2, 3, 2).with_stride(2).with_bias(false),
                Dims::new(1, 3, 6, 6),
            ),
            (
                ConvSpec::new(2, 2, 3).with_dilation(2).with_padding(2),
                Dims::new(1, 2, 7, 6),
            ),
            (
                ConvSpec::new(2, 8, 3).with_dilation(3).with_padding(3),
                Dims::new(1, 8, 7, 7),
            ),
            (
                ConvSpec::new(3, 8, 5).with_padding(2),
                Dims::new(2, 8, 6, 6),
            ),
            (
                ConvSpec::new(4, 1, 4).with_stride(4).with_bias(false),
                Dims::new(1, 1, 8, 8),
            ),
        ];
        for (spec, input) in convs {
            worst = worst.max(conv_case(&mut rng, spec, input, conv_backward)?);
            cases += 1;
        }
        for (input, weights, stride) in [
            (Dims::new(1, 4, 2, 2), Dims::new(4, 1, 4, 4), 4),
            (Dims::new(2, 3, 3, 2), Dims::new(3, 2, 3, 3), 2),
        ] {
            worst = worst.max(conv_transpose_case(&mut rng, input, weights, stride)?);
            cases += 1;
        }

        // ReLU, away from its kink.
        let dims = Dims::new(1, 2, 4, 4);
        let r = normal_tensor(&mut rng, dims);
        let point: Vec<f64> = normal_vec(&mut rng, dims.len())
            .into_iter()
            .map(|v: f64| v.signum() * (v.abs() + 0.1))
            .collect();
        worst = worst.max(check("relu", &point, |p| {
            let x = Tensor64::from_vec(dims, p.to_vec())?;
            let (y, cache) = relu(&x);
            Ok((y.dot(&r)?, relu_backward(&r, &cache)?.into_data()))
        })?);

        // Channel concatenation of two maps.
        let (da, db) = (Dims::new(1, 2, 3, 3), Dims::new(1, 3, 3, 3));
        let r = normal_tensor(&mut rng, Dims::new(1, 5, 3, 3));
        let point = normal_vec(&mut rng, da.len() + db.len());
        worst = worst.max(check("concat", &point, |p| {
            let a = Tensor64::from_vec(da, p[..da.len()].to_vec())?;
            let b = Tensor64::from_vec(db, p[da.len()..].to_vec())?;
            let (y, cache) = concat_channels(&[&a, &b])?;
            let parts = split_channels_backward(&r, &cache)?;
            Ok((
                y.dot(&r)?,
                parts.into_iter().flat_map(Tensor64::into_data).collect(),
            ))
        })?);

        // Reconstruction loss with respect to the prediction.
        let dims = Dims::new(3, 1, 4, 4);
        let target = normal_tensor(&mut rng, dims);
        let point = normal_vec(&mut rng, dims.len());
        worst = worst.max(check("mse", &point, |p| {
            let pred = Tensor64::from_vec(dims, p.to_vec())?;
            let (loss, grad) = mse_loss(&pred, &target)?;
            Ok((loss, grad.into_data()))
        })?);
        cases += 3;
    }
    Ok(format!("{cases} cases, max relative error {worst:.2e}"))
}

/// The smallest complete network: 4×4 blocks, two channels of two layers.
pub fn micro_config() -> NetworkConfig {
    NetworkConfig {
        measurement_rate: 0.25,
        block_size: 4,
        mfe_channels: 2,
        layers_per_channel: 2,
        filters_per_layer: 4,
        channel_patterns: Vec::new(),
        fusion_filters: 4,
        head_kernel: 3,
    }
    .normalized()
}

/// End-to-end gradient check of the micro network on an 8×8 image.
pub fn gradcheck_network(seeds: std::ops::Range<u64>) -> Result<String> {
    let mut worst: f64 = 0.0;
    let mut params = 0;
    for seed in seeds {
        let mut net: Network64 = build_network(&micro_config(), seed)?;
        // Nonzero biases so that their gradients are exercised too.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut point = net.flat_params();
        let mut offset = 0;
        for info in net.param_info() {
            if info.is_bias {
                for v in &mut point[offset..offset + info.len()] {
                    *v = rng.gen_range(-0.1..0.1);
                }
            }
            offset += info.len();
        }
        let image = Tensor64::from_fn([1, 1, 8, 8], |_, _, _, _| rng.gen_range(0.0..1.0));
        params = point.len();
        let err = check(&format!("network seed {seed}"), &point, |p| {
            net.set_flat_params(p)?;
            let (loss, grads) = net.loss_and_gradients(&image)?;
            Ok((loss, grads.flatten()))
        })?;
        worst = worst.max(err);
    }
    Ok(format!(
        "{params} parameters per seed, max relative error {worst:.2e}"
    ))
}

/// Learned measurement against the explicit block matrix built from its kernels.
pub fn measurement_equivalence(seeds: std::ops::Range<u64>) -> Result<String> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for seed in seeds {
        for b in [2, 4, 32] {
            let cfg = NetworkConfig {
                block_size: b,
                measurement_rate: if b == 2 { 0.5 } else { 0.25 },
                ..micro_config()
            };
            let net: Network64 = build_network(&cfg, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + b as u64);
            let (bh, bw) = (2, 3);
            let image =
                Tensor64::from_fn([1, 1, bh * b, bw * b], |_, _, _, _| rng.gen_range(0.0..1.0));
            let y = net.measure(&image)?;
            let phi = kernels_to_matrix(net.measurement_weights())?;
            let blocks = block_measure(&image, &phi, b)?;
            ensure!(
                blocks.len() == bh * bw,
                "expected {} blocks, got {}",
                bh * bw,
                blocks.len()
            );
            for (i, block) in blocks.iter().enumerate() {
                for (k, &v) in block.iter().enumerate() {
                    worst = worst.max((y.at(0, k, i / bw, i % bw) - v).abs());
                }
            }
            count += 1;
        }
    }
    ensure!(worst < 1e-12, "max |diff| {worst:.3e} ≥ 1e-12");
    Ok(format!("{count} instances, max |diff| {worst:.2e}"))
}

/// `⟨conv(x, w), y⟩ = ⟨x, convᵀ(y, w)⟩` for bias-free strided convolutions.
pub fn adjoint(seeds: std::ops::Range<u64>) -> Result<String> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (stride, k, cin, cout, h, w) in
            [(4, 4, 1, 5, 8, 12), (2, 3, 2, 3, 7, 9), (1, 3, 3, 2, 5, 5)]
        {
            let spec = ConvSpec::new(cout, cin, k)
                .with_stride(stride)
                .with_bias(false);
            let x = normal_tensor(&mut rng, [1, cin, h, w]);
            let wt = normal_tensor(&mut rng, spec.weight_dims());
            let (cx, _) = conv2d(&x, &wt, None, &spec)?;
            let y = normal_tensor(&mut rng, cx.dims());
            let (ty, _) = conv_transpose2d(&y, &wt, None, stride)?;
            ensure!(
                ty.dims() == x.dims() || ty.dims().h >= h,
                "transpose shape {}",
                ty.dims()
            );
            // The transpose may extend past trailing rows/columns that the
            // strided forward never read; those meet zeros in x.
            let lhs = cx.dot(&y)?;
            let mut rhs = 0.0;
            for c in 0..cin {
                for i in 0..h.min(ty.dims().h) {
                    for j in 0..w.min(ty.dims().w) {
                        rhs += x.at(0, c, i, j) * ty.at(0, c, i, j);
                    }
                }
            }
            worst = worst.max((lhs - rhs).abs());
            count += 1;
        }
    }
    ensure!(worst < 1e-10, "max |⟨Ax,y⟩ − ⟨x,Aᵀy⟩| {worst:.3e} ≥ 1e-10");
    Ok(format!("{count} instances, max gap {worst:.2e}"))
}

/// Dilated convolution equals convolution with the zero-inflated kernel, bitwise.
pub fn dilation(seeds: std::ops::Range<u64>) -> Result<String> {
    let mut count = 0;
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for d in 1..=3 {
            let cin = rng.gen_range(1..=9);
            let cout = rng.gen_range(1..=4);
            let k = rng.gen_range(1..=3) * 2 + 1;
            let pad = rng.gen_range(0..=d * (k / 2));
            let (h, w) = (
                rng.gen_range((k - 1) * d + 1..20),
                rng.gen_range((k - 1) * d + 1..20),
            );
            let spec = ConvSpec::new(cout, cin, k)
                .with_dilation(d)
                .with_padding(pad);
            let x = normal_tensor(&mut rng, [1, cin, h, w]);
            let wt = normal_tensor(&mut rng, spec.weight_dims());
            let b = normal_vec(&mut rng, cout);
            let (dilated, _) = conv2d(&x, &wt, Some(&b), &spec)?;
            let inflated = dilate_kernel(&wt, d)?;
            let dense = ConvSpec::new(cout, cin, inflated.dims().h).with_padding(pad);
            let (plain, _) = conv2d(&x, &inflated, Some(&b), &dense)?;
            ensure!(
                dilated.dims() == plain.dims(),
                "d={d}: dims {} vs {}",
                dilated.dims(),
                plain.dims()
            );
            if let Some(i) = dilated
                .data()
                .iter()
                .zip(plain.data())
                .position(|(a, b)| a.to_bits() != b.to_bits())
            {
                bail!(
                    "d={d} {spec:?}: element {i} differs ({} vs {})",
                    dilated.data()[i],
                    plain.data()[i]
                );
            }
            count += 1;
        }
    }
    Ok(format!("{count} instances bitwise equal"))
}

/// Eigenvalues of the symmetric 2×2 matrix `[[a, b], [b, c]]`.
fn eig2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - r, mean + r)
}

pub fn rip_fixtures() -> Result<String> {
    let q = dct_basis::<f64>(8);
    for k in 1..=3 {
        let d = rip_constant(&q, k)?;
        ensure!(d < 1e-12, "orthonormal basis gave δ_{k} = {d:e}");
    }
    let degenerate = CSMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 0.0])?;
    let d1 = rip_constant(&degenerate, 1)?;
    ensure!((d1 - 1.0).abs() < 1e-15, "zero column gave δ₁ = {d1}");

    let phi = CSMatrix::<f64>::gaussian(4, 8, 2024);
    let col = |j: usize| phi.column(j);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut brute: f64 = 0.0;
    let mut supports = 0;
    for i in 0..8 {
        for j in i + 1..8 {
            let (ci, cj) = (col(i), col(j));
            let (lo, hi) = eig2(dot(&ci, &ci), dot(&ci, &cj), dot(&cj, &cj));
            brute = brute.max(1.0 - lo).max(hi - 1.0);
            supports += 1;
        }
    }
    let d2 = rip_constant(&phi, 2)?;
    ensure!(
        (d2 - brute).abs() < 1e-10,
        "δ₂ = {d2}, enumeration gives {brute}"
    );
    Ok(format!("δ₂ = {d2:.6} over {supports} supports"))
}
