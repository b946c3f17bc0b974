//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! `cargo test -p msdcnn-cli --test acceptance` runs everything (about half
//! an hour on one core, dominated by the two training criteria). Criterion
//! numbers given as arguments restrict the run, e.g. `-- 1 2 3`.
//!
//! The process exits nonzero only when `ACCEPTANCE_STRICT` is set; the same
//! structural properties are asserted by the ordinary test targets.

mod support;

use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Result};
use msdcnn::cs::{block_measure, dct_basis, kernels_to_matrix, rip_constant, CSMatrix};
use msdcnn::io::checkpoint::load_checkpoint;
use msdcnn::metrics::{image_quality, psnr, ssim, time_reconstruction, PEAK_8BIT};
use msdcnn::net::receptive_field;
use msdcnn::ops::conv2d_backward;
use msdcnn::train::{adam_step, lr_at_epoch, train_on_images, AdamState, LrPhase, Trainer};
use msdcnn::{
    build_network, count_parameters, Network32, Network64, NetworkConfig, ParamScope, PatternPreset,
};
use msdcnn::{Tensor32, Tensor64, TrainPlan};
use msdcnn_cli::{cmd_train, verify, Common, TrainArgs};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Criterion {
    id: u32,
    name: &'static str,
    check: fn() -> Result<String>,
}

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria = [
        Criterion {
            id: 1,
            name: "parameter counts",
            check: c1_parameter_counts,
        },
        Criterion {
            id: 2,
            name: "measurement equivalence",
            check: c2_measurement,
        },
        Criterion {
            id: 3,
            name: "gradient correctness",
            check: c3_gradients,
        },
        Criterion {
            id: 4,
            name: "dilation semantics",
            check: c4_dilation,
        },
        Criterion {
            id: 5,
            name: "adjoint property",
            check: c5_adjoint,
        },
        Criterion {
            id: 6,
            name: "overfit convergence",
            check: c6_overfit,
        },
        Criterion {
            id: 7,
            name: "multi-channel direction",
            check: c7_multichannel,
        },
        Criterion {
            id: 8,
            name: "pattern cost ordering",
            check: c8_cost_ordering,
        },
        Criterion {
            id: 9,
            name: "RIP oracle",
            check: c9_rip,
        },
        Criterion {
            id: 10,
            name: "metric fixtures",
            check: c10_metrics,
        },
        Criterion {
            id: 11,
            name: "schedule and optimizer fixtures",
            check: c11_schedule,
        },
        Criterion {
            id: 12,
            name: "determinism",
            check: c12_determinism,
        },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria
        .iter()
        .filter(|c| wanted.is_empty() || wanted.contains(&c.id))
    {
        let start = Instant::now();
        let result = (c.check)();
        let secs = start.elapsed().as_secs_f64();
        ran += 1;
        match result {
            Ok(detail) => println!(
                "criterion {:>2} PASS [{}] ({secs:.1}s): {detail}",
                c.id, c.name
            ),
            Err(e) => {
                failed += 1;
                println!(
                    "criterion {:>2} FAIL [{}] ({secs:.1}s): {e:#}",
                    c.id, c.name
                );
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn within(elapsed: Instant, budget_secs: f64, what: &str) -> Result<f64> {
    let secs = elapsed.elapsed().as_secs_f64();
    ensure!(
        secs < budget_secs,
        "{what} took {secs:.1}s, budget {budget_secs}s"
    );
    Ok(secs)
}

fn c1_parameter_counts() -> Result<String> {
    let start = Instant::now();
    // Closed forms: channel c has receptive extent 2c+1; dilated layers store 3×3.
    let layer = |k: usize, cin: usize| k * k * cin * 32;
    let channel = |kinds: [usize; 4]| {
        layer(kinds[0], 1) + kinds[1..].iter().map(|&k| layer(k, 32)).sum::<usize>()
    };
    let expected = [
        (
            PatternPreset::Dilated,
            channel([3; 4]) + channel([3; 4]),
            55_872,
        ),
        (
            PatternPreset::Conv,
            channel([3; 4]) + channel([5; 4]),
            105_536,
        ),
        (
            PatternPreset::Alternating,
            channel([3; 4]) + channel([3, 5, 3, 5]),
            88_640,
        ),
    ];
    let mut got = Vec::new();
    for (preset, formula, literal) in expected {
        ensure!(
            formula == literal,
            "closed form for {preset} gives {formula}"
        );
        let n = count_parameters(
            &NetworkConfig::new(0.1, 2).with_pattern(preset),
            ParamScope::MfeOnly,
        )?;
        ensure!(n == literal, "{preset}: {n} ≠ {literal}");
        got.push(format!("{preset} {n}"));
    }
    within(start, 1.0, "counting")?;
    Ok(got.join(", "))
}

/// Explicit block products: block (i, j) vectorized row-major, times each kernel.
fn measure_by_hand(image: &Tensor64, weights: &Tensor64, b: usize) -> Vec<f64> {
    let (h, w) = (image.dims().h, image.dims().w);
    let n = weights.dims().n;
    let mut out = Vec::new();
    for k in 0..n {
        for bi in 0..h / b {
            for bj in 0..w / b {
                let mut acc = 0.0;
                for y in 0..b {
                    for x in 0..b {
                        acc += weights.at(k, 0, y, x) * image.at(0, 0, bi * b + y, bj * b + x);
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn c2_measurement() -> Result<String> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for seed in 0..50u64 {
        let b = [2, 4, 32][seed as usize % 3];
        let cfg = NetworkConfig {
            block_size: b,
            measurement_rate: [0.5, 0.25, 0.1][seed as usize % 3],
            ..verify::micro_config()
        };
        let net: Network64 = build_network(&cfg, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (bh, bw) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let image = Tensor64::from_fn([1, 1, bh * b, bw * b], |_, _, _, _| rng.gen_range(0.0..1.0));
        let y = net.measure(&image)?;
        let phi = kernels_to_matrix(net.measurement_weights())?;
        let blocks = block_measure(&image, &phi, b)?;
        let hand = measure_by_hand(&image, net.measurement_weights(), b);
        ensure!(
            y.len() == hand.len(),
            "measurement count {} vs {}",
            y.len(),
            hand.len()
        );
        for (i, (&a, &h)) in y.data().iter().zip(&hand).enumerate() {
            let (k, blk) = (i / (bh * bw), i % (bh * bw));
            worst = worst.max((a - blocks[blk][k]).abs()).max((a - h).abs());
        }
        count += 1;
    }
    ensure!(worst < 1e-12, "max |diff| {worst:e}");
    let secs = within(start, 10.0, "measurement equivalence")?;
    Ok(format!(
        "{count} networks, max |diff| {worst:.1e} ({secs:.2}s)"
    ))
}

fn c3_gradients() -> Result<String> {
    let start = Instant::now();
    let ops = verify::gradcheck_ops(conv2d_backward, 0..20)?;
    let net = verify::gradcheck_network(0..20)?;
    within(start, 60.0, "gradient checks")?;
    Ok(format!(
        "ops: {ops}; micro network: {net}; 20 seeds, tolerance {:e}",
        verify::GRADCHECK_TOL
    ))
}

fn c4_dilation() -> Result<String> {
    let detail = verify::dilation(0..30)?;
    let rf: Vec<usize> = (1..=3).map(receptive_field).collect();
    ensure!(rf == [3, 5, 7], "receptive fields {rf:?}");
    Ok(format!("{detail}; receptive fields {rf:?}"))
}

fn c5_adjoint() -> Result<String> {
    // Three geometries per seed.
    verify::adjoint(0..17)
}

fn msdcnn(channels: usize) -> NetworkConfig {
    NetworkConfig::new(0.10, channels)
}

fn c6_overfit() -> Result<String> {
    const TARGET: f64 = 35.0;
    let start = Instant::now();
    let mut reached = Vec::new();
    let mut summary = Vec::new();
    for seed in 0..10u64 {
        let image = support::natural_image(500 + seed, 96, 96);
        let plan = TrainPlan {
            seed,
            batch_size: 1,
            patch_size: 96,
            augmentation_enabled: false,
            ..TrainPlan::default()
        };
        let net: Network32 = build_network(&msdcnn(1), seed)?;
        let mut trainer = Trainer::new(net, plan)?;
        let mut best = f64::NEG_INFINITY;
        let mut hit = None;
        for step in 1..=2000 {
            trainer.step(&image, 1e-3)?;
            if step % 100 == 0 {
                let (p, _) = image_quality(&trainer.network().forward(&image)?, &image)?;
                best = best.max(p);
                if p >= TARGET {
                    hit = Some(step);
                    break;
                }
            }
        }
        summary.push(match hit {
            Some(s) => format!("{s}"),
            None => format!("none({best:.1}dB)"),
        });
        reached.push(hit.is_some());
    }
    let n = reached.iter().filter(|&&r| r).count();
    let secs = within(start, 600.0, "overfitting")?;
    let detail = format!(
        "{n}/10 seeds reached {TARGET} dB; steps needed: {} ({secs:.0}s)",
        summary.join(" ")
    );
    ensure!(n >= 8, "{detail}");
    Ok(detail)
}

fn c7_multichannel() -> Result<String> {
    let start = Instant::now();
    let train: Vec<Tensor32> = (0..20)
        .map(|i| support::natural_image(i, 128, 128))
        .collect();
    let val: Vec<Tensor32> = (100..108)
        .map(|i| support::natural_image(i, 64, 64))
        .collect();
    let mut diffs = Vec::new();
    for seed in 0..10u64 {
        // The default schedule holds 1e-3 throughout its first 50 epochs.
        let plan = TrainPlan {
            epochs: 20,
            lr_phases: vec![LrPhase {
                first_epoch: 1,
                last_epoch: 20,
                learning_rate: 1e-3,
            }],
            seed,
            batch_size: 4,
            patch_size: 32,
            fixed_patches: Some(200),
            ..TrainPlan::default()
        };
        let final_psnr = |channels| -> Result<f64> {
            let out = train_on_images(&msdcnn(channels), &plan, &train, &val)?;
            Ok(out.history.records.last().expect("20 epochs").val_psnr)
        };
        let (p1, p3) = (final_psnr(1)?, final_psnr(3)?);
        eprintln!("criterion 7 seed {seed}: MsDCNN-1 {p1:.3} dB, MsDCNN-3 {p3:.3} dB");
        diffs.push(p3 - p1);
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let wins = diffs.iter().filter(|&&d| d > 0.0).count();
    let listed: Vec<String> = diffs.iter().map(|d| format!("{d:+.2}")).collect();
    let secs = within(start, 3600.0, "multi-channel training")?;
    let detail = format!(
        "mean (C3 − C1) {mean:+.3} dB, C3 ahead in {wins}/10 seeds [{}] ({secs:.0}s)",
        listed.join(" ")
    );
    ensure!(mean >= -0.1 && wins >= 7, "{detail}");
    Ok(detail)
}

fn c8_cost_ordering() -> Result<String> {
    let count = |p| {
        count_parameters(
            &NetworkConfig::new(0.1, 2).with_pattern(p),
            ParamScope::MfeOnly,
        )
    };
    let (d, a, c) = (
        count(PatternPreset::Dilated)?,
        count(PatternPreset::Alternating)?,
        count(PatternPreset::Conv)?,
    );
    ensure!(d < a && a < c, "counts {d}, {a}, {c} not increasing");
    let image = support::natural_image(7, 256, 256);
    let mut times = Vec::new();
    for channels in 1..=3 {
        let net: Network32 = build_network(&msdcnn(channels), 0)?;
        times.push(time_reconstruction(&net, &image, 11)?);
    }
    let detail = format!(
        "counts {d} < {a} < {c}; median forward ms at 256×256: {:.1} / {:.1} / {:.1}",
        times[0], times[1], times[2]
    );
    ensure!(times[0] <= times[1] && times[1] <= times[2], "{detail}");
    Ok(detail)
}

/// δ_K by singular values of every column submatrix.
fn rip_by_svd(phi: &CSMatrix<f64>, k: usize) -> f64 {
    let full = DMatrix::from_row_slice(phi.rows(), phi.cols(), phi.data());
    let mut delta: f64 = 0.0;
    for support in combinations(phi.cols(), k) {
        let sub = full.select_columns(&support);
        for s in sub.singular_values().iter() {
            delta = delta.max((s * s - 1.0).abs());
        }
        if sub.ncols() > sub.nrows() {
            delta = delta.max(1.0);
        }
    }
    delta
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn c9_rip() -> Result<String> {
    for phi in [CSMatrix::<f64>::identity(6), dct_basis::<f64>(8)] {
        for k in 1..=3 {
            let d = rip_constant(&phi, k)?;
            ensure!(
                d.abs() < 1e-12,
                "orthonormal {}×{}: δ_{k} = {d:e}",
                phi.rows(),
                phi.cols()
            );
        }
    }
    let phi = CSMatrix::<f64>::gaussian(4, 8, 11);
    let supports = combinations(8, 2).len();
    let (ours, oracle) = (rip_constant(&phi, 2)?, rip_by_svd(&phi, 2));
    ensure!(
        (ours - oracle).abs() < 1e-10,
        "δ₂ {ours} vs SVD enumeration {oracle}"
    );
    Ok(format!(
        "orthonormal δ = 0; random 4×8 δ₂ = {ours:.12} matches {supports} SVD supports"
    ))
}

fn c10_metrics() -> Result<String> {
    let plane = |v: Vec<f64>| Tensor64::from_vec([1, 1, 16, 16], v).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<f64> = (0..256)
        .map(|_| rng.gen_range(32.0..200.0_f64).round())
        .collect();
    let a = plane(base.clone());
    // Unit MSE: alternate ±1.
    let b = plane(
        base.iter()
            .enumerate()
            .map(|(i, v)| v + if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect(),
    );
    let c = plane(base.iter().map(|v| v + 16.0).collect());
    let expect_unit = 10.0 * (PEAK_8BIT * PEAK_8BIT).log10();
    let expect_16 = 10.0 * (PEAK_8BIT * PEAK_8BIT / 256.0).log10();
    let (p1, p16) = (psnr(&a, &b, PEAK_8BIT)?, psnr(&a, &c, PEAK_8BIT)?);
    ensure!(
        (p1 - expect_unit).abs() < 1e-9 && (p1 - 48.1308).abs() < 5e-5,
        "psnr at MSE 1: {p1}"
    );
    ensure!(
        (p16 - expect_16).abs() < 1e-9 && (p16 - 24.0484).abs() < 5e-5,
        "psnr at diff 16: {p16}"
    );
    let self_ssim = ssim(&a, &a)?;
    ensure!((self_ssim - 1.0).abs() < 1e-12, "ssim(a, a) = {self_ssim}");
    // Constant images: variances and covariance vanish, leaving the luminance term.
    let (c1, c2) = ((0.01 * 255.0_f64).powi(2), (0.03 * 255.0_f64).powi(2));
    let (mx, my) = (100.0, 140.0);
    let closed = (2.0 * mx * my + c1) / (mx * mx + my * my + c1) * c2 / c2;
    let got = ssim(&plane(vec![mx; 256]), &plane(vec![my; 256]))?;
    ensure!(
        (got - closed).abs() < 1e-10,
        "constant-image ssim {got} vs {closed}"
    );
    Ok(format!(
        "psnr {p1:.4} / {p16:.4} dB, ssim(a,a) = {self_ssim}, constant closed form {closed:.10}"
    ))
}

fn c11_schedule() -> Result<String> {
    let plan = TrainPlan::default();
    let lrs: Vec<f64> = [1, 51, 81]
        .iter()
        .map(|&e| lr_at_epoch(&plan, e))
        .collect::<msdcnn::Result<_>>()?;
    ensure!(lrs == [1e-3, 1e-4, 1e-5], "rates {lrs:?}");
    // First step: m̂ = g and v̂ = g², so Δ = −lr·g / (|g| + ε).
    let (p0, g, lr, eps) = ([0.5, -1.25, 2.0, 0.0], [0.3, -2.0, 1e-9, 0.0], 1e-3, 1e-8);
    let mut p = p0.to_vec();
    let mut state = AdamState::<f64>::new(&[4]);
    adam_step(&mut [&mut p[..]], &[g.to_vec()], &mut state, lr)?;
    for i in 0..4 {
        let expect = p0[i] - lr * g[i] / (g[i].abs() + eps);
        ensure!(
            (p[i] - expect).abs() < 1e-9,
            "coordinate {i}: {} vs {expect}",
            p[i]
        );
    }
    Ok(format!("rates {lrs:?}; first Adam step {p:?}"))
}

fn train_once(dir: &Path, manifest: &Path, name: &str) -> Result<Vec<u8>> {
    let args = TrainArgs {
        common: Common {
            seed: Some(42),
            mr: Some(0.1),
            channels: Some(2),
            out: Some(dir.join(name)),
            config: Some(dir.join("run.toml")),
        },
        epochs: Some(2),
        manifest: Some(manifest.to_path_buf()),
        val_manifest: None,
        precision: None,
    };
    let out = cmd_train(&args)?;
    let history = std::fs::read_to_string(&out.history)?;
    ensure!(
        history.lines().filter(|l| !l.starts_with('#')).count() == 2,
        "history:\n{history}"
    );
    load_checkpoint(&out.checkpoint)?;
    Ok(std::fs::read(&out.checkpoint)?)
}

fn c12_determinism() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let mut entries = Vec::new();
    for i in 0..4 {
        support::write_image(dir.path(), &format!("t{i}.pgm"), 900 + i, 64, 96);
        entries.push(("train", format!("t{i}.pgm")));
    }
    support::write_image(dir.path(), "v0.pgm", 950, 64, 64);
    entries.push(("val", "v0.pgm".to_string()));
    let refs: Vec<(&str, &str)> = entries.iter().map(|(s, p)| (*s, p.as_str())).collect();
    let manifest = support::write_manifest(dir.path(), &refs);
    std::fs::write(
        dir.path().join("run.toml"),
        "[train]\nbatch_size = 4\npatch_size = 32\nfixed_patches = 16\n",
    )?;
    let first = train_once(dir.path(), &manifest, "a.ckpt")?;
    let second = train_once(dir.path(), &manifest, "b.ckpt")?;
    ensure!(
        first == second,
        "checkpoints differ ({} vs {} bytes)",
        first.len(),
        second.len()
    );
    Ok(format!(
        "two runs wrote identical {}-byte checkpoints",
        first.len()
    ))
}
