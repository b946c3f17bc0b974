//! Shared fixtures for the CLI and acceptance tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use msdcnn::io::image::save_grayscale;
use msdcnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Deterministic stand-in for a natural photograph: a smooth field with a
/// falling spectrum, a few hard-edged occluding shapes, and faint sensor
/// noise, quantized to 8 bits.
pub fn natural_image(seed: u64, h: usize, w: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (1..=12)
        .map(|i| {
            let f = i as f64 * 0.012 + rng.gen_range(0.0..0.01);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (
                f * theta.cos(),
                f * theta.sin(),
                rng.gen_range(0.0..std::f64::consts::TAU),
                0.18 / i as f64,
            )
        })
        .collect();
    enum Shape {
        Disc { cy: f64, cx: f64, r: f64 },
        Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
        Half { ny: f64, nx: f64, c: f64 },
    }
    let (hf, wf) = (h as f64, w as f64);
    let shapes: Vec<(Shape, f64)> = (0..5)
        .map(|_| {
            let shape = match rng.gen_range(0..3) {
                0 => Shape::Disc {
                    cy: rng.gen_range(0.0..hf),
                    cx: rng.gen_range(0.0..wf),
                    r: rng.gen_range(0.08..0.3) * hf.min(wf),
                },
                1 => {
                    let (y0, x0) = (rng.gen_range(0.0..hf), rng.gen_range(0.0..wf));
                    Shape::Rect {
                        y0,
                        x0,
                        y1: y0 + rng.gen_range(0.1..0.4) * hf,
                        x1: x0 + rng.gen_range(0.1..0.4) * wf,
                    }
                }
                _ => {
                    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    Shape::Half {
                        ny: a.sin(),
                        nx: a.cos(),
                        c: rng.gen_range(0.3..0.7) * (hf * a.sin().abs() + wf * a.cos().abs()),
                    }
                }
            };
            (shape, rng.gen_range(-0.2..0.2))
        })
        .collect();
    let noise = Normal::new(0.0, 0.006).expect("valid sigma");
    let base: f64 = rng.gen_range(0.35..0.6);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let mut v = base;
            for &(fy, fx, phase, amp) in &waves {
                v += amp * (std::f64::consts::TAU * (fy * yf + fx * xf) + phase).cos();
            }
            for (shape, delta) in &shapes {
                let inside = match *shape {
                    Shape::Disc { cy, cx, r } => (yf - cy).powi(2) + (xf - cx).powi(2) < r * r,
                    Shape::Rect { y0, x0, y1, x1 } => yf >= y0 && yf < y1 && xf >= x0 && xf < x1,
                    Shape::Half { ny, nx, c } => ny * yf + nx * xf > c,
                };
                if inside {
                    v += delta;
                }
            }
            v += noise.sample(&mut rng);
            data.push(((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32);
        }
    }
    Tensor::from_plane(h, w, data).expect("h·w samples")
}

/// Writes `natural_image(seed, h, w)` as an 8-bit PGM and returns its path.
pub fn write_image(dir: &Path, name: &str, seed: u64, h: usize, w: usize) -> PathBuf {
    let path = dir.join(name);
    save_grayscale(&natural_image(seed, h, w), &path).expect("write test image");
    path
}

/// Writes a manifest listing `(split, file name)` pairs relative to `dir`.
pub fn write_manifest(dir: &Path, entries: &[(&str, &str)]) -> PathBuf {
    let path = dir.join("manifest.tsv");
    let text: String = entries.iter().map(|(s, f)| format!("{s}\t{f}\n")).collect();
    std::fs::write(&path, text).expect("write manifest");
    path
}
