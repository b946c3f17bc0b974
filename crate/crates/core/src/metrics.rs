//! Image quality (PSNR, SSIM), reconstruction timing, and the per-image
//! quality report.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::net::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Peak value of 8-bit images.
pub const PEAK_8BIT: f64 = 255.0;

/// Peak signal-to-noise ratio in dB, `10·log₁₀(peak²/MSE)`, computed on the
/// values as given. Identical inputs yield `f64::INFINITY`.
pub fn psnr<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    a.dims().expect_eq(&b.dims(), "psnr")?;
    if a.is_empty() {
        return Err(Error::usage("psnr", "empty images"));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Parameters of single-scale SSIM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: PEAK_8BIT,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let centre = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - centre).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of an `h×w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&line[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over all windows of every plane, with the given parameters.
pub fn ssim_with<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, params: SsimParams) -> Result<f64> {
    const OP: &str = "ssim";
    a.dims().expect_eq(&b.dims(), OP)?;
    let d = a.dims();
    if d.h < params.window || d.w < params.window {
        return Err(Error::geometry(
            OP,
            format!(
                "image {}×{} smaller than the {w}×{w} window",
                d.h,
                d.w,
                w = params.window
            ),
        ));
    }
    let k = gaussian_window(params.window, params.sigma);
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let plane = d.plane_len();
    let (mut total, mut count) = (0.0, 0usize);
    for p in 0..d.n * d.c {
        let x: Vec<f64> = a.data()[p * plane..(p + 1) * plane]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let y: Vec<f64> = b.data()[p * plane..(p + 1) * plane]
            .iter()
            .map(|v| v.as_f64())
            .collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let [mx, my, mxx, myy, mxy] =
            [&x, &y, &xx, &yy, &xy].map(|s| filter_valid(s, d.h, d.w, &k));
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cov = mxy[i] - ux * uy;
            total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Standard SSIM (11×11 Gaussian window, σ = 1.5, K₁ = 0.01, K₂ = 0.03,
/// L = 255) on 0–255 valued images.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ssim_with(a, b, SsimParams::default())
}

/// Maps a `[0, 1]` image to the 0–255 scale, clamping out-of-range values.
pub fn to_byte_scale<T: Scalar>(image: &Tensor<T>) -> Tensor<f64> {
    image.cast::<f64>().map(|v| v.clamp(0.0, 1.0) * PEAK_8BIT)
}

/// PSNR and SSIM of a `[0, 1]` reconstruction against its reference, both
/// scored on the 0–255 scale.
pub fn image_quality<T: Scalar>(
    reconstruction: &Tensor<T>,
    reference: &Tensor<T>,
) -> Result<(f64, f64)> {
    let (r, x) = (to_byte_scale(reconstruction), to_byte_scale(reference));
    Ok((psnr(&r, &x, PEAK_8BIT)?, ssim(&r, &x)?))
}

/// Median of the samples (upper median for even counts).
pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// Median wall time in milliseconds of [`Network::forward`] over `repeats`
/// runs, after one untimed warm-up call.
pub fn time_reconstruction<T: Scalar>(
    net: &Network<T>,
    image: &Tensor<T>,
    repeats: usize,
) -> Result<f64> {
    if repeats < 3 {
        return Err(Error::usage(
            "time_reconstruction",
            "at least 3 repeats are required",
        ));
    }
    net.forward(image)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = net.forward(image)?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(out);
    }
    Ok(median(&times))
}

/// Scores of one reconstructed image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub measurement_rate: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub millis: f64,
}

/// Per-image scores with their arithmetic means.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QualityReport {
    pub rows: Vec<ImageScore>,
}

const REPORT_HEADER: &str = "# name\tmr\tpsnr\tssim\tms";
const MEAN_ROW: &str = "mean";

impl QualityReport {
    pub fn push(&mut self, row: ImageScore) {
        self.rows.push(row);
    }

    fn mean_of(&self, f: impl Fn(&ImageScore) -> f64) -> f64 {
        if self.rows.is_empty() {
            return f64::NAN;
        }
        self.rows.iter().map(f).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_psnr(&self) -> f64 {
        self.mean_of(|r| r.psnr)
    }

    pub fn mean_ssim(&self) -> f64 {
        self.mean_of(|r| r.ssim)
    }

    pub fn mean_millis(&self) -> f64 {
        self.mean_of(|r| r.millis)
    }

    /// Tab-separated table: a header comment, one row per image, and a
    /// final `mean` row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{REPORT_HEADER}").unwrap();
        let mr = self.rows.first().map_or(f64::NAN, |r| r.measurement_rate);
        let rows = self.rows.iter().map(|r| {
            (
                r.name.as_str(),
                r.measurement_rate,
                r.psnr,
                r.ssim,
                r.millis,
            )
        });
        let mean = std::iter::once((
            MEAN_ROW,
            mr,
            self.mean_psnr(),
            self.mean_ssim(),
            self.mean_millis(),
        ));
        for (name, mr, p, q, ms) in rows.chain(mean) {
            writeln!(s, "{name}\t{mr}\t{p:.4}\t{q:.6}\t{ms:.3}").unwrap();
        }
        s
    }

    /// Reads a table written by [`QualityReport::to_text`]. Returns the
    /// report and the parsed mean row `(psnr, ssim, ms)`.
    pub fn parse(text: &str) -> Result<(QualityReport, (f64, f64, f64))> {
        let mut report = QualityReport::default();
        let mut mean = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Validation(format!("report line {}: {what}", i + 1));
            if fields.len() != 5 {
                return Err(bad("expected 5 tab-separated fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("non-numeric field"));
            let (mr, p, q, ms) = (
                num(fields[1])?,
                num(fields[2])?,
                num(fields[3])?,
                num(fields[4])?,
            );
            if fields[0] == MEAN_ROW {
                mean = Some((p, q, ms));
            } else {
                report.push(ImageScore {
                    name: fields[0].to_string(),
                    measurement_rate: mr,
                    psnr: p,
                    ssim: q,
                    millis: ms,
                });
            }
        }
        let mean = mean.ok_or_else(|| Error::Validation("report has no mean row".into()))?;
        Ok((report, mean))
    }
}
