use std::fs;
use std::path::Path;

use super::{pnm, write_atomic};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Luma on the 16–235 scale from 0–255 RGB:
/// `Y = (65.481·R + 128.553·G + 24.966·B)/255 + 16`.
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    (65.481 * r + 128.553 * g + 24.966 * b) / 255.0 + 16.0
}

/// Decodes PGM/PPM bytes into a `1×1×H×W` tensor in `[0, 1]`. Colour input
/// is reduced to luma first.
pub fn decode_grayscale<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Tensor<T>> {
    let img = pnm::decode(bytes, path)?;
    let max = f64::from(img.maxval);
    let data: Vec<T> = match img.channels {
        1 => img
            .samples
            .iter()
            .map(|&s| T::of(f64::from(s) / max))
            .collect(),
        _ => img
            .samples
            .chunks_exact(3)
            .map(|px| {
                let [r, g, b] = [px[0], px[1], px[2]].map(|s| f64::from(s) / max * 255.0);
                T::of(luminance(r, g, b) / 255.0)
            })
            .collect(),
    };
    Tensor::from_plane(img.height, img.width, data)
}

/// Reads a grayscale (or colour, converted to luma) image scaled to `[0, 1]`.
pub fn load_grayscale<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_grayscale(&bytes, path)
}

/// Quantizes a `[0, 1]` image to 8 bits (clamping, round to nearest).
pub fn to_bytes<T: Scalar>(image: &Tensor<T>) -> Vec<u8> {
    image
        .data()
        .iter()
        .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Writes a single-plane image as an 8-bit binary PGM.
pub fn save_grayscale<T: Scalar>(image: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let d = image.dims();
    if d.n != 1 || d.c != 1 {
        return Err(Error::usage(
            "save_grayscale",
            format!("expected a 1×1×H×W image, got {d}"),
        ));
    }
    write_atomic(path.as_ref(), &pnm::encode_pgm(d.w, d.h, &to_bytes(image)))
}

/// Mirror index into `0..len` without repeating the edge sample.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let m = i % period;
    if m < len {
        m
    } else {
        period - m
    }
}

/// Reflect-pads the right and bottom edges up to the next multiples of
/// `block`. Returns the padded tensor and the original dims for [`crop`].
pub fn pad_to_multiple<T: Scalar>(image: &Tensor<T>, block: usize) -> Result<(Tensor<T>, Dims)> {
    if block == 0 {
        return Err(Error::geometry(
            "pad_to_multiple",
            "block size must be positive",
        ));
    }
    let d = image.dims();
    if d.h == 0 || d.w == 0 {
        return Err(Error::geometry("pad_to_multiple", "empty image"));
    }
    let h = d.h.div_ceil(block) * block;
    let w = d.w.div_ceil(block) * block;
    if (h, w) == (d.h, d.w) {
        return Ok((image.clone(), d));
    }
    let padded = Tensor::from_fn(Dims::new(d.n, d.c, h, w), |n, c, y, x| {
        image.at(n, c, reflect(y, d.h), reflect(x, d.w))
    });
    Ok((padded, d))
}

/// Top-left crop to `dims` (batch and channel counts must agree).
pub fn crop<T: Scalar>(image: &Tensor<T>, dims: Dims) -> Result<Tensor<T>> {
    let d = image.dims();
    if d.n != dims.n || d.c != dims.c || dims.h > d.h || dims.w > d.w {
        return Err(Error::geometry(
            "crop",
            format!("cannot crop {d} to {dims}"),
        ));
    }
    Ok(Tensor::from_fn(dims, |n, c, y, x| image.at(n, c, y, x)))
}
