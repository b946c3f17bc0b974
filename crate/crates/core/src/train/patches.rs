use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, Transform};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

/// Crops a `patch×patch` window at `(top, left)` from a single-image tensor.
pub fn crop_patch<T: Scalar>(
    image: &Tensor<T>,
    top: usize,
    left: usize,
    patch: usize,
) -> Tensor<T> {
    Tensor::from_fn(Dims::new(1, 1, patch, patch), |_, _, y, x| {
        image.at(0, 0, top + y, left + x)
    })
}

/// Draws `count` uniformly placed square crops from uniformly chosen images,
/// each optionally passed through a random rotation/flip. Images smaller
/// than the patch are skipped with a warning.
pub fn sample_patches<T: Scalar, R: Rng>(
    images: &[Tensor<T>],
    patch: usize,
    count: usize,
    augmentation: bool,
    rng: &mut R,
) -> Result<Tensor<T>> {
    const OP: &str = "sample_patches";
    if images.is_empty() {
        return Err(Error::usage(OP, "no training images"));
    }
    if patch == 0 {
        return Err(Error::usage(OP, "patch size must be positive"));
    }
    let eligible: Vec<&Tensor<T>> = images
        .iter()
        .filter(|img| {
            let d = img.dims();
            let ok = d.h >= patch && d.w >= patch;
            if !ok {
                log::warn!(
                    "skipping {}×{} image smaller than the {patch}×{patch} patch",
                    d.h,
                    d.w
                );
            }
            ok
        })
        .collect();
    if eligible.is_empty() {
        return Err(Error::usage(
            OP,
            format!("every image is smaller than the {patch}×{patch} patch"),
        ));
    }
    let transforms = Transform::all();
    let mut out = Vec::with_capacity(count * patch * patch);
    for _ in 0..count {
        let img = eligible[rng.gen_range(0..eligible.len())];
        let d = img.dims();
        let top = rng.gen_range(0..=d.h - patch);
        let left = rng.gen_range(0..=d.w - patch);
        let mut p = crop_patch(img, top, left, patch);
        if augmentation {
            p = augment(&p, transforms[rng.gen_range(0..transforms.len())]);
        }
        out.extend_from_slice(p.data());
    }
    Tensor::from_vec(Dims::new(count, 1, patch, patch), out)
}

/// [`sample_patches`] with a fresh generator seeded by `seed`.
pub fn sample_patches_seeded<T: Scalar>(
    images: &[Tensor<T>],
    patch: usize,
    count: usize,
    augmentation: bool,
    seed: u64,
) -> Result<Tensor<T>> {
    sample_patches(
        images,
        patch,
        count,
        augmentation,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}
