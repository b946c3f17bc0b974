use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-seed for the stream named `label` under `seed`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(seed) ^ h)
}

/// He-normal initialization: i.i.d. `N(0, 2/fan_in)` entries, deterministic
/// per seed. Samples are drawn in `f64` so both precisions see the same
/// values up to rounding.
pub fn he_init<T: Scalar>(dims: impl Into<Dims>, fan_in: usize, seed: u64) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::usage("he_init", "fan_in must be at least 1"));
    }
    let dims = dims.into();
    let normal =
        Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.len())
        .map(|_| T::of(normal.sample(&mut rng)))
        .collect();
    Tensor::from_vec(dims, data)
}
