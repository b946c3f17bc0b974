//! Whole-network shapes, counts and measurement semantics.

use msdcnn::cs::{block_measure, kernels_to_matrix};
use msdcnn::net::{measurement_kernel_count, receptive_field};
use msdcnn::{
    build_network, count_parameters, Network32, Network64, NetworkConfig, ParamScope, PatternPreset,
};
use msdcnn::{Tensor32, Tensor64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(seed: u64, h: usize, w: usize) -> Tensor64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor64::from_fn([1, 1, h, w], |_, _, _, _| rng.gen_range(0.0..1.0))
}

#[test]
fn table_counts() {
    let count = |p| {
        count_parameters(
            &NetworkConfig::new(0.1, 2).with_pattern(p),
            ParamScope::MfeOnly,
        )
        .unwrap()
    };
    assert_eq!(count(PatternPreset::Dilated), 55_872);
    assert_eq!(count(PatternPreset::Conv), 105_536);
    assert_eq!(count(PatternPreset::Alternating), 88_640);
}

#[test]
fn full_count_matches_built_network() {
    for mr in [0.01, 0.04, 0.1, 0.25] {
        for c in 1..=3 {
            let cfg = NetworkConfig::new(mr, c);
            let net: Network32 = build_network(&cfg, 0).unwrap();
            assert_eq!(
                net.param_count(),
                count_parameters(&cfg, ParamScope::Full).unwrap()
            );
        }
    }
}

#[test]
fn kernel_counts_floor_the_rate() {
    assert_eq!(measurement_kernel_count(0.10, 32).unwrap(), 102);
    assert_eq!(measurement_kernel_count(0.04, 32).unwrap(), 40);
    assert_eq!(measurement_kernel_count(0.01, 32).unwrap(), 10);
    assert_eq!(measurement_kernel_count(0.25, 32).unwrap(), 256);
    assert_eq!([1, 2, 3].map(receptive_field), [3, 5, 7]);
}

#[test]
fn output_has_input_shape() {
    for c in 1..=3 {
        let net: Network32 = build_network(&NetworkConfig::new(0.1, c), 1).unwrap();
        let x: Tensor32 = image(c as u64, 64, 96).cast();
        assert_eq!(net.forward(&x).unwrap().dims(), x.dims());
        let odd: Tensor32 = image(9, 37, 50).cast();
        assert_eq!(net.reconstruct(&odd).unwrap().dims(), odd.dims());
    }
}

#[test]
fn measurement_is_a_block_matrix_product() {
    for (b, mr) in [(2, 0.5), (4, 0.25), (32, 0.1)] {
        let cfg = NetworkConfig {
            block_size: b,
            measurement_rate: mr,
            ..NetworkConfig::new(mr, 1)
        };
        let net: Network64 = build_network(&cfg, 5).unwrap();
        let x = image(b as u64, 3 * b, 2 * b);
        let y = net.measure(&x).unwrap();
        let phi = kernels_to_matrix(net.measurement_weights()).unwrap();
        assert_eq!(phi.rows(), measurement_kernel_count(mr, b).unwrap());
        for (i, block) in block_measure(&x, &phi, b).unwrap().iter().enumerate() {
            for (k, v) in block.iter().enumerate() {
                assert!((y.at(0, k, i / 2, i % 2) - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn seeds_determine_weights() {
    let cfg = NetworkConfig::new(0.1, 2);
    let a: Network32 = build_network(&cfg, 4).unwrap();
    let b: Network32 = build_network(&cfg, 4).unwrap();
    let c: Network32 = build_network(&cfg, 5).unwrap();
    assert_eq!(a.flat_params(), b.flat_params());
    assert_ne!(a.flat_params(), c.flat_params());
}

#[test]
fn f32_and_f64_networks_agree() {
    let net: Network64 = build_network(&NetworkConfig::new(0.1, 2), 2).unwrap();
    let x = image(2, 64, 64);
    let y64 = net.forward(&x).unwrap();
    let y32: Tensor64 = net.cast::<f32>().forward(&x.cast()).unwrap().cast();
    assert!(y32.max_abs_diff(&y64).unwrap() < 1e-3);
}
