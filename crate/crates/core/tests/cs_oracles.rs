//! Compressive-sensing utilities against nalgebra.

use itertools::Itertools;
use msdcnn::cs::{binomial, dct_basis, rip_constant, symmetric_eigenvalues, CSMatrix};
use msdcnn::Error;
use nalgebra::{DMatrix, SymmetricEigen};

fn to_dmatrix(phi: &CSMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(phi.rows(), phi.cols(), phi.data())
}

fn rip_by_eigen(phi: &CSMatrix<f64>, k: usize) -> f64 {
    let full = to_dmatrix(phi);
    (0..phi.cols())
        .combinations(k)
        .map(|support| {
            let sub = full.select_columns(&support);
            let gram = sub.transpose() * &sub;
            let eig = SymmetricEigen::new(gram).eigenvalues;
            eig.iter().fold(0.0_f64, |d, &l| d.max((l - 1.0).abs()))
        })
        .fold(0.0, f64::max)
}

#[test]
fn rip_matches_eigen_enumeration() {
    for (rows, cols, k, seed) in [(4, 8, 2, 1), (5, 9, 3, 2), (6, 6, 1, 3), (3, 7, 2, 4)] {
        let phi = CSMatrix::<f64>::gaussian(rows, cols, seed);
        let ours = rip_constant(&phi, k).unwrap();
        let oracle = rip_by_eigen(&phi, k);
        assert!(
            (ours - oracle).abs() < 1e-10,
            "{rows}×{cols} K={k}: {ours} vs {oracle}"
        );
    }
}

#[test]
fn orthonormal_bases_are_isometries() {
    let q = dct_basis::<f64>(8);
    let m = to_dmatrix(&q);
    let gram = m.transpose() * &m;
    assert!((gram - DMatrix::identity(8, 8)).amax() < 1e-12);
    for k in 1..=4 {
        assert!(rip_constant(&q, k).unwrap() < 1e-12);
    }
}

#[test]
fn jacobi_eigenvalues_match_nalgebra() {
    let phi = CSMatrix::<f64>::gaussian(7, 5, 9);
    let m = to_dmatrix(&phi);
    let gram = m.transpose() * &m;
    let mut ours = symmetric_eigenvalues(gram.as_slice(), 5);
    let mut theirs: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ours.sort_by(f64::total_cmp);
    theirs.sort_by(f64::total_cmp);
    for (a, b) in ours.iter().zip(&theirs) {
        assert!((a - b).abs() < 1e-10, "{ours:?} vs {theirs:?}");
    }
}

#[test]
fn enumeration_budget_is_enforced() {
    assert_eq!(binomial(8, 2), 28);
    let phi = CSMatrix::<f64>::gaussian(10, 60, 0);
    match rip_constant(&phi, 10) {
        Err(Error::Budget { supports, .. }) => assert_eq!(supports, binomial(60, 10)),
        other => panic!("expected a budget error, got {other:?}"),
    }
}
