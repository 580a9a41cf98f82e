use cpcr_core::rng::{gaussian_matrix, stream};
use cpcr_core::spectral::{estimate_subspace, predictive_power, projector, OrthonormalBasis};
use cpcr_core::{DMatrix, DVector};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn random_basis(p: usize, k: usize, seed: u64) -> OrthonormalBasis {
    let g = gaussian_matrix(&mut stream(seed, &[]), p, p);
    let q = g.qr().q();
    OrthonormalBasis::new(q.columns(0, k).into_owned()).unwrap()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

#[test]
fn top_singular_vectors_match_gram_eigenvectors() {
    let x = gaussian_matrix(&mut stream(11, &[]), 50, 30);
    let b = estimate_subspace(&x, 5).unwrap();
    let eig = SymmetricEigen::new(&x * x.transpose());
    let mut order: Vec<usize> = (0..50).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    for (col, &src) in order.iter().take(5).enumerate() {
        let v = eig.eigenvectors.column(src).into_owned();
        let u = b.columns().column(col).into_owned();
        let angle = (&v - &u * u.dot(&v)).norm().asin();
        assert!(angle < 1e-8, "column {col}: angle {angle}");
    }
}

#[test]
fn embedding_sized_basis_is_orthonormal() {
    let x = gaussian_matrix(&mut stream(2, &[]), 768, 120);
    let b = estimate_subspace(&x, 8).unwrap();
    assert_eq!(b.columns().shape(), (768, 8));
    let gram = b.columns().transpose() * b.columns();
    assert!(max_abs(&(gram - DMatrix::identity(8, 8))) < 1e-10);
}

#[test]
fn wide_matrix_path_agrees_with_direct_svd() {
    // n > 2p takes the QR route.
    let x = gaussian_matrix(&mut stream(3, &[]), 12, 100);
    let b = estimate_subspace(&x, 4).unwrap();
    let svd = x.clone().svd(true, false);
    let u = svd.u.unwrap();
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    for (col, &src) in order.iter().take(4).enumerate() {
        let cos = b.columns().column(col).dot(&u.column(src)).abs();
        assert!((1.0 - cos) < 1e-12);
    }
}

#[test]
fn projector_examples() {
    let full = OrthonormalBasis::coordinate(4, &[0, 1, 2, 3]).unwrap();
    assert_eq!(projector(&full).matrix(), &DMatrix::identity(4, 4));
    let b = random_basis(10, 3, 5);
    let pi = projector(&b);
    assert!((pi.trace() - 3.0).abs() < 1e-8);
    let m = pi.matrix();
    assert!(max_abs(&(m * m - m)) < 1e-12);
}

#[test]
fn predictive_power_extremes() {
    let b = random_basis(6, 2, 8);
    let inside = b.columns() * DVector::from_vec(vec![0.3, -1.2]);
    assert!((predictive_power(&inside, &b).unwrap() - 1.0).abs() < 1e-12);
    let full = random_basis(6, 6, 8);
    let outside = full.columns().column(4).into_owned();
    assert!(predictive_power(&outside, &b).unwrap() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_idempotent_symmetric(seed in 0u64..1000, p in 2usize..12, frac in 0.0f64..1.0) {
        let k = 1 + ((p - 1) as f64 * frac) as usize;
        let pi = projector(&random_basis(p, k, seed));
        let m = pi.matrix();
        prop_assert!(max_abs(&(m * m - m)) < 1e-10);
        prop_assert!(max_abs(&(m - m.transpose())) < 1e-10);
    }

    #[test]
    fn disjoint_projectors_annihilate(seed in 0u64..1000, p in 3usize..12) {
        let full = random_basis(p, p, seed);
        let k = p / 2;
        let b1 = OrthonormalBasis::new(full.columns().columns(0, k).into_owned()).unwrap();
        let b2 = OrthonormalBasis::new(full.columns().columns(k, p - k).into_owned()).unwrap();
        let prod = projector(&b1).matrix() * projector(&b2).matrix();
        prop_assert!(max_abs(&prod) < 1e-10);
    }

    #[test]
    fn predictive_power_scale_invariant(seed in 0u64..1000, c in prop::sample::select(vec![-3.0, -0.1, 0.5, 7.0])) {
        let b = random_basis(7, 3, seed);
        let g = cpcr_core::rng::gaussian_vector(&mut stream(seed, &[1]), 7);
        let a = predictive_power(&g, &b).unwrap();
        let s = predictive_power(&(g * c), &b).unwrap();
        prop_assert!((a - s).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn subspace_invariant_to_sample_permutation(seed in 0u64..500) {
        let x = gaussian_matrix(&mut stream(seed, &[]), 9, 14);
        let mut perm: Vec<usize> = (0..14).collect();
        perm.reverse();
        perm.swap(0, 5);
        let xp = x.select_columns(&perm);
        let a = projector(&estimate_subspace(&x, 3).unwrap());
        let b = projector(&estimate_subspace(&xp, 3).unwrap());
        prop_assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-9);
    }
}
