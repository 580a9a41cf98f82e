use std::sync::Arc;

use cpcr_core::cpcr::{cpcr_fit, cpcr_fit_with_plan, predict, split, CpcrConfig, SubspaceSource};
use cpcr_core::estimators::{ols_fit, GlmFamily};
use cpcr_core::rng::{gaussian_matrix, gaussian_vector, stream};
use cpcr_core::spectral::{estimate_subspace, OrthonormalBasis};
use cpcr_core::synthgen::{exact_risk, make_spiked_covariance, sample_design, sample_gamma_star, sample_response, EigenSampler};
use cpcr_core::{DMatrix, DVector, Error};
use proptest::prelude::*;

fn toy(p: usize, n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let x = gaussian_matrix(&mut stream(seed, &[1]), p, n);
    let beta = gaussian_vector(&mut stream(seed, &[2]), p);
    let y = x.transpose() * beta + gaussian_vector(&mut stream(seed, &[3]), n) * 0.5;
    (x, y)
}

#[test]
fn split_examples() {
    let plan = split(4, 0).unwrap();
    let mut all: Vec<usize> = plan.fold1.iter().chain(&plan.fold2).copied().collect();
    all.sort_unstable();
    assert_eq!(all, vec![0, 1, 2, 3]);
    assert_eq!((plan.fold1.len(), plan.fold2.len()), (2, 2));

    let odd = split(101, 9).unwrap();
    assert_eq!((odd.fold1.len(), odd.fold2.len()), (51, 50));

    assert_eq!(split(60, 42).unwrap(), split(60, 42).unwrap());
    assert_ne!(split(60, 42).unwrap().fold1, split(60, 43).unwrap().fold1);
    assert!(matches!(split(3, 0), Err(Error::Input(_))));
}

#[test]
fn huge_lambda_gives_averaged_pcr() {
    let (x, y) = toy(30, 80, 1);
    let fit = cpcr_fit(&x, &y, &CpcrConfig::new(4, 1e12, GlmFamily::Gaussian).with_seed(3)).unwrap();
    let avg = (&fit.folds[0].gamma_init + &fit.folds[1].gamma_init) * 0.5;
    let diff = (&fit.gamma - &avg).abs().max();
    assert!(diff < 1e-4, "max deviation {diff}");
}

#[test]
fn record_invariants_hold_exactly() {
    let (x, y) = toy(25, 60, 2);
    let fit = cpcr_fit(&x, &y, &CpcrConfig::new(3, 5.0, GlmFamily::Gaussian)).unwrap();
    assert_eq!(fit.gamma, (&fit.folds[0].gamma_calib + &fit.folds[1].gamma_calib) * 0.5);
    for f in &fit.folds {
        assert_eq!(f.gamma_init, f.basis.columns() * &f.zeta);
    }
}

#[test]
fn noiseless_aligned_signal_is_recovered() {
    let cov = make_spiked_covariance(
        200,
        5,
        &EigenSampler::Uniform { low: 2.0, high: 4.0 },
        &EigenSampler::Uniform { low: 0.0, high: 1.0 },
        4,
    )
    .unwrap();
    let gt = sample_gamma_star(&cov, 1.0, 0.0, 5).unwrap();
    let x = sample_design(&cov, 160, 6).unwrap();
    let y = sample_response(&x, &gt, 7).unwrap();
    let config = CpcrConfig::new(5, 10.0, GlmFamily::Gaussian)
        .with_source(SubspaceSource::Oracle(Arc::new(cov.u().clone())));
    let fit = cpcr_fit(&x, &y, &config).unwrap();
    let risk = exact_risk(&fit.gamma_vector(), &gt.gamma_star, cov.matrix()).unwrap();
    let scale = exact_risk(&DVector::zeros(200), &gt.gamma_star, cov.matrix()).unwrap();
    assert!(risk < 1e-2 * scale, "risk {risk} vs scale {scale}");
}

#[test]
fn swapping_folds_is_bit_exact() {
    let (x, y) = toy(40, 50, 3);
    let basis = Arc::new(estimate_subspace(&x, 4).unwrap());
    let config = CpcrConfig::new(4, 2.5, GlmFamily::Gaussian).with_source(SubspaceSource::Oracle(basis));
    let plan = split(50, 11).unwrap();
    let a = cpcr_fit_with_plan(&x, &y, &config, plan.clone()).unwrap();
    let b = cpcr_fit_with_plan(&x, &y, &config, plan.swapped()).unwrap();
    assert_eq!(a.gamma, b.gamma);
}

#[test]
fn small_lambda_approaches_fold_two_ols() {
    let (x, y) = toy(8, 100, 4);
    let plan = split(100, 0).unwrap();
    let fit = cpcr_fit_with_plan(&x, &y, &CpcrConfig::new(2, 1e-9, GlmFamily::Gaussian), plan.clone()).unwrap();
    let x2 = x.select_columns(&plan.fold2);
    let y2 = DVector::from_iterator(plan.fold2.len(), plan.fold2.iter().map(|&i| y[i]));
    let ols = ols_fit(&x2, &y2).unwrap();
    let diff = (fit.folds[0].gamma_calib.column(0) - &ols).abs().max();
    assert!(diff < 1e-6, "deviation {diff}");
}

#[test]
fn fold_errors_are_annotated() {
    let (x, mut y) = toy(6, 20, 5);
    let config = CpcrConfig::new(2, 1.0, GlmFamily::Bernoulli);
    y[0] = 0.5;
    match cpcr_fit(&x, &y, &config) {
        Err(Error::Fold { .. }) | Err(Error::Input(_)) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        cpcr_fit(&x, &y, &CpcrConfig::new(15, 1.0, GlmFamily::Gaussian)),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn bernoulli_run_produces_valid_predictions() {
    let x = gaussian_matrix(&mut stream(6, &[]), 10, 200);
    let w = gaussian_vector(&mut stream(6, &[1]), 10);
    let y = (x.transpose() * w).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let fit = cpcr_fit(&x, &y, &CpcrConfig::new(3, 1.0, GlmFamily::Bernoulli)).unwrap();
    let pred = predict(&fit.gamma, &x, GlmFamily::Bernoulli).unwrap();
    let acc = pred.iter().zip(y.iter()).filter(|(a, b)| a == b).count() as f64 / 200.0;
    assert!(acc > 0.8, "training accuracy {acc}");
}

#[test]
fn predict_examples() {
    let x0 = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 7.0, 7.0, 7.0]);
    let zero = predict(&DMatrix::zeros(2, 1), &x0, GlmFamily::Gaussian).unwrap();
    assert_eq!(zero, DVector::zeros(3));
    let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    assert_eq!(predict(&e1, &x0, GlmFamily::Gaussian).unwrap().as_slice(), &[1.0, -2.0, 0.5]);
    let logits = DMatrix::from_column_slice(1, 2, &[-3.0, 3.0]);
    let labels = predict(&DMatrix::from_element(1, 1, 1.0), &logits, GlmFamily::Bernoulli).unwrap();
    assert_eq!(labels.as_slice(), &[0.0, 1.0]);
    assert!(matches!(predict(&e1, &DMatrix::zeros(3, 2), GlmFamily::Gaussian), Err(Error::Input(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_is_balanced_partition(n in 4usize..300, seed in any::<u64>()) {
        let plan = split(n, seed).unwrap();
        prop_assert!(plan.fold1.len() - plan.fold2.len() <= 1);
        let mut seen = vec![false; n];
        for &i in plan.fold1.iter().chain(&plan.fold2) {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        prop_assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn estimate_lies_in_spanning_set(seed in 0u64..200) {
        let (x, y) = toy(30, 16, seed);
        let fit = cpcr_fit(&x, &y, &CpcrConfig::new(2, 3.0, GlmFamily::Gaussian).with_seed(seed)).unwrap();
        let parts = [
            fit.folds[0].basis.columns().clone(),
            fit.folds[1].basis.columns().clone(),
            x.clone(),
        ];
        let cols: Vec<_> = parts.iter().flat_map(|m| m.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()).collect();
        let s = DMatrix::from_columns(&cols);
        let svd = s.svd(true, false);
        let tol = 1e-10 * svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol).collect();
        let q = OrthonormalBasis::new(svd.u.unwrap().select_columns(&keep)).unwrap();
        let g = fit.gamma_vector();
        let resid = &g - q.columns() * (q.columns().transpose() * &g);
        prop_assert!(resid.norm() < 1e-8 * g.norm().max(1.0));
    }

    #[test]
    fn affine_in_y_with_fixed_basis(seed in 0u64..200, a in -3.0f64..3.0) {
        let (x, y1) = toy(12, 40, seed);
        let y2 = gaussian_vector(&mut stream(seed, &[9]), 40);
        let basis = Arc::new(estimate_subspace(&x, 3).unwrap());
        let config = CpcrConfig::new(3, 4.0, GlmFamily::Gaussian).with_source(SubspaceSource::Oracle(basis));
        let plan = split(40, seed).unwrap();
        let f = |y: &DVector<f64>| cpcr_fit_with_plan(&x, y, &config, plan.clone()).unwrap().gamma_vector();
        let lhs = f(&(&y1 * a + &y2));
        let rhs = f(&y1) * a + f(&y2);
        prop_assert!((lhs - rhs).abs().max() < 1e-8);
    }
}
