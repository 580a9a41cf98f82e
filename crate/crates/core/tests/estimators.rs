use cpcr_core::estimators::{
    centered_ridge_fit, centered_ridge_fit_with, glm_calibrated_fit, glm_gradient, glm_objective,
    ols_fit, pcr_fit, plsr_fit, plsr_fit_detailed, ridge_fit, GlmFamily, GlmOptions, RidgeSolve,
};
use cpcr_core::rng::{gaussian_matrix, gaussian_vector, stream};
use cpcr_core::spectral::{estimate_subspace, projector};
use cpcr_core::{DMatrix, DVector, Error};
use proptest::prelude::*;
use rand::Rng;

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn gm(seed: u64, r: usize, c: usize) -> DMatrix<f64> {
    gaussian_matrix(&mut stream(seed, &[]), r, c)
}

fn gv(seed: u64, n: usize) -> DVector<f64> {
    gaussian_vector(&mut stream(seed, &[99]), n)
}

#[test]
fn ols_identity_design() {
    let mut z = DMatrix::zeros(3, 7);
    for i in 0..3 {
        z[(i, i)] = 1.0;
    }
    let y = DVector::from_vec(vec![1.5, -2.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
    let zeta = ols_fit(&z, &y).unwrap();
    assert!((zeta - DVector::from_vec(vec![1.5, -2.0, 4.0])).amax() < 1e-12);
}

#[test]
fn ols_matches_normal_equations() {
    let z = gm(1, 5, 40);
    let y = gv(1, 40);
    let zeta = ols_fit(&z, &y).unwrap();
    let oracle = (&z * z.transpose()).try_inverse().unwrap() * (&z * &y);
    assert!(rel(&zeta, &oracle) < 1e-8);
}

#[test]
fn ols_rejects_non_finite() {
    let mut z = gm(1, 2, 5);
    z[(0, 0)] = f64::INFINITY;
    assert!(matches!(ols_fit(&z, &gv(1, 5)), Err(Error::Input(_))));
}

#[test]
fn centered_ridge_infinite_penalty_returns_center() {
    let x = gm(2, 15, 8);
    let y = gv(2, 8);
    let g = gv(3, 15);
    let fit = centered_ridge_fit(&x, &y, 1e12, &g).unwrap();
    assert!(rel(&fit, &g) < 1e-4);
}

#[test]
fn centered_ridge_vanishing_penalty_interpolates() {
    let (p, m) = (20, 5);
    let x = gm(4, p, m);
    let y = gv(4, m);
    let g = gv(5, p);
    let fit = centered_ridge_fit(&x, &y, 1e-10, &g).unwrap();
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let interp = &x * &xtx_inv * &y;
    let pi_col = &x * &xtx_inv * x.transpose();
    let oracle = interp + (DMatrix::identity(p, p) - pi_col) * &g;
    assert!(rel(&fit, &oracle) < 1e-4);
}

#[test]
fn dual_and_primal_agree() {
    for &(p, m) in &[(30, 10), (10, 30), (200, 60)] {
        let x = gm(p as u64, p, m);
        let y = gv(7, m);
        let g = gv(8, p);
        let a = centered_ridge_fit_with(&x, &y, 0.7, &g, RidgeSolve::Primal).unwrap();
        let b = centered_ridge_fit_with(&x, &y, 0.7, &g, RidgeSolve::Dual).unwrap();
        assert!(rel(&a, &b) < 1e-8, "p={p} m={m}");
    }
}

#[test]
fn ridge_examples() {
    // Orthonormal rows: OLS solution is X y.
    let q = gm(9, 10, 10).qr().q();
    let x = q.rows(0, 4).into_owned();
    let y = gv(9, 10);
    let fit = ridge_fit(&x, &y, 1e-12).unwrap();
    assert!(rel(&fit, &(&x * &y)) < 1e-9);
    assert!(ridge_fit(&x, &y, 1e15).unwrap().amax() < 1e-12);

    let x = gm(10, 10, 6);
    let y = gv(10, 6);
    let fit = ridge_fit(&x, &y, 0.3).unwrap();
    let direct = (&x * x.transpose() + DMatrix::identity(10, 10) * 0.3)
        .lu()
        .solve(&(&x * &y))
        .unwrap();
    assert!((fit - direct).amax() < 1e-9);
}

#[test]
fn pcr_full_rank_equals_ols() {
    let x = gm(12, 6, 30);
    let y = gv(12, 30);
    let fit = pcr_fit(&x, &y, 6).unwrap();
    assert!(rel(&fit, &ols_fit(&x, &y).unwrap()) < 1e-8);
}

#[test]
fn pcr_rank_one_support() {
    let mut x = DMatrix::zeros(4, 9);
    x.set_row(0, &gv(13, 9).transpose());
    let fit = pcr_fit(&x, &gv(14, 9), 1).unwrap();
    assert!(fit.rows(1, 3).amax() == 0.0);
    assert!(fit[0] != 0.0);
}

#[test]
fn pcr_matches_two_step_oracle() {
    // Spiked instance: a strong 3-dimensional direction plus noise.
    let (p, n, r) = (50, 30, 3);
    let spikes = gm(15, p, r) * gm(16, r, n) * 3.0;
    let x = spikes + gm(17, p, n);
    let y = gv(15, n);
    let fit = pcr_fit(&x, &y, r).unwrap();
    let svd = x.clone().svd(true, false);
    let u = svd.u.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let uh = u.select_columns(&order[..r]);
    let z = uh.transpose() * &x;
    let zeta = (&z * z.transpose()).try_inverse().unwrap() * (&z * &y);
    let oracle_resid = &y - x.transpose() * (&uh * zeta);
    let resid = &y - x.transpose() * &fit;
    assert!((resid - oracle_resid).amax() < 1e-8);
}

#[test]
fn pls_full_rank_equals_ols() {
    let mut x = gm(18, 5, 40);
    let mut y = gv(18, 40);
    for i in 0..5 {
        let m = x.row(i).mean();
        x.row_mut(i).add_scalar_mut(-m);
    }
    y.add_scalar_mut(-y.mean());
    let fit = plsr_fit(&x, &y, 5).unwrap();
    assert!(rel(&fit, &ols_fit(&x, &y).unwrap()) < 1e-6);
}

#[test]
fn pls_zero_covariance() {
    let x = gm(19, 4, 12);
    // Project a random y onto the orthogonal complement of the rows of X.
    let y0 = gv(19, 12);
    let xt = x.transpose();
    let hat = &xt * (x.clone() * &xt).try_inverse().unwrap() * &x;
    let y = &y0 - hat * &y0;
    let fit = plsr_fit_detailed(&x, &y, 2).unwrap();
    assert!(fit.weights.column(0).norm() < 1e-10);
    assert!(fit.coefficients.amax() < 1e-10);
    assert_eq!(fit.components, 0);
}

fn bernoulli_problem(seed: u64, p: usize, m: usize) -> (DMatrix<f64>, DVector<f64>) {
    let x = gm(seed, p, m);
    let w = gv(seed + 1, p);
    let eta = x.transpose() * w;
    let mut rng = stream(seed, &[5]);
    let y = eta.map(|e| if rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()) { 1.0 } else { 0.0 });
    (x, y)
}

#[test]
fn glm_infinite_penalty_returns_center() {
    let (x, y) = bernoulli_problem(20, 30, 20);
    let g = DMatrix::from_column_slice(30, 1, gv(21, 30).as_slice());
    let fit = glm_calibrated_fit(&x, &y, 1e12, &g, GlmFamily::Bernoulli, GlmOptions::default()).unwrap();
    assert!((&fit.coefficients - &g).norm() / g.norm() < 1e-4);
}

#[test]
fn glm_optimum_beats_perturbations_and_gradient_matches_differences() {
    let (x, y) = bernoulli_problem(22, 30, 20);
    let g0 = DMatrix::from_column_slice(30, 1, (gv(23, 30) * 0.1).as_slice());
    let lambda = 0.5;
    let fam = GlmFamily::Bernoulli;
    let fit = glm_calibrated_fit(&x, &y, lambda, &g0, fam, GlmOptions::default()).unwrap();
    assert!(fit.converged && fit.gradient_norm < 1e-8);
    let f0 = glm_objective(&x, &y, lambda, &g0, &fit.coefficients, fam).unwrap();
    let mut rng = stream(24, &[]);
    for _ in 0..1000 {
        let dir = DMatrix::from_fn(30, 1, |_, _| rng.random::<f64>() - 0.5);
        let cand = &fit.coefficients + dir * (1e-3 / 0.5);
        assert!(glm_objective(&x, &y, lambda, &g0, &cand, fam).unwrap() >= f0);
    }
    // Central differences at a generic point.
    let at = DMatrix::from_column_slice(30, 1, gv(25, 30).as_slice());
    let grad = glm_gradient(&x, &y, lambda, &g0, &at, fam).unwrap();
    let h = 1e-5;
    for j in 0..30 {
        let mut a = at.clone();
        let mut b = at.clone();
        a[(j, 0)] += h;
        b[(j, 0)] -= h;
        let fd = (glm_objective(&x, &y, lambda, &g0, &a, fam).unwrap()
            - glm_objective(&x, &y, lambda, &g0, &b, fam).unwrap())
            / (2.0 * h);
        assert!((fd - grad[(j, 0)]).abs() <= 1e-5 * grad[(j, 0)].abs().max(1.0), "coordinate {j}");
    }
}

#[test]
fn multinomial_gradient_and_solver() {
    let (p, m, k) = (12, 40, 4);
    let x = gm(26, p, m);
    let mut rng = stream(26, &[]);
    let y = DVector::from_fn(m, |_, _| rng.random_range(0..k) as f64);
    let fam = GlmFamily::Multinomial { classes: k };
    let g0 = DMatrix::zeros(p, k);
    let at = gm(27, p, k) * 0.3;
    let grad = glm_gradient(&x, &y, 0.2, &g0, &at, fam).unwrap();
    let h = 1e-5;
    for j in 0..p {
        for c in 0..k {
            let mut a = at.clone();
            let mut b = at.clone();
            a[(j, c)] += h;
            b[(j, c)] -= h;
            let fd = (glm_objective(&x, &y, 0.2, &g0, &a, fam).unwrap()
                - glm_objective(&x, &y, 0.2, &g0, &b, fam).unwrap())
                / (2.0 * h);
            assert!((fd - grad[(j, c)]).abs() <= 1e-5 * grad[(j, c)].abs().max(1.0));
        }
    }
    let fit = glm_calibrated_fit(&x, &y, 0.2, &g0, fam, GlmOptions::default()).unwrap();
    assert!(fit.converged);
    let check = glm_gradient(&x, &y, 0.2, &g0, &fit.coefficients, fam).unwrap();
    assert!(check.amax() < 1e-7);
}

#[test]
fn newton_cg_path_for_large_reduced_problems() {
    // p > m and m·K above the dense limit: reduced coordinates plus PCG.
    let (p, m, k) = (300, 160, 5);
    let x = gm(28, p, m);
    let mut rng = stream(28, &[]);
    let y = DVector::from_fn(m, |_, _| rng.random_range(0..k) as f64);
    let fam = GlmFamily::Multinomial { classes: k };
    let g0 = gm(29, p, k) * 0.05;
    let fit = glm_calibrated_fit(&x, &y, 3.0, &g0, fam, GlmOptions::default()).unwrap();
    assert!(fit.converged);
    let grad = glm_gradient(&x, &y, 3.0, &g0, &fit.coefficients, fam).unwrap();
    assert!(grad.amax() < 1e-7);
    for w in fit.objective_trace.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn convergence_error_carries_last_iterate() {
    let (x, y) = bernoulli_problem(30, 10, 40);
    let opts = GlmOptions { tol: 1e-14, max_iter: 1 };
    match glm_calibrated_fit(&x, &y, 1.0, &DMatrix::zeros(10, 1), GlmFamily::Bernoulli, opts) {
        Err(Error::Convergence { iterations, last, .. }) => {
            assert_eq!(iterations, 1);
            assert_eq!(last.coefficients.shape(), (10, 1));
            assert!(!last.converged);
        }
        other => panic!("expected a convergence error, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn centered_ridge_is_affine_in_y(seed in 0u64..1000, p in 2usize..30, m in 2usize..30, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = gm(seed, p, m);
        let g = gv(seed + 1, p);
        let y1 = gv(seed + 2, m);
        let y2 = gv(seed + 3, m);
        let f = |y: &DVector<f64>| centered_ridge_fit(&x, y, 0.8, &g).unwrap();
        let lhs = f(&(&y1 * a + &y2 * b));
        let rhs = f(&y1) * a + f(&y2) * b + f(&DVector::zeros(m)) * (1.0 - a - b);
        prop_assert!((lhs - &rhs).amax() <= 1e-8 * rhs.amax().max(1.0));
    }

    #[test]
    fn shrinkage_monotone_toward_center(seed in 0u64..1000, l1 in 0.01f64..10.0, factor in 1.0f64..100.0) {
        let x = gm(seed, 12, 8);
        let y = gv(seed, 8);
        let g = gv(seed + 7, 12);
        let d1 = (centered_ridge_fit(&x, &y, l1, &g).unwrap() - &g).norm();
        let d2 = (centered_ridge_fit(&x, &y, l1 * factor, &g).unwrap() - &g).norm();
        prop_assert!(d2 <= d1 * (1.0 + 1e-12));
    }

    #[test]
    fn pcr_lies_in_basis_span(seed in 0u64..1000, r in 1usize..5) {
        let x = gm(seed, 15, 10);
        let y = gv(seed, 10);
        let fit = pcr_fit(&x, &y, r).unwrap();
        let pi = projector(&estimate_subspace(&x, r).unwrap());
        prop_assert!((&fit - pi.apply(&fit)).norm() < 1e-10);
    }

    #[test]
    fn dual_primal_agreement(seed in 0u64..1000, p in 1usize..200, m in 1usize..60, lambda in 0.01f64..50.0) {
        let x = gm(seed, p, m);
        let y = gv(seed, m);
        let g = gv(seed + 1, p);
        let a = centered_ridge_fit_with(&x, &y, lambda, &g, RidgeSolve::Primal).unwrap();
        let b = centered_ridge_fit_with(&x, &y, lambda, &g, RidgeSolve::Dual).unwrap();
        prop_assert!((&a - &b).norm() <= 1e-8 * a.norm().max(1e-12));
    }

    #[test]
    fn glm_objective_non_increasing(seed in 0u64..500, lambda in 0.01f64..10.0) {
        let (x, y) = bernoulli_problem(seed, 8, 25);
        let fit = glm_calibrated_fit(&x, &y, lambda, &DMatrix::zeros(8, 1), GlmFamily::Bernoulli, GlmOptions::default()).unwrap();
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }
}
