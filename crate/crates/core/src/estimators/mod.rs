//! Single-pass fitting routines: OLS on projected features, (centered) ridge,
//! the GLM calibration step, PCR and PLS1.
//!
//! Matrices are `features × samples`. Penalties multiply summed losses, so
//! `centered_ridge_fit` minimises `‖y − Xᵀγ‖² + λ‖γ − γ_init‖²`.

mod glm;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite_matrix, ensure_finite_vector, Error, Result};
use crate::linalg::{lstsq_min_norm, spd_solve};
use crate::spectral::{estimate_subspace, OrthonormalBasis};

pub use glm::{glm_calibrated_fit, glm_gradient, glm_objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GlmFamily {
    Gaussian,
    Bernoulli,
    Multinomial { classes: usize },
}

impl GlmFamily {
    /// Number of coefficient columns.
    pub fn outputs(&self) -> usize {
        match self {
            GlmFamily::Multinomial { classes } => *classes,
            _ => 1,
        }
    }

    /// Bernoulli for two classes, multinomial otherwise.
    pub fn for_classes(classes: usize) -> Result<Self> {
        match classes {
            0 | 1 => Err(Error::Input(format!(
                "classification needs at least 2 classes, got {classes}"
            ))),
            2 => Ok(GlmFamily::Bernoulli),
            k => Ok(GlmFamily::Multinomial { classes: k }),
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, GlmFamily::Gaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmOptions {
    /// Stop once the gradient norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// `p × K′` with `K′ = 1` except for multinomial fits.
    pub coefficients: DMatrix<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm of the objective gradient at `coefficients`.
    pub gradient_norm: f64,
    pub objective_trace: Vec<f64>,
}

impl FitResult {
    pub fn coefficient_vector(&self) -> DVector<f64> {
        self.coefficients.column(0).into_owned()
    }
}

/// How `centered_ridge_fit` solves its normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RidgeSolve {
    /// Dual when `p > m`, primal otherwise.
    #[default]
    Auto,
    Primal,
    Dual,
}

fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.ncols() != y.len() {
        return Err(Error::Input(format!(
            "X has {} samples but y has {} entries",
            x.ncols(),
            y.len()
        )));
    }
    ensure_finite_matrix("X", x)?;
    ensure_finite_vector("y", y)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// Least-squares `ζ` minimising `‖y − Zᵀζ‖²`, minimum-norm when `ZZᵀ` is
/// singular.
pub fn ols_fit(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_xy(z, y)?;
    lstsq_min_norm(&z.transpose(), y)
}

pub fn centered_ridge_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gamma_init: &DVector<f64>,
) -> Result<DVector<f64>> {
    centered_ridge_fit_with(x, y, lambda, gamma_init, RidgeSolve::Auto)
}

pub fn centered_ridge_fit_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gamma_init: &DVector<f64>,
    solve: RidgeSolve,
) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    check_xy(x, y)?;
    let (p, m) = x.shape();
    if gamma_init.len() != p {
        return Err(Error::Input(format!(
            "gamma_init has length {}, expected {p}",
            gamma_init.len()
        )));
    }
    ensure_finite_vector("gamma_init", gamma_init)?;
    let dual = match solve {
        RidgeSolve::Auto => p > m,
        RidgeSolve::Primal => false,
        RidgeSolve::Dual => true,
    };
    if dual {
        let mut gram = x.transpose() * x;
        for i in 0..m {
            gram[(i, i)] += lambda;
        }
        let resid = y - x.transpose() * gamma_init;
        let alpha = spd_solve(gram, &DMatrix::from_column_slice(m, 1, resid.as_slice()))?;
        Ok(gamma_init + x * alpha.column(0))
    } else {
        let mut a = x * x.transpose();
        for i in 0..p {
            a[(i, i)] += lambda;
        }
        let rhs = x * y + gamma_init * lambda;
        let sol = spd_solve(a, &DMatrix::from_column_slice(p, 1, rhs.as_slice()))?;
        Ok(sol.column(0).into_owned())
    }
}

pub fn ridge_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    centered_ridge_fit(x, y, lambda, &DVector::zeros(x.nrows()))
}

/// `‖y − Xᵀγ‖² + λ‖γ − γ_init‖²`.
pub fn ridge_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gamma_init: &DVector<f64>,
    gamma: &DVector<f64>,
) -> f64 {
    (y - x.transpose() * gamma).norm_squared() + lambda * (gamma - gamma_init).norm_squared()
}

pub fn pcr_fit(x: &DMatrix<f64>, y: &DVector<f64>, r: usize) -> Result<DVector<f64>> {
    check_xy(x, y)?;
    let basis = estimate_subspace(x, r)?;
    pcr_fit_with_basis(x, y, &basis)
}

/// `Û · ols_fit(ÛᵀX, y)` for a given basis.
pub fn pcr_fit_with_basis(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    basis: &OrthonormalBasis,
) -> Result<DVector<f64>> {
    let z = basis.coordinates(x)?;
    let zeta = ols_fit(&z, y)?;
    Ok(basis.columns() * zeta)
}

/// PCR with a GLM loss on the projected features. Returns `(ζ̂, Ûζ̂)`.
///
/// `penalty` is a ridge weight on `ζ`; it keeps the fit finite on
/// separable data. The gaussian family ignores it and uses OLS.
pub fn pcr_glm_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    basis: &OrthonormalBasis,
    family: GlmFamily,
    penalty: f64,
    options: GlmOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let z = basis.coordinates(x)?;
    let zeta = match family {
        GlmFamily::Gaussian => {
            let v = ols_fit(&z, y)?;
            DMatrix::from_column_slice(v.len(), 1, v.as_slice())
        }
        _ => {
            let init = DMatrix::zeros(basis.dim(), family.outputs());
            glm_calibrated_fit(&z, y, penalty, &init, family, options)?.coefficients
        }
    };
    let gamma = basis.columns() * &zeta;
    Ok((zeta, gamma))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlsFit {
    pub coefficients: DVector<f64>,
    /// `p × k` weight vectors; columns past `components` are zero.
    pub weights: DMatrix<f64>,
    pub loadings: DMatrix<f64>,
    pub y_loadings: DVector<f64>,
    /// Components actually extracted; fewer than `k` when the remaining
    /// covariance with `y` vanishes.
    pub components: usize,
}

pub fn plsr_fit(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    Ok(plsr_fit_detailed(x, y, k)?.coefficients)
}

/// PLS1 by NIPALS with deflation of `X` only. Inputs are expected centered.
pub fn plsr_fit_detailed(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<PlsFit> {
    check_xy(x, y)?;
    let (p, m) = x.shape();
    if k == 0 || k > p.min(m) {
        return Err(Error::Dimension(format!(
            "k = {k} must lie in 1..={} for a {p}×{m} matrix",
            p.min(m)
        )));
    }
    let ymean = y.mean();
    if y.iter().all(|v| (v - ymean).abs() <= 1e-300) {
        return Err(Error::Input("y has zero variance".into()));
    }
    // Work in samples × features.
    let mut xs = x.transpose();
    let scale = xs.norm() * y.norm();
    let mut weights = DMatrix::zeros(p, k);
    let mut loadings = DMatrix::zeros(p, k);
    let mut y_loadings = DVector::zeros(k);
    let mut a = 0;
    while a < k {
        let w = xs.transpose() * y;
        let wn = w.norm();
        if wn <= 1e-12 * scale {
            break;
        }
        let w = w / wn;
        let t = &xs * &w;
        let tt = t.norm_squared();
        if tt <= 0.0 {
            break;
        }
        let pa = xs.transpose() * &t / tt;
        y_loadings[a] = y.dot(&t) / tt;
        xs -= &t * pa.transpose();
        weights.set_column(a, &w);
        loadings.set_column(a, &pa);
        a += 1;
    }
    let coefficients = if a == 0 {
        DVector::zeros(p)
    } else {
        let w = weights.columns(0, a).into_owned();
        let pw = loadings.columns(0, a).transpose() * &w;
        let q = y_loadings.rows(0, a).into_owned();
        let sol = pw
            .lu()
            .solve(&q)
            .ok_or_else(|| Error::Solver("singular PᵀW in PLS".into()))?;
        w * sol
    };
    Ok(PlsFit {
        coefficients,
        weights,
        loadings,
        y_loadings,
        components: a,
    })
}
