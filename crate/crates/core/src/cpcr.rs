//! Calibrated PCR: split, fit PCR on one half, calibrate on the other half
//! with a penalty centered at the PCR fit, exchange the halves, average.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{ensure_finite_matrix, ensure_finite_vector, Error, Result};
use crate::estimators::{
    glm_calibrated_fit, pcr_glm_fit, FitResult, GlmFamily, GlmOptions,
};
use crate::rng;
use crate::spectral::{estimate_subspace, OrthonormalBasis};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub fold1: Vec<usize>,
    pub fold2: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    /// The same plan with the folds exchanged.
    pub fn swapped(&self) -> SplitPlan {
        SplitPlan {
            fold1: self.fold2.clone(),
            fold2: self.fold1.clone(),
            seed: self.seed,
        }
    }

    pub fn len(&self) -> usize {
        self.fold1.len() + self.fold2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.fold1.iter().chain(&self.fold2) {
            if i >= n || seen[i] {
                return Err(Error::Input(format!(
                    "split plan index {i} is out of range or repeated (n = {n})"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Input("split plan does not cover every sample".into()));
        }
        if self.fold1.len().abs_diff(self.fold2.len()) > 1 || self.fold1.len() < 2 || self.fold2.len() < 2 {
            return Err(Error::Input(format!(
                "fold sizes {} and {} are not a balanced split",
                self.fold1.len(),
                self.fold2.len()
            )));
        }
        Ok(())
    }
}

/// Uniformly random balanced partition; for odd `n` the extra sample goes to
/// fold 1. Indices within each fold are sorted.
pub fn split(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < 4 {
        return Err(Error::Input(format!("need at least 4 samples to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[rng::PURPOSE_SPLIT]));
    let n1 = n.div_ceil(2);
    let mut fold1 = idx[..n1].to_vec();
    let mut fold2 = idx[n1..].to_vec();
    fold1.sort_unstable();
    fold2.sort_unstable();
    Ok(SplitPlan { fold1, fold2, seed })
}

#[derive(Debug, Clone)]
pub enum SubspaceSource {
    /// Estimate `Û` on the fold used for Step 1.
    PerFold,
    /// Estimate `Û` once, from the given unlabeled features or, when
    /// `None`, from all of `X`.
    Pooled(Option<Arc<DMatrix<f64>>>),
    /// Use a known basis; only its first `r` columns are kept.
    Oracle(Arc<OrthonormalBasis>),
}

#[derive(Debug, Clone)]
pub struct CpcrConfig {
    pub r: usize,
    /// Calibration weight on `‖γ − γ_init‖²`.
    pub lambda: f64,
    pub family: GlmFamily,
    pub subspace_source: SubspaceSource,
    pub seed: u64,
    pub glm: GlmOptions,
    /// Ridge weight on `ζ` in the classification Step 1.
    pub step1_penalty: f64,
}

impl CpcrConfig {
    pub fn new(r: usize, lambda: f64, family: GlmFamily) -> Self {
        Self {
            r,
            lambda,
            family,
            subspace_source: SubspaceSource::PerFold,
            seed: 0,
            glm: GlmOptions::default(),
            step1_penalty: 1e-6,
        }
    }

    pub fn with_source(mut self, source: SubspaceSource) -> Self {
        self.subspace_source = source;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Parameter("r must be at least 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.step1_penalty > 0.0) {
            return Err(Error::Parameter("step1_penalty must be positive".into()));
        }
        Ok(())
    }
}

/// One Step-1/Step-2 pipeline: PCR on one fold, calibration on the other.
#[derive(Debug, Clone)]
pub struct FoldRecord {
    pub basis: Arc<OrthonormalBasis>,
    /// `r × K′`
    pub zeta: DMatrix<f64>,
    /// `Û ζ̂`, `p × K′`
    pub gamma_init: DMatrix<f64>,
    pub gamma_calib: DMatrix<f64>,
    /// Solver diagnostics of the calibration step.
    pub calibration: FitResult,
}

#[derive(Debug, Clone)]
pub struct CpcrFit {
    /// `½(γ̂₁ + γ̂₂)`, `p × K′`
    pub gamma: DMatrix<f64>,
    pub folds: [FoldRecord; 2],
    pub split: SplitPlan,
    pub config: CpcrConfig,
}

impl CpcrFit {
    /// First coefficient column; the whole estimate for single-output fits.
    pub fn gamma_vector(&self) -> DVector<f64> {
        self.gamma.column(0).into_owned()
    }
}

pub fn cpcr_fit(x: &DMatrix<f64>, y: &DVector<f64>, config: &CpcrConfig) -> Result<CpcrFit> {
    let plan = split(x.ncols(), config.seed)?;
    cpcr_fit_with_plan(x, y, config, plan)
}

pub fn cpcr_fit_with_plan(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &CpcrConfig,
    plan: SplitPlan,
) -> Result<CpcrFit> {
    config.validate()?;
    let (p, n) = x.shape();
    if y.len() != n {
        return Err(Error::Input(format!("X has {n} samples but y has {} entries", y.len())));
    }
    ensure_finite_matrix("X", x)?;
    ensure_finite_vector("y", y)?;
    plan.validate(n)?;

    let shared = match &config.subspace_source {
        SubspaceSource::PerFold => {
            let limit = p.min(plan.fold1.len().min(plan.fold2.len()));
            if config.r > limit {
                return Err(Error::Dimension(format!(
                    "r = {} exceeds min(p, fold size) = {limit}",
                    config.r
                )));
            }
            None
        }
        SubspaceSource::Pooled(features) => {
            let source = features.as_deref().unwrap_or(x);
            if source.nrows() != p {
                return Err(Error::Input(format!(
                    "unlabeled features have {} rows, expected {p}",
                    source.nrows()
                )));
            }
            Some(Arc::new(estimate_subspace(source, config.r)?))
        }
        SubspaceSource::Oracle(basis) => {
            if basis.ambient_dim() != p {
                return Err(Error::Input(format!(
                    "oracle basis lives in dimension {}, expected {p}",
                    basis.ambient_dim()
                )));
            }
            if basis.dim() == config.r {
                Some(basis.clone())
            } else {
                Some(Arc::new(basis.truncate(config.r)?))
            }
        }
    };

    let xs = [select_columns(x, &plan.fold1), select_columns(x, &plan.fold2)];
    let ys = [select_rows(y, &plan.fold1), select_rows(y, &plan.fold2)];
    let run = |k: usize| {
        fold_pipeline(&xs[k], &ys[k], &xs[1 - k], &ys[1 - k], shared.clone(), config)
            .map_err(|e| e.in_fold(k + 1))
    };
    let (a, b) = rayon::join(|| run(0), || run(1));
    let (a, b) = (a?, b?);
    let gamma = (&a.gamma_calib + &b.gamma_calib) * 0.5;
    Ok(CpcrFit {
        gamma,
        folds: [a, b],
        split: plan,
        config: config.clone(),
    })
}

fn fold_pipeline(
    x_fit: &DMatrix<f64>,
    y_fit: &DVector<f64>,
    x_cal: &DMatrix<f64>,
    y_cal: &DVector<f64>,
    shared: Option<Arc<OrthonormalBasis>>,
    config: &CpcrConfig,
) -> Result<FoldRecord> {
    let basis = match shared {
        Some(b) => b,
        None => Arc::new(estimate_subspace(x_fit, config.r)?),
    };
    let (zeta, gamma_init) = pcr_glm_fit(
        x_fit,
        y_fit,
        &basis,
        config.family,
        config.step1_penalty,
        config.glm,
    )?;
    let calibration = glm_calibrated_fit(x_cal, y_cal, config.lambda, &gamma_init, config.family, config.glm)?;
    Ok(FoldRecord {
        basis,
        zeta,
        gamma_init,
        gamma_calib: calibration.coefficients.clone(),
        calibration,
    })
}

pub(crate) fn select_columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_columns(idx)
}

pub(crate) fn select_rows(y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]))
}

/// `X0ᵀγ`, `m × K′`.
pub fn linear_predictor(coefficients: &DMatrix<f64>, x0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if coefficients.nrows() != x0.nrows() {
        return Err(Error::Input(format!(
            "coefficients have {} rows, X0 has {} features",
            coefficients.nrows(),
            x0.nrows()
        )));
    }
    Ok(x0.transpose() * coefficients)
}

/// Linear predictor for gaussian fits, class labels otherwise.
pub fn predict(coefficients: &DMatrix<f64>, x0: &DMatrix<f64>, family: GlmFamily) -> Result<DVector<f64>> {
    if coefficients.ncols() != family.outputs() {
        return Err(Error::Input(format!(
            "{} coefficient columns do not match the family ({} expected)",
            coefficients.ncols(),
            family.outputs()
        )));
    }
    let eta = linear_predictor(coefficients, x0)?;
    Ok(match family {
        GlmFamily::Gaussian => eta.column(0).into_owned(),
        GlmFamily::Bernoulli => eta.column(0).map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        GlmFamily::Multinomial { .. } => DVector::from_iterator(
            eta.nrows(),
            eta.row_iter().map(|row| row.transpose().argmax().0 as f64),
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_small_and_odd() {
        let plan = split(4, 0).unwrap();
        let mut all: Vec<usize> = plan.fold1.iter().chain(&plan.fold2).copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(plan.fold1.len(), 2);
        let odd = split(101, 9).unwrap();
        assert_eq!((odd.fold1.len(), odd.fold2.len()), (51, 50));
        assert_eq!(split(101, 9).unwrap(), odd);
        assert!(matches!(split(3, 0), Err(Error::Input(_))));
    }

    #[test]
    fn predictions() {
        let x0 = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 9.0, 9.0, 9.0]);
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let out = predict(&e1, &x0, GlmFamily::Gaussian).unwrap();
        assert_eq!(out.as_slice(), &[1.0, -2.0, 0.5]);
        let zero = predict(&DMatrix::zeros(2, 1), &x0, GlmFamily::Gaussian).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let logits = DMatrix::from_row_slice(1, 2, &[-3.0, 3.0]);
        let labels = predict(&DMatrix::from_element(1, 1, 1.0), &logits, GlmFamily::Bernoulli).unwrap();
        assert_eq!(labels.as_slice(), &[0.0, 1.0]);
        assert!(predict(&DMatrix::zeros(3, 1), &x0, GlmFamily::Gaussian).is_err());
    }
}
