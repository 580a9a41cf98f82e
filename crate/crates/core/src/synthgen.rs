//! Spiked-covariance data generation and Monte Carlo risk oracles.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpcr::{cpcr_fit_with_plan, split, CpcrConfig, SubspaceSource};
use crate::error::{Error, Result};
use crate::estimators::{pcr_fit_with_basis, plsr_fit, ridge_fit, GlmFamily};
use crate::linalg::psd_sqrt;
use crate::rng::{self, gaussian_matrix, gaussian_vector, rademacher_matrix};
use crate::spectral::{estimate_subspace, predictive_power, OrthonormalBasis};

/// Distribution of the diagonal entries of Σs or Σc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EigenSampler {
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
    Values { values: Vec<f64> },
}

impl EigenSampler {
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        let out = match self {
            EigenSampler::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite()) || low > high || *low < 0.0 {
                    return Err(Error::Input(format!("invalid uniform range [{low}, {high}]")));
                }
                (0..count)
                    .map(|_| if low == high { *low } else { rng.random_range(*low..*high) })
                    .collect()
            }
            EigenSampler::Constant { value } => vec![*value; count],
            EigenSampler::Values { values } => {
                if values.len() != count {
                    return Err(Error::Input(format!(
                        "{} eigenvalues given, {count} needed",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        if out.is_empty() {
            return Err(Error::Input("empty spectrum".into()));
        }
        if let Some(v) = out.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Input(format!("eigenvalues must be finite and ≥ 0, got {v}")));
        }
        Ok(out)
    }
}

/// `Σ = U Σs Uᵀ + V Σc Vᵀ`.
#[derive(Debug, Clone)]
pub struct SpikedCovariance {
    u: OrthonormalBasis,
    v: OrthonormalBasis,
    sigma_s: Vec<f64>,
    sigma_c: Vec<f64>,
    sigma: DMatrix<f64>,
    sqrt: DMatrix<f64>,
}

impl SpikedCovariance {
    pub fn new(
        u: OrthonormalBasis,
        v: OrthonormalBasis,
        sigma_s: Vec<f64>,
        sigma_c: Vec<f64>,
    ) -> Result<Self> {
        let p = u.ambient_dim();
        if v.ambient_dim() != p || u.dim() + v.dim() != p {
            return Err(Error::Dimension(format!(
                "U ({}×{}) and V ({}×{}) do not split R^{p}",
                p,
                u.dim(),
                v.ambient_dim(),
                v.dim()
            )));
        }
        if sigma_s.len() != u.dim() || sigma_c.len() != v.dim() {
            return Err(Error::Dimension("diagonal lengths do not match U and V".into()));
        }
        if sigma_s.is_empty() || sigma_c.is_empty() {
            return Err(Error::Input("empty spectrum".into()));
        }
        if let Some(x) = sigma_s.iter().chain(&sigma_c).find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Input(format!("eigenvalues must be finite and ≥ 0, got {x}")));
        }
        let cross = u.columns().transpose() * v.columns();
        if cross.amax() > 1e-10 {
            return Err(Error::Input(format!("UᵀV is not zero (max entry {:e})", cross.amax())));
        }
        let scaled = |b: &OrthonormalBasis, d: &[f64]| {
            DMatrix::from_fn(p, d.len(), |i, j| b.columns()[(i, j)] * d[j]) * b.columns().transpose()
        };
        let raw = scaled(&u, &sigma_s) + scaled(&v, &sigma_c);
        let sigma = (&raw + raw.transpose()) * 0.5;
        let sqrt = psd_sqrt(&sigma);
        Ok(Self {
            u,
            v,
            sigma_s,
            sigma_c,
            sigma,
            sqrt,
        })
    }

    pub fn u(&self) -> &OrthonormalBasis {
        &self.u
    }

    pub fn v(&self) -> &OrthonormalBasis {
        &self.v
    }

    pub fn sigma_s(&self) -> &[f64] {
        &self.sigma_s
    }

    pub fn sigma_c(&self) -> &[f64] {
        &self.sigma_c
    }

    pub fn p(&self) -> usize {
        self.u.ambient_dim()
    }

    pub fn r(&self) -> usize {
        self.u.dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `Σ^{1/2}`.
    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }
}

/// Draws `U, V` from the QR factor of a `p × p` Gaussian matrix and the
/// diagonals from the samplers.
pub fn make_spiked_covariance(
    p: usize,
    r: usize,
    spec_s: &EigenSampler,
    spec_c: &EigenSampler,
    seed: u64,
) -> Result<SpikedCovariance> {
    if r == 0 || r >= p {
        return Err(Error::Parameter(format!("need 1 ≤ r < p, got r = {r}, p = {p}")));
    }
    let mut rng = rng::stream(seed, &[rng::PURPOSE_COVARIANCE]);
    let g = gaussian_matrix(&mut rng, p, p);
    let qr = g.qr();
    let (mut q, rr) = (qr.q(), qr.r());
    // Sign-normalise so Q is Haar distributed.
    for j in 0..p {
        if rr[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let sigma_s = spec_s.sample(r, &mut rng)?;
    let sigma_c = spec_c.sample(p - r, &mut rng)?;
    let u = OrthonormalBasis::from_trusted(q.columns(0, r).into_owned());
    let v = OrthonormalBasis::from_trusted(q.columns(r, p - r).into_owned());
    SpikedCovariance::new(u, v, sigma_s, sigma_c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub gamma_star: DVector<f64>,
    pub kappa_param: f64,
    pub sigma2: f64,
    /// `‖Π_U γ*‖² / ‖γ*‖²` of this draw.
    pub realized_kappa: f64,
    /// `κr / (κr + (1 − κ)(p − r))`, the prior mean of that ratio's
    /// numerator over its denominator.
    pub prior_kappa: f64,
}

/// `γ* ~ N(0, κΠ_U + (1 − κ)Π_V)`.
pub fn sample_gamma_star(cov: &SpikedCovariance, kappa: f64, sigma2: f64, seed: u64) -> Result<GroundTruth> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Parameter(format!("kappa must lie in (0, 1], got {kappa}")));
    }
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::Parameter(format!("sigma2 must be ≥ 0, got {sigma2}")));
    }
    let mut rng = rng::stream(seed, &[rng::PURPOSE_GAMMA]);
    let (p, r) = (cov.p(), cov.r());
    let g1 = gaussian_vector(&mut rng, r);
    let g2 = gaussian_vector(&mut rng, p - r);
    let mut gamma = cov.u().columns() * g1 * kappa.sqrt();
    if kappa < 1.0 {
        gamma += cov.v().columns() * g2 * (1.0 - kappa).sqrt();
    }
    let realized_kappa = predictive_power(&gamma, cov.u())?;
    let rk = kappa * r as f64;
    Ok(GroundTruth {
        gamma_star: gamma,
        kappa_param: kappa,
        sigma2,
        realized_kappa,
        prior_kappa: rk / (rk + (1.0 - kappa) * (p - r) as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignNoise {
    #[default]
    Gaussian,
    Rademacher,
}

pub fn sample_design(cov: &SpikedCovariance, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_design_with(cov, n, DesignNoise::Gaussian, seed)
}

/// `X = Σ^{1/2} Z` with i.i.d. zero-mean unit-variance `Z`.
pub fn sample_design_with(
    cov: &SpikedCovariance,
    n: usize,
    noise: DesignNoise,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Dimension("n must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, &[rng::PURPOSE_DESIGN]);
    let z = match noise {
        DesignNoise::Gaussian => gaussian_matrix(&mut rng, cov.p(), n),
        DesignNoise::Rademacher => rademacher_matrix(&mut rng, cov.p(), n),
    };
    Ok(cov.sqrt() * z)
}

/// `y = Xᵀγ* + ε`, `ε ~ N(0, σ²)`.
pub fn sample_response(x: &DMatrix<f64>, gt: &GroundTruth, seed: u64) -> Result<DVector<f64>> {
    if x.nrows() != gt.gamma_star.len() {
        return Err(Error::Dimension(format!(
            "X has {} features, γ* has {}",
            x.nrows(),
            gt.gamma_star.len()
        )));
    }
    let eps = gaussian_vector(&mut rng::stream(seed, &[rng::PURPOSE_NOISE]), x.ncols());
    Ok(x.transpose() * &gt.gamma_star + eps * gt.sigma2.sqrt())
}

/// `(γ̂ − γ*)ᵀ Σ (γ̂ − γ*)`.
pub fn exact_risk(gamma_hat: &DVector<f64>, gamma_star: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if gamma_hat.len() != gamma_star.len() || sigma.shape() != (gamma_star.len(), gamma_star.len()) {
        return Err(Error::Dimension("γ̂, γ* and Σ dimensions differ".into()));
    }
    let d = gamma_hat - gamma_star;
    Ok(sigma_inner(sigma, &d, &d).max(0.0))
}

fn sigma_inner(sigma: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(sigma * b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Empirical,
    Theoretical,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Empirical => "empirical",
            Provenance::Theoretical => "theoretical",
        }
    }
}

/// Risk of `½(γ̂₁ + γ̂₂)` split into per-fit bias and variance terms.
///
/// `total = ¼(bias_1 + bias_2) + ½ bias_cross + ¼(var_1 + var_2) + ½ var_cross`
/// whenever the parts are present. `var_cross` is the noise covariance of
/// the two calibrated fits; the asymptotic limits set it to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskDecomposition {
    pub bias_1: Option<f64>,
    pub bias_2: Option<f64>,
    pub bias_cross: Option<f64>,
    pub var_1: Option<f64>,
    pub var_2: Option<f64>,
    pub var_cross: Option<f64>,
    pub total: f64,
    pub provenance: Provenance,
    pub replicates: usize,
    pub std_error: Option<f64>,
    pub failures: usize,
}

impl RiskDecomposition {
    pub fn from_parts(
        bias_1: f64,
        bias_2: f64,
        bias_cross: f64,
        var_1: f64,
        var_2: f64,
        var_cross: f64,
        provenance: Provenance,
    ) -> Self {
        Self {
            bias_1: Some(bias_1),
            bias_2: Some(bias_2),
            bias_cross: Some(bias_cross),
            var_1: Some(var_1),
            var_2: Some(var_2),
            var_cross: Some(var_cross),
            total: combine(bias_1, bias_2, bias_cross, var_1, var_2, var_cross),
            provenance,
            replicates: 0,
            std_error: None,
            failures: 0,
        }
    }

    /// A total-only decomposition.
    pub fn total_only(total: f64, provenance: Provenance) -> Self {
        Self {
            bias_1: None,
            bias_2: None,
            bias_cross: None,
            var_1: None,
            var_2: None,
            var_cross: None,
            total,
            provenance,
            replicates: 0,
            std_error: None,
            failures: 0,
        }
    }

    /// `¼(bias_1 + bias_2) + ½ bias_cross`, if available.
    pub fn bias(&self) -> Option<f64> {
        Some(0.25 * (self.bias_1? + self.bias_2?) + 0.5 * self.bias_cross?)
    }

    pub fn variance(&self) -> Option<f64> {
        Some(0.25 * (self.var_1? + self.var_2?) + 0.5 * self.var_cross.unwrap_or(0.0))
    }
}

fn combine(b1: f64, b2: f64, bc: f64, v1: f64, v2: f64, vc: f64) -> f64 {
    0.25 * (b1 + b2) + 0.5 * bc + 0.25 * (v1 + v2) + 0.5 * vc
}

/// Mean and standard error (None for fewer than two values).
pub fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, Some((var / k).sqrt()))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub cov: Arc<SpikedCovariance>,
    pub n: usize,
    pub kappa: f64,
    pub sigma2: f64,
    pub design: DesignNoise,
}

impl Scenario {
    pub fn new(cov: Arc<SpikedCovariance>, n: usize, kappa: f64, sigma2: f64) -> Self {
        Self {
            cov,
            n,
            kappa,
            sigma2,
            design: DesignNoise::Gaussian,
        }
    }

    /// Per-fold sample count used by calibration (`⌊n/2⌋`).
    pub fn n_fold(&self) -> usize {
        self.n / 2
    }
}

/// Where `Û` comes from in a synthetic run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceChoice {
    /// The true `U`, truncated to the requested rank.
    #[default]
    Oracle,
    /// SVD of the Step-1 fold (CPCR) or of all of `X` (PCR).
    PerFold,
    /// SVD of all of `X`.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub r: usize,
    /// Calibration weight on summed losses.
    pub lambda: f64,
    pub subspace: SubspaceChoice,
    pub family: GlmFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SyntheticMethod {
    Cpcr(CalibrationSpec),
    Pcr { r: usize, subspace: SubspaceChoice },
    /// Penalty on summed squared loss.
    Ridge { lambda: f64 },
    Plsr { k: usize },
}

impl SyntheticMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SyntheticMethod::Cpcr(_) => "cpcr",
            SyntheticMethod::Pcr { .. } => "pcr",
            SyntheticMethod::Ridge { .. } => "ridge",
            SyntheticMethod::Plsr { .. } => "plsr",
        }
    }
}

struct Draw {
    gt: GroundTruth,
    x: DMatrix<f64>,
    eps: DVector<f64>,
    split_seed: u64,
}

fn draw(scenario: &Scenario, seed: u64, replicate: usize) -> Result<Draw> {
    let rep = replicate as u64;
    let gt = sample_gamma_star(
        &scenario.cov,
        scenario.kappa,
        scenario.sigma2,
        rng::derive_seed(seed, &[rep, rng::PURPOSE_GAMMA]),
    )?;
    let x = sample_design_with(
        &scenario.cov,
        scenario.n,
        scenario.design,
        rng::derive_seed(seed, &[rep, rng::PURPOSE_DESIGN]),
    )?;
    let eps = gaussian_vector(
        &mut rng::stream(seed, &[rep, rng::PURPOSE_NOISE]),
        scenario.n,
    ) * scenario.sigma2.sqrt();
    Ok(Draw {
        gt,
        x,
        eps,
        split_seed: rng::derive_seed(seed, &[rep, rng::PURPOSE_SPLIT]),
    })
}

fn oracle_basis(cov: &SpikedCovariance, r: usize) -> Result<Arc<OrthonormalBasis>> {
    if r == cov.r() {
        Ok(Arc::new(cov.u().clone()))
    } else {
        Ok(Arc::new(cov.u().truncate(r)?))
    }
}

fn cpcr_config(spec: &CalibrationSpec, cov: &SpikedCovariance, split_seed: u64) -> Result<CpcrConfig> {
    let source = match spec.subspace {
        SubspaceChoice::Oracle => SubspaceSource::Oracle(oracle_basis(cov, spec.r)?),
        SubspaceChoice::PerFold => SubspaceSource::PerFold,
        SubspaceChoice::Pooled => SubspaceSource::Pooled(None),
    };
    Ok(CpcrConfig::new(spec.r, spec.lambda, spec.family)
        .with_source(source)
        .with_seed(split_seed))
}

/// Fits `method` on `(x, y)` and returns its coefficient vector.
pub fn fit_synthetic(
    method: &SyntheticMethod,
    cov: &SpikedCovariance,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    split_seed: u64,
) -> Result<DVector<f64>> {
    match method {
        SyntheticMethod::Cpcr(spec) => {
            if spec.family != GlmFamily::Gaussian {
                return Err(Error::UnsupportedFamily(format!(
                    "synthetic scenarios are gaussian, got {:?}",
                    spec.family
                )));
            }
            let config = cpcr_config(spec, cov, split_seed)?;
            let plan = split(x.ncols(), split_seed)?;
            Ok(cpcr_fit_with_plan(x, y, &config, plan)?.gamma_vector())
        }
        SyntheticMethod::Pcr { r, subspace } => {
            let basis = match subspace {
                SubspaceChoice::Oracle => oracle_basis(cov, *r)?,
                _ => Arc::new(estimate_subspace(x, *r)?),
            };
            pcr_fit_with_basis(x, y, &basis)
        }
        SyntheticMethod::Ridge { lambda } => ridge_fit(x, y, *lambda),
        SyntheticMethod::Plsr { k } => plsr_fit(x, y, *k),
    }
}

/// Per-replicate exact risks of several methods on shared draws.
///
/// Replicate `i` uses streams derived from `(seed, i)` only, so the output
/// is independent of scheduling. Errors are kept per cell.
pub fn monte_carlo_risks(
    scenario: &Scenario,
    methods: &[SyntheticMethod],
    replicates: usize,
    seed: u64,
) -> Vec<Vec<std::result::Result<f64, String>>> {
    let per_rep: Vec<Vec<std::result::Result<f64, String>>> = (0..replicates)
        .into_par_iter()
        .map(|rep| match draw(scenario, seed, rep) {
            Err(e) => vec![Err(e.to_string()); methods.len()],
            Ok(d) => {
                let y = d.x.transpose() * &d.gt.gamma_star + &d.eps;
                methods
                    .iter()
                    .map(|m| {
                        fit_synthetic(m, &scenario.cov, &d.x, &y, d.split_seed)
                            .and_then(|g| exact_risk(&g, &d.gt.gamma_star, scenario.cov.matrix()))
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            }
        })
        .collect();
    // Transpose to method-major order.
    (0..methods.len())
        .map(|j| per_rep.iter().map(|row| row[j].clone()).collect())
        .collect()
}

/// Mean and standard error of per-replicate values, requiring at least 80%
/// successes.
pub fn aggregate(values: &[std::result::Result<f64, String>]) -> Result<RiskDecomposition> {
    let ok: Vec<f64> = values.iter().filter_map(|v| v.as_ref().ok().copied()).collect();
    let failed = values.len() - ok.len();
    if values.is_empty() || ok.is_empty() || (ok.len() as f64) < 0.8 * values.len() as f64 {
        let first = values
            .iter()
            .find_map(|v| v.as_ref().err().cloned())
            .unwrap_or_else(|| "no replicates".into());
        return Err(Error::Replicates {
            failed,
            attempted: values.len(),
            first,
        });
    }
    let (mean, se) = mean_and_se(&ok);
    Ok(RiskDecomposition {
        replicates: ok.len(),
        std_error: se,
        failures: failed,
        ..RiskDecomposition::total_only(mean, Provenance::Empirical)
    })
}

/// Several methods on common draws, aggregated per method.
pub fn monte_carlo_compare(
    scenario: &Scenario,
    methods: &[SyntheticMethod],
    replicates: usize,
    seed: u64,
) -> Vec<Result<RiskDecomposition>> {
    monte_carlo_risks(scenario, methods, replicates, seed)
        .iter()
        .map(|v| aggregate(v))
        .collect()
}

pub fn monte_carlo_risk(
    scenario: &Scenario,
    method: &SyntheticMethod,
    replicates: usize,
    seed: u64,
) -> Result<RiskDecomposition> {
    if replicates == 0 {
        return Err(Error::Parameter("replicates must be at least 1".into()));
    }
    monte_carlo_compare(scenario, std::slice::from_ref(method), replicates, seed)
        .pop()
        .expect("one method")
}

/// Bias and variance parts of CPCR's risk, separated by linearity: the fit
/// is run once on `Xᵀγ*` (no noise) and once on `ε` (no signal) with the
/// same split and subspace.
pub fn empirical_bias_variance(
    scenario: &Scenario,
    spec: &CalibrationSpec,
    replicates: usize,
    seed: u64,
) -> Result<RiskDecomposition> {
    if spec.family != GlmFamily::Gaussian {
        return Err(Error::UnsupportedFamily(format!(
            "bias/variance separation needs a gaussian family, got {:?}",
            spec.family
        )));
    }
    if replicates == 0 {
        return Err(Error::Parameter("replicates must be at least 1".into()));
    }
    let sigma = scenario.cov.matrix();
    let rows: Vec<std::result::Result<[f64; 6], String>> = (0..replicates)
        .into_par_iter()
        .map(|rep| -> std::result::Result<[f64; 6], String> {
            let run = || -> Result<[f64; 6]> {
                let d = draw(scenario, seed, rep)?;
                let config = cpcr_config(spec, &scenario.cov, d.split_seed)?;
                let plan = split(d.x.ncols(), d.split_seed)?;
                let signal = d.x.transpose() * &d.gt.gamma_star;
                let fs = cpcr_fit_with_plan(&d.x, &signal, &config, plan.clone())?;
                let fnoise = cpcr_fit_with_plan(&d.x, &d.eps, &config, plan)?;
                let col = |m: &DMatrix<f64>| m.column(0).into_owned();
                let e1 = col(&fs.folds[0].gamma_calib) - &d.gt.gamma_star;
                let e2 = col(&fs.folds[1].gamma_calib) - &d.gt.gamma_star;
                let n1 = col(&fnoise.folds[0].gamma_calib);
                let n2 = col(&fnoise.folds[1].gamma_calib);
                Ok([
                    sigma_inner(sigma, &e1, &e1),
                    sigma_inner(sigma, &e2, &e2),
                    sigma_inner(sigma, &e1, &e2),
                    sigma_inner(sigma, &n1, &n1),
                    sigma_inner(sigma, &n2, &n2),
                    sigma_inner(sigma, &n1, &n2),
                ])
            };
            run().map_err(|e| e.to_string())
        })
        .collect();
    let ok: Vec<[f64; 6]> = rows.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
    let failed = rows.len() - ok.len();
    if ok.is_empty() || (ok.len() as f64) < 0.8 * rows.len() as f64 {
        return Err(Error::Replicates {
            failed,
            attempted: rows.len(),
            first: rows
                .iter()
                .find_map(|r| r.as_ref().err().cloned())
                .unwrap_or_default(),
        });
    }
    let k = ok.len() as f64;
    let mean = |i: usize| ok.iter().map(|r| r[i]).sum::<f64>() / k;
    let totals: Vec<f64> = ok
        .iter()
        .map(|r| combine(r[0], r[1], r[2], r[3], r[4], r[5]))
        .collect();
    let (_, se) = mean_and_se(&totals);
    let mut out = RiskDecomposition::from_parts(
        mean(0),
        mean(1),
        mean(2),
        mean(3),
        mean(4),
        mean(5),
        Provenance::Empirical,
    );
    out.replicates = ok.len();
    out.std_error = se;
    out.failures = failed;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_background_has_rank_r() {
        let cov = make_spiked_covariance(
            8,
            3,
            &EigenSampler::Uniform { low: 2.0, high: 4.0 },
            &EigenSampler::Constant { value: 0.0 },
            1,
        )
        .unwrap();
        let eig = crate::linalg::sym_eigen_desc(cov.matrix()).0;
        let rank = eig.iter().filter(|v| **v > 1e-10).count();
        assert_eq!(rank, 3);
    }

    #[test]
    fn kappa_one_lies_in_u() {
        let cov = make_spiked_covariance(
            10,
            2,
            &EigenSampler::Constant { value: 3.0 },
            &EigenSampler::Constant { value: 1.0 },
            2,
        )
        .unwrap();
        let gt = sample_gamma_star(&cov, 1.0, 1.0, 3).unwrap();
        assert!((gt.realized_kappa - 1.0).abs() < 1e-12);
        assert!(matches!(sample_gamma_star(&cov, 0.0, 1.0, 3), Err(Error::Parameter(_))));
    }

    #[test]
    fn risk_identity() {
        let d = RiskDecomposition::from_parts(1.0, 2.0, 3.0, 4.0, 5.0, 0.0, Provenance::Empirical);
        assert!((d.total - (0.75 + 1.5 + 2.25)).abs() < 1e-15);
    }

    #[test]
    fn empty_values_rejected() {
        let s = EigenSampler::Values { values: vec![] };
        assert!(s.sample(0, &mut rng::stream(0, &[])).is_err());
    }
}
