//! Damped Newton solver for `L(y, Xᵀγ) + λ‖γ − γ_init‖²` with logistic or
//! softmax loss.
//!
//! The optimum satisfies `γ − γ_init ∈ col(X)`, so when `p > m` the problem
//! is solved exactly in the reduced coordinates `γ = γ_init + Q b` with
//! `X = QR`; the features become `R` (m × m).

use nalgebra::{DMatrix, DVector};

use super::{check_lambda, check_xy, centered_ridge_fit, FitResult, GlmFamily, GlmOptions};
use crate::error::{ensure_finite_matrix, Error, Result};
use crate::linalg::{max_abs, sym_eigen_desc, thin_qr};

const DENSE_LIMIT: usize = 600;
const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const MAX_CONDITION: f64 = 1e12;

pub fn glm_calibrated_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gamma_init: &DMatrix<f64>,
    family: GlmFamily,
    options: GlmOptions,
) -> Result<FitResult> {
    check_lambda(lambda)?;
    check_xy(x, y)?;
    let (p, m) = x.shape();
    let k = family.outputs();
    if gamma_init.shape() != (p, k) {
        return Err(Error::Input(format!(
            "gamma_init is {}×{}, expected {p}×{k}",
            gamma_init.nrows(),
            gamma_init.ncols()
        )));
    }
    ensure_finite_matrix("gamma_init", gamma_init)?;
    if options.max_iter == 0 || !(options.tol > 0.0) {
        return Err(Error::Parameter("GLM options need tol > 0 and max_iter ≥ 1".into()));
    }

    if family == GlmFamily::Gaussian {
        let init = gamma_init.column(0).into_owned();
        let g = centered_ridge_fit(x, y, lambda, &init)?;
        let resid = y - x.transpose() * &g;
        let diff = &g - &init;
        let objective = resid.norm_squared() + lambda * diff.norm_squared();
        let grad = -2.0 * (x * &resid) + 2.0 * lambda * &diff;
        return Ok(FitResult {
            coefficients: DMatrix::from_column_slice(p, 1, g.as_slice()),
            objective_value: objective,
            iterations: 0,
            converged: true,
            gradient_norm: grad.amax(),
            objective_trace: vec![objective],
        });
    }

    let labels = labels_for(y, family)?;
    let reduce = p > m;
    let (basis, features) = if reduce {
        let (q, r) = thin_qr(x);
        (Some(q), r)
    } else {
        (None, x.clone())
    };
    let offset = x.transpose() * gamma_init;
    let problem = Problem {
        features,
        offset,
        labels,
        family,
        lambda,
    };
    let out = problem.minimize(options);

    let coefficients = match &basis {
        Some(q) => gamma_init + q * &out.b,
        None => gamma_init + &out.b,
    };
    let gradient_norm = match &basis {
        Some(q) => max_abs(&(q * &out.grad)),
        None => max_abs(&out.grad),
    };
    let result = FitResult {
        coefficients,
        objective_value: out.objective,
        iterations: out.iterations,
        converged: out.converged,
        gradient_norm,
        objective_trace: out.trace,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::Convergence {
            iterations: result.iterations,
            gradient_norm: result.gradient_norm,
            last: Box::new(result),
        })
    }
}

/// `L(y, Xᵀγ) + λ‖γ − γ_init‖²` in the original coordinates.
pub fn glm_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gamma_init: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    family: GlmFamily,
) -> Result<f64> {
    Ok(primal(x, y, lambda, gamma_init, family)?.objective(&(gamma - gamma_init)))
}

/// Gradient of `glm_objective` with respect to `γ`.
pub fn glm_gradient(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gamma_init: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    family: GlmFamily,
) -> Result<DMatrix<f64>> {
    Ok(primal(x, y, lambda, gamma_init, family)?.evaluate(&(gamma - gamma_init)).1)
}

fn primal(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    gamma_init: &DMatrix<f64>,
    family: GlmFamily,
) -> Result<Problem> {
    check_xy(x, y)?;
    if family == GlmFamily::Gaussian {
        return Err(Error::UnsupportedFamily("use ridge_objective for the gaussian family".into()));
    }
    if gamma_init.shape() != (x.nrows(), family.outputs()) {
        return Err(Error::Input("gamma_init has the wrong shape".into()));
    }
    Ok(Problem {
        features: x.clone(),
        offset: x.transpose() * gamma_init,
        labels: labels_for(y, family)?,
        family,
        lambda,
    })
}

fn labels_for(y: &DVector<f64>, family: GlmFamily) -> Result<Vec<usize>> {
    let k = match family {
        GlmFamily::Bernoulli => 2,
        GlmFamily::Multinomial { classes } => {
            if classes < 2 {
                return Err(Error::Input("multinomial family needs at least 2 classes".into()));
            }
            classes
        }
        GlmFamily::Gaussian => unreachable!(),
    };
    y.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= 0.0 && v.fract() == 0.0 && (v as usize) < k {
                Ok(v as usize)
            } else {
                Err(Error::Input(format!(
                    "label {v} at sample {i} is not a class index in 0..{k}"
                )))
            }
        })
        .collect()
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

struct Problem {
    /// d × m
    features: DMatrix<f64>,
    /// m × K′
    offset: DMatrix<f64>,
    labels: Vec<usize>,
    family: GlmFamily,
    lambda: f64,
}

struct Outcome {
    b: DMatrix<f64>,
    grad: DMatrix<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// Per-sample curvature: `w_i` for bernoulli, class probabilities for
/// multinomial (`diag(π) − ππᵀ` is formed on the fly).
struct Curvature(DMatrix<f64>);

impl Problem {
    fn dim(&self) -> usize {
        self.features.nrows()
    }

    fn outputs(&self) -> usize {
        self.offset.ncols()
    }

    fn eta(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.offset + self.features.transpose() * b
    }

    fn loss(&self, eta: &DMatrix<f64>) -> f64 {
        match self.family {
            GlmFamily::Bernoulli => self
                .labels
                .iter()
                .enumerate()
                .map(|(i, &y)| softplus(eta[(i, 0)]) - if y == 1 { eta[(i, 0)] } else { 0.0 })
                .sum(),
            _ => self
                .labels
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    let row = eta.row(i);
                    let mx = row.max();
                    let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                    lse - eta[(i, y)]
                })
                .sum(),
        }
    }

    fn objective(&self, b: &DMatrix<f64>) -> f64 {
        self.loss(&self.eta(b)) + self.lambda * b.norm_squared()
    }

    /// Objective, gradient and curvature at `b`.
    fn evaluate(&self, b: &DMatrix<f64>) -> (f64, DMatrix<f64>, Curvature) {
        let eta = self.eta(b);
        let loss = self.loss(&eta);
        let m = eta.nrows();
        let k = eta.ncols();
        let mut resid = DMatrix::zeros(m, k);
        let mut curv = DMatrix::zeros(m, k);
        match self.family {
            GlmFamily::Bernoulli => {
                for i in 0..m {
                    let s = sigmoid(eta[(i, 0)]);
                    resid[(i, 0)] = s - if self.labels[i] == 1 { 1.0 } else { 0.0 };
                    curv[(i, 0)] = s * (1.0 - s);
                }
            }
            _ => {
                for i in 0..m {
                    let mx = eta.row(i).max();
                    let mut z = 0.0;
                    for j in 0..k {
                        let e = (eta[(i, j)] - mx).exp();
                        curv[(i, j)] = e;
                        z += e;
                    }
                    for j in 0..k {
                        curv[(i, j)] /= z;
                        resid[(i, j)] = curv[(i, j)];
                    }
                    resid[(i, self.labels[i])] -= 1.0;
                }
            }
        }
        let grad = &self.features * resid + b * (2.0 * self.lambda);
        (loss + self.lambda * b.norm_squared(), grad, Curvature(curv))
    }

    fn hessian_product(&self, c: &Curvature, v: &DMatrix<f64>) -> DMatrix<f64> {
        let a = self.features.transpose() * v;
        let mut s = DMatrix::zeros(a.nrows(), a.ncols());
        match self.family {
            GlmFamily::Bernoulli => {
                for i in 0..a.nrows() {
                    s[(i, 0)] = c.0[(i, 0)] * a[(i, 0)];
                }
            }
            _ => {
                for i in 0..a.nrows() {
                    let dot: f64 = (0..a.ncols()).map(|j| c.0[(i, j)] * a[(i, j)]).sum();
                    for j in 0..a.ncols() {
                        s[(i, j)] = c.0[(i, j)] * (a[(i, j)] - dot);
                    }
                }
            }
        }
        &self.features * s + v * (2.0 * self.lambda)
    }

    fn dense_hessian(&self, c: &Curvature) -> DMatrix<f64> {
        let d = self.dim();
        let k = self.outputs();
        let m = self.features.ncols();
        let mut h = DMatrix::zeros(d * k, d * k);
        for a in 0..k {
            for b in a..k {
                let mut w = DVector::zeros(m);
                for i in 0..m {
                    w[i] = match self.family {
                        GlmFamily::Bernoulli => c.0[(i, 0)],
                        _ => {
                            let delta = if a == b { c.0[(i, a)] } else { 0.0 };
                            delta - c.0[(i, a)] * c.0[(i, b)]
                        }
                    };
                }
                let fw = DMatrix::from_fn(d, m, |r, i| self.features[(r, i)] * w[i]);
                let block = fw * self.features.transpose();
                h.view_mut((a * d, b * d), (d, d)).copy_from(&block);
                if a != b {
                    h.view_mut((b * d, a * d), (d, d)).copy_from(&block.transpose());
                }
            }
        }
        for i in 0..d * k {
            h[(i, i)] += 2.0 * self.lambda;
        }
        h
    }

    /// Newton direction from a dense Cholesky solve, or `None` when the
    /// Hessian is too ill-conditioned.
    fn dense_direction(&self, c: &Curvature, grad: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let h = self.dense_hessian(c);
        let chol = h.cholesky()?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if !(lo > 0.0) || (hi / lo).powi(2) > MAX_CONDITION {
            return None;
        }
        let g = DVector::from_column_slice(grad.as_slice());
        let step = chol.solve(&(-g));
        Some(DMatrix::from_column_slice(grad.nrows(), grad.ncols(), step.as_slice()))
    }

    fn minimize(&self, options: GlmOptions) -> Outcome {
        let d = self.dim();
        let k = self.outputs();
        let use_dense = d * k <= DENSE_LIMIT;
        let precond = if use_dense {
            None
        } else {
            Some(Preconditioner::new(&self.features, self.family, self.lambda))
        };

        let mut b = DMatrix::zeros(d, k);
        let (mut f, mut grad, mut curv) = self.evaluate(&b);
        let mut trace = vec![f];
        let mut iterations = 0;
        let mut converged = grad.norm() < options.tol;

        while !converged && iterations < options.max_iter {
            iterations += 1;
            let gnorm = grad.norm();
            let mut dir = match &precond {
                None => self.dense_direction(&curv, &grad).unwrap_or_else(|| -&grad),
                Some(pc) => {
                    let forcing = (0.1_f64).min(gnorm.sqrt()) * gnorm;
                    self.pcg(&curv, &grad, pc, forcing, 4 * d * k)
                }
            };
            let mut slope = grad.dot(&dir);
            if !(slope < 0.0) {
                dir = -&grad;
                slope = -gnorm * gnorm;
            }
            let accepted = self
                .line_search(&b, f, gnorm, &dir, slope)
                .or_else(|| self.line_search(&b, f, gnorm, &(-&grad), -gnorm * gnorm));
            let Some(t) = accepted.map(|(t, _)| t) else {
                break;
            };
            b += &dir * t;
            let next = self.evaluate(&b);
            f = next.0;
            grad = next.1;
            curv = next.2;
            trace.push(f);
            converged = grad.norm() < options.tol;
        }
        Outcome {
            b,
            grad,
            objective: f,
            iterations,
            converged,
            trace,
        }
    }

    fn line_search(
        &self,
        b: &DMatrix<f64>,
        f: f64,
        gnorm: f64,
        dir: &DMatrix<f64>,
        slope: f64,
    ) -> Option<(f64, f64)> {
        // Predicted decrease at the rounding level of `f`: judge the full
        // step by the gradient norm.
        let noise = 1e-13 * (1.0 + f.abs());
        if -slope <= noise {
            let (fc, gc, _) = self.evaluate(&(b + dir));
            return (fc <= f + noise && gc.norm() < gnorm).then_some((1.0, fc));
        }
        let mut t = 1.0;
        for _ in 0..MAX_HALVINGS {
            let cand = b + dir * t;
            let fc = self.objective(&cand);
            if fc.is_finite() && fc <= f + ARMIJO * t * slope {
                return Some((t, fc));
            }
            t *= 0.5;
        }
        None
    }

    fn pcg(
        &self,
        c: &Curvature,
        grad: &DMatrix<f64>,
        pc: &Preconditioner,
        tol: f64,
        max_iter: usize,
    ) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(grad.nrows(), grad.ncols());
        let mut r = -grad;
        let mut z = pc.apply(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        for _ in 0..max_iter {
            if r.norm() <= tol {
                break;
            }
            let hp = self.hessian_product(c, &p);
            let php = p.dot(&hp);
            if !(php > 0.0) {
                break;
            }
            let alpha = rz / php;
            x += &p * alpha;
            r -= &hp * alpha;
            z = pc.apply(&r);
            let rz_new = r.dot(&z);
            p = &z + &p * (rz_new / rz);
            rz = rz_new;
        }
        x
    }
}

/// Inverse of the Böhning bound `A ⊗ FFᵀ + 2λI`, with `A = ¼` for
/// bernoulli and `½(I − 11ᵀ/K)` for softmax.
struct Preconditioner {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    family: GlmFamily,
    lambda: f64,
}

impl Preconditioner {
    fn new(features: &DMatrix<f64>, family: GlmFamily, lambda: f64) -> Self {
        let (values, vectors) = sym_eigen_desc(&(features * features.transpose()));
        Self {
            vectors,
            values: values.map(|v| v.max(0.0)),
            family,
            lambda,
        }
    }

    fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut t = self.vectors.transpose() * v;
        let two_l = 2.0 * self.lambda;
        match self.family {
            GlmFamily::Bernoulli => {
                for j in 0..t.nrows() {
                    t[(j, 0)] /= 0.25 * self.values[j] + two_l;
                }
            }
            _ => {
                let k = t.ncols();
                for j in 0..t.nrows() {
                    let mean = t.row(j).sum() / k as f64;
                    let scale = 0.5 * self.values[j] + two_l;
                    for c in 0..k {
                        let centered = t[(j, c)] - mean;
                        t[(j, c)] = centered / scale + mean / two_l;
                    }
                }
            }
        }
        &self.vectors * t
    }
}
