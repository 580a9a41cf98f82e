//! Logistic regression, PCR and CPCR on embedding features with noisy
//! training labels.

use std::sync::Arc;

use anyhow::{bail, Result};
use cpcr_core::cpcr::{cpcr_fit, predict, CpcrConfig, SubspaceSource};
use cpcr_core::datasets::{flip_labels, load_embeddings, train_test_split, LabeledDataset};
use cpcr_core::estimators::{glm_calibrated_fit, pcr_glm_fit, GlmFamily, GlmOptions};
use cpcr_core::rng::{derive_seed, gaussian_matrix, stream, PURPOSE_DATA, PURPOSE_LABELS};
use cpcr_core::spectral::{estimate_subspace, OrthonormalBasis};
use cpcr_core::synthgen::mean_and_se;
use cpcr_core::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ClassifyConfig, EmbeddingSource, LambdaPolicy};
use crate::report::{Report, ReportRow};

pub const MANIFEST: &str = "\
classify: test accuracy with label flips applied to training labels only
  table: metric=accuracy with an empty replicate column, value = mean over seeds, std_error = standard error
  per seed: metric=accuracy with the replicate column set to the seed index; lambda = selected per-sample penalty
  methods: lr (penalized multinomial logistic regression), pcr (logistic on the top-r PCs), cpcr
";

const METHODS: [&str; 3] = ["lr", "pcr", "cpcr"];
const SEED_FLIP: u64 = 31;
const SEED_HOLDOUT: u64 = 32;
const SEED_CPCR: u64 = 33;

struct Task {
    train: LabeledDataset,
    test: LabeledDataset,
}

/// Class means in a `mean_rank`-dimensional subspace, `nuisance_rank`
/// high-variance directions orthogonal to it, unit isotropic noise.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_embeddings(
    dim: usize,
    classes: usize,
    mean_rank: usize,
    mean_scale: f64,
    nuisance_rank: usize,
    nuisance_sd: f64,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut rng = stream(seed, &[PURPOSE_DATA]);
    let q = gaussian_matrix(&mut rng, dim, nuisance_rank + mean_rank).qr().q();
    let nuisance = q.columns(0, nuisance_rank).into_owned();
    let class_dirs = q.columns(nuisance_rank, mean_rank).into_owned();
    let means = &class_dirs * (gaussian_matrix(&mut rng, mean_rank, classes) * mean_scale);
    let mut draw = |n: usize| -> Result<LabeledDataset> {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let styles = gaussian_matrix(&mut rng, nuisance_rank, n) * nuisance_sd;
        let mut x = gaussian_matrix(&mut rng, dim, n) + &nuisance * styles;
        for (j, &y) in labels.iter().enumerate() {
            let mut col = x.column_mut(j);
            col += means.column(y);
        }
        Ok(LabeledDataset::new(x, labels)?)
    };
    let train = draw(n_train)?;
    let test = draw(n_test)?;
    Ok((train, test))
}

fn load_task(cfg: &ClassifyConfig, seed: u64) -> Result<Task> {
    let (train, test) = match &cfg.source {
        EmbeddingSource::Synthetic {
            dim,
            classes,
            mean_rank,
            mean_scale,
            nuisance_rank,
            nuisance_sd,
            n_train,
            n_test,
        } => synthetic_embeddings(
            *dim,
            *classes,
            *mean_rank,
            *mean_scale,
            *nuisance_rank,
            *nuisance_sd,
            *n_train,
            *n_test,
            seed,
        )?,
        EmbeddingSource::Files { train, test } => (load_embeddings(train)?, load_embeddings(test)?),
    };
    if train.features.nrows() != test.features.nrows() {
        bail!("train and test embeddings have different dimensions");
    }
    let classes = train.classes.max(test.classes);
    if classes < 2 {
        bail!("classification needs at least 2 classes, found {classes}");
    }
    let widen = |mut d: LabeledDataset| {
        d.classes = classes;
        d
    };
    Ok(Task {
        train: widen(train),
        test: widen(test),
    })
}

fn labels_vector(labels: &[usize]) -> DVector<f64> {
    DVector::from_iterator(labels.len(), labels.iter().map(|&l| l as f64))
}

fn accuracy(coefficients: &DMatrix<f64>, x: &DMatrix<f64>, labels: &[usize], family: GlmFamily) -> Result<f64> {
    let pred = predict(coefficients, x, family)?;
    let hits = pred.iter().zip(labels).filter(|(p, l)| **p as usize == **l).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |i, j| x[(i, idx[j])])
}

struct Fitter<'a> {
    family: GlmFamily,
    basis: Option<Arc<OrthonormalBasis>>,
    cfg: &'a ClassifyConfig,
    seed: u64,
}

impl Fitter<'_> {
    fn fit(&self, method: &str, x: &DMatrix<f64>, labels: &[usize], lambda_bar: f64) -> Result<DMatrix<f64>> {
        let y = labels_vector(labels);
        let n = x.ncols();
        let opts = GlmOptions::default();
        match method {
            "lr" => {
                let init = DMatrix::zeros(x.nrows(), self.family.outputs());
                Ok(glm_calibrated_fit(x, &y, lambda_bar * n as f64, &init, self.family, opts)?.coefficients)
            }
            "pcr" => {
                let basis = match &self.basis {
                    Some(b) => b.clone(),
                    None => Arc::new(estimate_subspace(x, self.cfg.r)?),
                };
                Ok(pcr_glm_fit(x, &y, &basis, self.family, self.cfg.pcr_penalty, opts)?.1)
            }
            _ => {
                let source = match &self.basis {
                    Some(b) => SubspaceSource::Oracle(b.clone()),
                    None => SubspaceSource::PerFold,
                };
                let config = CpcrConfig::new(self.cfg.r, lambda_bar * (n / 2) as f64, self.family)
                    .with_source(source)
                    .with_seed(derive_seed(self.seed, &[SEED_CPCR]));
                Ok(cpcr_fit(x, &y, &config)?.gamma)
            }
        }
    }

    fn select(&self, method: &str, policy: &LambdaPolicy, x: &DMatrix<f64>, labels: &[usize]) -> Result<Option<f64>> {
        match policy {
            LambdaPolicy::Fixed { value } => Ok(Some(*value)),
            LambdaPolicy::Auto => bail!("auto selection is not available for classification"),
            LambdaPolicy::Holdout { grid, fraction } => {
                let n = x.ncols();
                let n_fit = n - ((fraction * n as f64).round() as usize).clamp(1, n - 4);
                let (fit, hold) = train_test_split(n, n_fit, derive_seed(self.seed, &[SEED_HOLDOUT]))?;
                let xf = columns(x, &fit);
                let lf: Vec<usize> = fit.iter().map(|&i| labels[i]).collect();
                let xh = columns(x, &hold);
                let lh: Vec<usize> = hold.iter().map(|&i| labels[i]).collect();
                let mut best: Option<(f64, f64)> = None;
                for &l in grid {
                    let Ok(coef) = self.fit(method, &xf, &lf, l) else { continue };
                    let acc = accuracy(&coef, &xh, &lh, self.family)?;
                    if best.is_none_or(|b| acc > b.1) {
                        best = Some((l, acc));
                    }
                }
                best.map(|b| Some(b.0)).ok_or_else(|| anyhow::anyhow!("every holdout fit failed"))
            }
        }
    }
}

/// Accuracy and selected per-sample penalty for each method.
fn run_seed(cfg: &ClassifyConfig, seed: u64) -> Vec<std::result::Result<(f64, Option<f64>), String>> {
    let task = match load_task(cfg, seed) {
        Ok(t) => t,
        Err(e) => return vec![Err(format!("{e:#}")); METHODS.len()],
    };
    let prepared = (|| -> Result<_> {
        let family = GlmFamily::for_classes(task.train.classes)?;
        let noisy = flip_labels(&task.train.labels, task.train.classes, cfg.flip_fraction, derive_seed(seed, &[SEED_FLIP, PURPOSE_LABELS]))?;
        let (ntr, nte) = (task.train.features.ncols(), task.test.features.ncols());
        let mut pooled = DMatrix::zeros(task.train.features.nrows(), ntr + nte);
        pooled.columns_mut(0, ntr).copy_from(&task.train.features);
        pooled.columns_mut(ntr, nte).copy_from(&task.test.features);
        let mean = pooled.column_mean();
        for mut col in pooled.column_iter_mut() {
            col -= &mean;
        }
        let basis = if cfg.pooled_subspace {
            Some(Arc::new(estimate_subspace(&pooled, cfg.r)?))
        } else {
            None
        };
        let xtr = pooled.columns(0, ntr).into_owned();
        let xte = pooled.columns(ntr, nte).into_owned();
        Ok((family, noisy, basis, xtr, xte))
    })();
    let (family, noisy, basis, xtr, xte) = match prepared {
        Ok(v) => v,
        Err(e) => return vec![Err(format!("{e:#}")); METHODS.len()],
    };
    let fitter = Fitter { family, basis, cfg, seed };
    METHODS
        .iter()
        .map(|&m| {
            let run = || -> Result<(f64, Option<f64>)> {
                let lambda = match m {
                    "lr" => fitter.select(m, &cfg.lr_lambda, &xtr, &noisy)?,
                    "cpcr" => fitter.select(m, &cfg.cpcr_lambda, &xtr, &noisy)?,
                    _ => None,
                };
                let coef = fitter.fit(m, &xtr, &noisy, lambda.unwrap_or(cfg.pcr_penalty))?;
                Ok((accuracy(&coef, &xte, &task.test.labels, family)?, lambda))
            };
            run().map_err(|e| format!("{e:#}"))
        })
        .collect()
}

pub fn run(cfg: &ClassifyConfig, seed: u64) -> Result<Report> {
    cfg.validate()?;
    let per_seed: Vec<_> = (0..cfg.seeds)
        .into_par_iter()
        .map(|s| run_seed(cfg, derive_seed(seed, &[s as u64])))
        .collect();
    let mut report = Report::default();
    for (j, method) in METHODS.iter().enumerate() {
        let row = ReportRow::metric("accuracy").method(method).rank(cfg.r);
        let row = if *method == "lr" { ReportRow { rank: None, ..row } } else { row };
        let mut ok = Vec::new();
        for (s, outcome) in per_seed.iter().enumerate() {
            report.push(match &outcome[j] {
                Ok((acc, lambda)) => {
                    ok.push(*acc);
                    row.clone().replicate(s).lambda(*lambda).ok(*acc, None)
                }
                Err(e) => row.clone().replicate(s).failed(e.clone()),
            });
        }
        report.push(if ok.is_empty() {
            row.failed("every seed failed")
        } else {
            let (mean, se) = mean_and_se(&ok);
            let out = row.ok(mean, se);
            if ok.len() < cfg.seeds {
                out.note(format!("{} of {} seeds failed", cfg.seeds - ok.len(), cfg.seeds))
            } else {
                out
            }
        });
    }
    Ok(report)
}
