//! PCR, PLSR and CPCR on tabular regression data with Nyström features.

use anyhow::{bail, Result};
use cpcr_core::cpcr::{cpcr_fit, predict, CpcrConfig, SubspaceSource};
use cpcr_core::datasets::{load_csv, standardize, train_test_split, NystromMap, TabularDataset};
use cpcr_core::estimators::{pcr_fit, plsr_fit, GlmFamily};
use cpcr_core::rng::derive_seed;
use cpcr_core::{DMatrix, DVector};
use rayon::prelude::*;

use crate::config::{DatasetEntry, LambdaPolicy, LandmarkCount, MethodName, UciBenchConfig};
use crate::report::{Report, ReportRow};

pub const MANIFEST: &str = "\
uci-bench: test RMSE and R^2 over random train/test splits
  table: one row per (dataset, method); metric=rmse and metric=r2 with an empty replicate column hold
         the mean over splits in value and the across-split standard deviation in std_error
  per split: the same metrics with the replicate column set to the split index
  metric=selected_lambda: per-sample CPCR penalty chosen on the holdout (or fixed)
  missing dataset files appear as status=skipped rows
";

const SEED_SPLIT: u64 = 21;
const SEED_HOLDOUT: u64 = 22;
const SEED_LANDMARKS: u64 = 23;
const SEED_CPCR: u64 = 24;

/// Standardized, centered `p × n` train and test features and the train
/// target in standardized units.
struct Prepared {
    train: DMatrix<f64>,
    test: DMatrix<f64>,
    y_train: DVector<f64>,
    y_test_raw: DVector<f64>,
    target_mean: f64,
    target_sd: f64,
}

fn prepare(cfg: &UciBenchConfig, ds: &TabularDataset, train_idx: &[usize], test_idx: &[usize], seed: u64) -> Result<Prepared> {
    let train = standardize(&ds.subset(train_idx))?;
    let record = train.standardization.clone().expect("standardize sets the record");
    let test = record.apply(&ds.subset(test_idx))?;
    let m = match cfg.landmarks {
        LandmarkCount::TrainSize => train.len(),
        LandmarkCount::Fixed { count } => count.min(train.len()),
    };
    let map = NystromMap::fit(&train.features, m, cfg.bandwidth, seed)?;
    let stack = |t: &TabularDataset| -> Result<DMatrix<f64>> {
        let phi = map.transform(&t.features)?;
        if !cfg.include_raw {
            return Ok(phi);
        }
        let raw = t.features.transpose();
        let mut out = DMatrix::zeros(phi.nrows() + raw.nrows(), phi.ncols());
        out.rows_mut(0, phi.nrows()).copy_from(&phi);
        out.rows_mut(phi.nrows(), raw.nrows()).copy_from(&raw);
        Ok(out)
    };
    let mut xtr = stack(&train)?;
    let mut xte = stack(&test)?;
    let means = xtr.column_mean();
    for mut col in xtr.column_iter_mut() {
        col -= &means;
    }
    for mut col in xte.column_iter_mut() {
        col -= &means;
    }
    Ok(Prepared {
        train: xtr,
        test: xte,
        y_train: train.target.clone(),
        y_test_raw: ds.subset(test_idx).target,
        target_mean: record.target_mean,
        target_sd: record.target_scale,
    })
}

fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |i, j| x[(i, idx[j])])
}

fn entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn cpcr_coefficients(x: &DMatrix<f64>, y: &DVector<f64>, r: usize, lambda_bar: f64, seed: u64) -> Result<DMatrix<f64>> {
    let config = CpcrConfig::new(r, lambda_bar * (x.ncols() / 2) as f64, GlmFamily::Gaussian)
        .with_source(SubspaceSource::Pooled(None))
        .with_seed(seed);
    Ok(cpcr_fit(x, y, &config)?.gamma)
}

fn select_lambda(policy: &LambdaPolicy, x: &DMatrix<f64>, y: &DVector<f64>, r: usize, seed: u64) -> Result<f64> {
    match policy {
        LambdaPolicy::Fixed { value } => Ok(*value),
        LambdaPolicy::Auto => bail!("auto selection needs a known covariance"),
        LambdaPolicy::Holdout { grid, fraction } => {
            let n = x.ncols();
            let n_fit = n - ((fraction * n as f64).round() as usize).clamp(1, n - 4);
            let (fit, hold) = train_test_split(n, n_fit, derive_seed(seed, &[SEED_HOLDOUT]))?;
            let (xf, yf) = (columns(x, &fit), entries(y, &fit));
            let (xh, yh) = (columns(x, &hold), entries(y, &hold));
            let mut best: Option<(f64, f64)> = None;
            for &l in grid {
                let Ok(gamma) = cpcr_coefficients(&xf, &yf, r, l, derive_seed(seed, &[SEED_CPCR])) else {
                    continue;
                };
                let err = (xh.transpose() * gamma.column(0) - &yh).norm_squared();
                if best.is_none_or(|b| err < b.1) {
                    best = Some((l, err));
                }
            }
            best.map(|b| b.0).ok_or_else(|| anyhow::anyhow!("every holdout fit failed"))
        }
    }
}

fn scores(pred_std: &DVector<f64>, prep: &Prepared) -> (f64, f64) {
    let pred = pred_std.map(|v| v * prep.target_sd + prep.target_mean);
    let y = &prep.y_test_raw;
    let sse = (&pred - y).norm_squared();
    let ybar = y.mean();
    let sst: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    ((sse / y.len() as f64).sqrt(), 1.0 - sse / sst)
}

/// `(method, rmse, r2, selected λ̄)` per configured method for one split.
type SplitOutcome = Vec<(MethodName, std::result::Result<(f64, f64, Option<f64>), String>)>;

fn run_split(cfg: &UciBenchConfig, ds: &TabularDataset, seed: u64) -> SplitOutcome {
    let n = ds.len();
    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    let prep = train_test_split(n, n_train, derive_seed(seed, &[SEED_SPLIT]))
        .map_err(anyhow::Error::from)
        .and_then(|(tr, te)| prepare(cfg, ds, &tr, &te, derive_seed(seed, &[SEED_LANDMARKS])));
    let prep = match prep {
        Ok(p) => p,
        Err(e) => return cfg.methods.iter().map(|m| (*m, Err(format!("{e:#}")))).collect(),
    };
    let r = cfg.components;
    cfg.methods
        .iter()
        .map(|&m| {
            let fitted: Result<(DVector<f64>, Option<f64>)> = match m {
                MethodName::Pcr => pcr_fit(&prep.train, &prep.y_train, r).map(|g| (g, None)).map_err(Into::into),
                MethodName::Plsr => plsr_fit(&prep.train, &prep.y_train, r).map(|g| (g, None)).map_err(Into::into),
                MethodName::Cpcr => select_lambda(&cfg.cpcr_lambda, &prep.train, &prep.y_train, r, seed).and_then(|l| {
                    let gamma = cpcr_coefficients(&prep.train, &prep.y_train, r, l, derive_seed(seed, &[SEED_CPCR]))?;
                    let pred = predict(&gamma, &prep.test, GlmFamily::Gaussian)?;
                    Ok((pred, Some(l)))
                }),
                MethodName::Ridge => Err(anyhow::anyhow!("ridge is not part of this benchmark")),
            };
            let out = fitted.and_then(|(v, l)| {
                let pred = if m == MethodName::Cpcr { v } else { prep.test.transpose() * v };
                let (rmse, r2) = scores(&pred, &prep);
                if !(rmse.is_finite() && r2.is_finite()) {
                    bail!("non-finite score");
                }
                Ok((rmse, r2, l))
            });
            (m, out.map_err(|e| format!("{e:#}")))
        })
        .collect()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

fn dataset_rows(cfg: &UciBenchConfig, di: usize, entry: &DatasetEntry, seed: u64) -> Vec<ReportRow> {
    let base = ReportRow::metric("").dataset(&entry.name).rank(cfg.components);
    if !entry.path.exists() {
        return vec![base
            .with_metric("rmse")
            .skipped(format!("dataset file {} not found", entry.path.display()))];
    }
    let ds = match load_csv(&entry.path, &entry.target, entry.delimiter as u8) {
        Ok(ds) => ds,
        Err(e) => return vec![base.with_metric("rmse").failed(e.to_string())],
    };
    let splits: Vec<SplitOutcome> = (0..cfg.splits)
        .into_par_iter()
        .map(|s| run_split(cfg, &ds, derive_seed(seed, &[di as u64, s as u64])))
        .collect();
    let mut rows = Vec::new();
    for (j, name) in cfg.methods.iter().enumerate() {
        let row = base.clone().method(name.as_str());
        let (mut rmse, mut r2) = (Vec::new(), Vec::new());
        for (s, outcome) in splits.iter().enumerate() {
            match &outcome[j].1 {
                Ok((e, q, l)) => {
                    rows.push(row.with_metric("rmse").replicate(s).lambda(*l).ok(*e, None));
                    rows.push(row.with_metric("r2").replicate(s).lambda(*l).ok(*q, None));
                    if let Some(l) = l {
                        rows.push(row.with_metric("selected_lambda").replicate(s).ok(*l, None));
                    }
                    rmse.push(*e);
                    r2.push(*q);
                }
                Err(e) => rows.push(row.with_metric("rmse").replicate(s).failed(e.clone())),
            }
        }
        for (metric, vals) in [("rmse", &rmse), ("r2", &r2)] {
            rows.push(if vals.is_empty() {
                row.with_metric(metric).failed("every split failed")
            } else {
                let (mean, sd) = mean_sd(vals);
                let out = row.with_metric(metric).ok(mean, Some(sd));
                if vals.len() < cfg.splits {
                    out.note(format!("{} of {} splits failed", cfg.splits - vals.len(), cfg.splits))
                } else {
                    out
                }
            });
        }
    }
    rows
}

pub fn run(cfg: &UciBenchConfig, seed: u64) -> Result<Report> {
    cfg.validate()?;
    let rows: Vec<Vec<ReportRow>> = cfg
        .datasets
        .par_iter()
        .enumerate()
        .map(|(i, d)| dataset_rows(cfg, i, d, seed))
        .collect();
    let mut report = Report::default();
    report.extend(rows.into_iter().flatten());
    Ok(report)
}
