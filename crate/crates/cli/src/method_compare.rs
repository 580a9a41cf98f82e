//! CPCR against PCR, ridge and PLSR over a κ sweep or a Σc-mean sweep.

use anyhow::Result;
use cpcr_core::estimators::GlmFamily;
use cpcr_core::rng::derive_seed;
use cpcr_core::synthgen::{monte_carlo_risks, CalibrationSpec, EigenSampler, Scenario, SyntheticMethod};
use rayon::prelude::*;

use crate::config::{MethodCompareConfig, MethodName, Sweep};
use crate::report::{Report, ReportRow};
use crate::synthetic::{
    covariance, cpcr_lambda, ls_slope, monte_carlo_rows, optimum_rows, reported_lambda, ridge_lambda, sample_count,
    SEED_MONTE_CARLO,
};

pub const MANIFEST: &str = "\
method-compare: risk of CPCR and baselines on shared draws
  kappa sweep figure: x = kappa, y = metric=mean_risk (value +/- 2*std_error), one curve per method
  spectrum sweep figure: x = dataset column (\"sigma_c_mean=<m>\"), same y; metric=slope gives the least-squares slope per method
  per-replicate risks: metric=risk with the replicate column
  lambda column: per-sample penalty (CPCR: weight / floor(n/2); ridge: weight / n)
";

struct Point {
    kappa: f64,
    spectrum_c: EigenSampler,
    label: Option<String>,
    mean: Option<f64>,
}

fn points(cfg: &MethodCompareConfig) -> Vec<Point> {
    match &cfg.sweep {
        Sweep::Kappa { values } => values
            .iter()
            .map(|&kappa| Point {
                kappa,
                spectrum_c: cfg.spectrum_c.clone(),
                label: None,
                mean: None,
            })
            .collect(),
        Sweep::SpectrumMean { means, half_width, kappa } => means
            .iter()
            .map(|&m| Point {
                kappa: *kappa,
                spectrum_c: EigenSampler::Uniform {
                    low: m - half_width,
                    high: m + half_width,
                },
                label: Some(format!("sigma_c_mean={m}")),
                mean: Some(m),
            })
            .collect(),
    }
}

fn point_rows(cfg: &MethodCompareConfig, seed: u64, idx: usize, point: &Point) -> (Vec<ReportRow>, Vec<Option<f64>>) {
    let mut base = ReportRow::metric("").c(cfg.c).kappa(point.kappa);
    if let Some(label) = &point.label {
        base = base.dataset(label);
    }
    let fail_all = |e: anyhow::Error| {
        let rows = cfg
            .methods
            .iter()
            .map(|m| ReportRow { metric: "mean_risk".into(), ..base.clone() }.method(m.as_str()).failed(format!("{e:#}")))
            .collect();
        (rows, vec![None; cfg.methods.len()])
    };
    let cov = match covariance(cfg.p, cfg.r, &cfg.spectrum_s, &point.spectrum_c, seed) {
        Ok(cov) => cov,
        Err(e) => return fail_all(e),
    };
    let scenario = Scenario::new(cov, sample_count(cfg.p, cfg.c), point.kappa, cfg.sigma2);

    let mut rows = Vec::new();
    let mut methods = Vec::new();
    let mut runnable = Vec::new();
    for name in &cfg.methods {
        let row = base.clone().method(name.as_str());
        let method = match name {
            MethodName::Cpcr => cpcr_lambda(&cfg.cpcr_lambda, &scenario, cfg.lambda_bracket).map(|(l, opt)| {
                if let Some(opt) = opt {
                    rows.extend(optimum_rows(&row.clone().lambda(Some(l)).rank(cfg.r), &opt));
                }
                SyntheticMethod::Cpcr(CalibrationSpec {
                    r: cfg.r,
                    lambda: l * scenario.n_fold() as f64,
                    subspace: cfg.subspace,
                    family: GlmFamily::Gaussian,
                })
            }),
            MethodName::Pcr => Ok(SyntheticMethod::Pcr {
                r: cfg.r,
                subspace: cfg.subspace,
            }),
            MethodName::Ridge => ridge_lambda(&cfg.ridge_lambda, &scenario, cfg.lambda_bracket).map(|l| {
                SyntheticMethod::Ridge {
                    lambda: l * scenario.n as f64,
                }
            }),
            MethodName::Plsr => Ok(SyntheticMethod::Plsr { k: cfg.r }),
        };
        match method {
            Ok(m) => {
                runnable.push(methods.len());
                methods.push(Some(m));
            }
            Err(e) => {
                rows.push(ReportRow { metric: "mean_risk".into(), ..row }.failed(format!("{e:#}")));
                methods.push(None);
            }
        }
    }
    let to_run: Vec<SyntheticMethod> = methods.iter().flatten().copied().collect();
    let mc_seed = derive_seed(seed, &[SEED_MONTE_CARLO, idx as u64]);
    let values = monte_carlo_risks(&scenario, &to_run, cfg.replicates, mc_seed);
    let mut means = vec![None; cfg.methods.len()];
    for (slot, (j, m)) in runnable.iter().zip(to_run.iter()).enumerate() {
        let mut row = base.clone().method(m.name()).lambda(reported_lambda(m, &scenario));
        if !matches!(m, SyntheticMethod::Ridge { .. }) {
            row = row.rank(cfg.r);
        }
        let (mc_rows, agg) = monte_carlo_rows(&row, &values[slot]);
        rows.extend(mc_rows);
        means[*j] = agg.map(|a| a.0);
    }
    (rows, means)
}

pub fn run(cfg: &MethodCompareConfig, seed: u64) -> Result<Report> {
    cfg.validate()?;
    let pts = points(cfg);
    let results: Vec<(Vec<ReportRow>, Vec<Option<f64>>)> =
        pts.par_iter().enumerate().map(|(i, p)| point_rows(cfg, seed, i, p)).collect();
    let mut report = Report::default();
    for (rows, _) in &results {
        report.extend(rows.iter().cloned());
    }
    if let Sweep::SpectrumMean { kappa, .. } = &cfg.sweep {
        for (j, name) in cfg.methods.iter().enumerate() {
            let curve: Vec<(f64, f64)> = pts
                .iter()
                .zip(&results)
                .filter_map(|(p, (_, means))| Some((p.mean?, means[j]?)))
                .collect();
            let row = ReportRow::metric("slope").method(name.as_str()).c(cfg.c).kappa(*kappa);
            report.push(match ls_slope(&curve) {
                Some(s) if curve.len() == pts.len() => row.ok(s, None),
                Some(s) => row.ok(s, None).note("some sweep points failed"),
                None => row.skipped("fewer than two sweep points"),
            });
        }
    }
    Ok(report)
}
