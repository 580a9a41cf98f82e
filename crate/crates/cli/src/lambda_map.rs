//! Normalized theoretical risk over a `(κ, λ̄)` grid and the `λ̄*(κ)` trace.

use anyhow::Result;
use cpcr_core::rmt::{optimal_lambda, theoretical_risk, RmtInput};
use rayon::prelude::*;

use crate::config::LambdaMapConfig;
use crate::report::{Report, ReportRow};
use crate::synthetic::{covariance, edge_note, sample_count};

pub const MANIFEST: &str = "\
lambda-map: theoretical CPCR risk divided by its minimum over lambda
  heat map: x = kappa, y = lambda (log scale), color = metric=normalized_risk
  trace: metric=lambda_star (value) against kappa; rows with note=trace carry normalized_risk on the trace
  diagnostics: metric=stationarity_residual and metric=curvature_scale at each optimum; bracket-edge optima are noted
";

fn kappa_rows(cfg: &LambdaMapConfig, input: &RmtInput, kappa: f64) -> Vec<ReportRow> {
    let base = ReportRow::metric("").method("cpcr").c(cfg.c).kappa(kappa).rank(cfg.r).provenance("theoretical");
    let inp = input.with_kappa(kappa);
    let opt = match optimal_lambda(&inp, (cfg.lambda_bracket[0], cfg.lambda_bracket[1])) {
        Ok(opt) => opt,
        Err(e) => return vec![base.with_metric("lambda_star").failed(e.to_string())],
    };
    let at_star = base.clone().lambda(Some(opt.lambda_star));
    let mut star = at_star.with_metric("lambda_star").ok(opt.lambda_star, None);
    if let Some(note) = edge_note(opt.edge) {
        star = star.note(note);
    }
    let mut rows = vec![
        star,
        at_star.with_metric("risk_at_star").ok(opt.risk_at_star, None),
        at_star.with_metric("stationarity_residual").ok(opt.stationarity_residual, None),
        at_star.with_metric("curvature_scale").ok(opt.curvature_scale, None),
    ];
    let normalized = |lambda: f64| -> Result<f64> {
        Ok(theoretical_risk(&inp.with_lambda(lambda))?.total / opt.risk_at_star)
    };
    rows.push(at_star.with_metric("normalized_risk").outcome(normalized(opt.lambda_star)).note("trace"));
    for &lambda in &cfg.lambdas {
        rows.push(base.with_metric("normalized_risk").lambda(Some(lambda)).outcome(normalized(lambda)));
    }
    rows
}

pub fn run(cfg: &LambdaMapConfig, seed: u64) -> Result<Report> {
    cfg.validate()?;
    let cov = covariance(cfg.p, cfg.r, &cfg.spectrum_s, &cfg.spectrum_c, seed)?;
    let n_fold = sample_count(cfg.p, cfg.c) / 2;
    let input = RmtInput::from_covariance(&cov, n_fold, cfg.kappas[0], cfg.sigma2, cfg.lambda_bracket[0])?;
    let rows: Vec<Vec<ReportRow>> = cfg.kappas.par_iter().map(|&k| kappa_rows(cfg, &input, k)).collect();
    let mut report = Report::default();
    report.extend(rows.into_iter().flatten());
    Ok(report)
}
