//! Theoretical versus Monte Carlo CPCR risk over a `(c, κ)` grid.

use anyhow::Result;
use cpcr_core::estimators::GlmFamily;
use cpcr_core::rmt::{theoretical_risk_with, RmtInput, TheoryMode};
use cpcr_core::rng::derive_seed;
use cpcr_core::synthgen::{empirical_bias_variance, monte_carlo_risks, CalibrationSpec, Scenario, SyntheticMethod};
use rayon::prelude::*;

use crate::config::TheoryVsMcConfig;
use crate::report::{Report, ReportRow};
use crate::synthetic::{covariance, cpcr_lambda, monte_carlo_rows, optimum_rows, sample_count, SEED_MONTE_CARLO};

pub const MANIFEST: &str = "\
theory-vs-mc: CPCR risk, random-matrix limit against Monte Carlo
  figure: risk versus aspect ratio c, one panel per kappa
  x: c; panel: kappa
  curve: metric=risk, provenance=theoretical (column value)
  error bars: metric=mean_risk, provenance=empirical (value +/- 2*std_error)
  extra: metric=risk_asymptotic (asymptotic limit only), metric=theory_gap (theory minus Monte Carlo mean)
  lambda column: per-sample penalty used at that cell; metric=lambda_star carries the optimum
";

fn mode_name(mode: TheoryMode) -> &'static str {
    match mode {
        TheoryMode::Asymptotic => "asymptotic",
        TheoryMode::FiniteRank => "finite_rank",
    }
}

fn cell(cfg: &TheoryVsMcConfig, seed: u64, ci: usize, ki: usize) -> Vec<ReportRow> {
    let c = cfg.c_values[ci];
    let kappa = cfg.kappas[ki];
    let base = ReportRow::metric("").method("cpcr").c(c).kappa(kappa).rank(cfg.r);
    match cell_rows(cfg, seed, ci, ki, &base) {
        Ok(rows) => rows,
        Err(e) => vec![ReportRow { metric: "risk".into(), ..base }.failed(format!("{e:#}"))],
    }
}

fn cell_rows(cfg: &TheoryVsMcConfig, seed: u64, ci: usize, ki: usize, base: &ReportRow) -> Result<Vec<ReportRow>> {
    let (c, kappa) = (cfg.c_values[ci], cfg.kappas[ki]);
    let cov = covariance(cfg.p, cfg.r, &cfg.spectrum_s, &cfg.spectrum_c, seed)?;
    let mut scenario = Scenario::new(cov, sample_count(cfg.p, c), kappa, cfg.sigma2);
    scenario.design = cfg.design;
    let (lambda_bar, opt) = cpcr_lambda(&cfg.lambda, &scenario, cfg.lambda_bracket)?;
    let base = base.clone().lambda(Some(lambda_bar));
    let mut rows = Vec::new();
    if let Some(opt) = &opt {
        rows.extend(optimum_rows(&base, opt));
    }

    let with = |metric: &str| ReportRow { metric: metric.into(), ..base.clone() };
    let input = RmtInput::from_covariance(&scenario.cov, scenario.n_fold(), kappa, cfg.sigma2, lambda_bar);
    let theory = input
        .map_err(anyhow::Error::from)
        .and_then(|inp| Ok((theoretical_risk_with(&inp, cfg.theory)?, theoretical_risk_with(&inp, TheoryMode::Asymptotic)?)));
    let theory_total = match theory {
        Ok((risk, asym)) => {
            let note = mode_name(cfg.theory);
            rows.push(with("risk").provenance("theoretical").ok(risk.total, None).note(note));
            if let Some(b) = risk.bias() {
                rows.push(with("bias").provenance("theoretical").ok(b, None).note(note));
            }
            if let Some(v) = risk.variance() {
                rows.push(with("variance").provenance("theoretical").ok(v, None).note(note));
            }
            if cfg.theory != TheoryMode::Asymptotic {
                rows.push(with("risk_asymptotic").provenance("theoretical").ok(asym.total, None));
            }
            Some(risk.total)
        }
        Err(e) => {
            rows.push(with("risk").provenance("theoretical").failed(format!("{e:#}")));
            None
        }
    };

    let spec = CalibrationSpec {
        r: cfg.r,
        lambda: lambda_bar * scenario.n_fold() as f64,
        subspace: cfg.subspace,
        family: GlmFamily::Gaussian,
    };
    let mc_seed = derive_seed(seed, &[SEED_MONTE_CARLO, ci as u64, ki as u64]);
    let values = monte_carlo_risks(&scenario, &[SyntheticMethod::Cpcr(spec)], cfg.replicates, mc_seed);
    let (mc_rows, agg) = monte_carlo_rows(&base, &values[0]);
    rows.extend(mc_rows);
    if let (Some(t), Some((mean, se))) = (theory_total, agg) {
        rows.push(with("theory_gap").ok(t - mean, se));
    }

    if cfg.decompose {
        match empirical_bias_variance(&scenario, &spec, cfg.replicates, mc_seed) {
            Ok(d) => {
                for (metric, v) in [("bias", d.bias()), ("variance", d.variance())] {
                    if let Some(v) = v {
                        rows.push(with(metric).provenance("empirical").ok(v, None));
                    }
                }
            }
            Err(e) => rows.push(with("bias").provenance("empirical").failed(e.to_string())),
        }
    }
    Ok(rows)
}

pub fn run(cfg: &TheoryVsMcConfig, seed: u64) -> Result<Report> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.c_values.len())
        .flat_map(|ci| (0..cfg.kappas.len()).map(move |ki| (ci, ki)))
        .collect();
    let rows: Vec<Vec<ReportRow>> = cells.par_iter().map(|&(ci, ki)| cell(cfg, seed, ci, ki)).collect();
    let mut report = Report::default();
    report.extend(rows.into_iter().flatten());
    Ok(report)
}
