//! Risk versus the number of retained components when `rank(Û) ≤ rank(U)`.

use anyhow::Result;
use cpcr_core::estimators::GlmFamily;
use cpcr_core::rng::derive_seed;
use cpcr_core::synthgen::{monte_carlo_risks, CalibrationSpec, Scenario, SyntheticMethod};

use crate::config::{MethodName, RankSweepConfig};
use crate::report::{Report, ReportRow};
use crate::synthetic::{covariance, cpcr_lambda, monte_carlo_rows, optimum_rows, reported_lambda, sample_count, SEED_MONTE_CARLO};

pub const MANIFEST: &str = "\
rank-sweep: risk versus rank of the estimated subspace, true rank fixed
  figure: x = rank, y = metric=mean_risk (value +/- 2*std_error), one curve per method
  summary: metric=max_min_ratio per method (largest over smallest mean risk across ranks)
  all ranks share the same Monte Carlo draws; CPCR uses one penalty for every rank
";

pub fn run(cfg: &RankSweepConfig, seed: u64) -> Result<Report> {
    cfg.validate()?;
    let cov = covariance(cfg.p, cfg.rank_u, &cfg.spectrum_s, &cfg.spectrum_c, seed)?;
    let scenario = Scenario::new(cov, sample_count(cfg.p, cfg.c), cfg.kappa, cfg.sigma2);
    let base = ReportRow::metric("").c(cfg.c).kappa(cfg.kappa);
    let mut report = Report::default();

    let cpcr = if cfg.methods.contains(&MethodName::Cpcr) {
        match cpcr_lambda(&cfg.cpcr_lambda, &scenario, cfg.lambda_bracket) {
            Ok((l, opt)) => {
                if let Some(opt) = opt {
                    report.extend(optimum_rows(&base.clone().method("cpcr").lambda(Some(l)).rank(cfg.rank_u), &opt));
                }
                Ok(l)
            }
            Err(e) => Err(format!("{e:#}")),
        }
    } else {
        Err(String::new())
    };

    let mut cells: Vec<(usize, SyntheticMethod)> = Vec::new();
    for &k in &cfg.ranks {
        for name in &cfg.methods {
            let method = match name {
                MethodName::Cpcr => match &cpcr {
                    Ok(l) => SyntheticMethod::Cpcr(CalibrationSpec {
                        r: k,
                        lambda: l * scenario.n_fold() as f64,
                        subspace: cfg.subspace,
                        family: GlmFamily::Gaussian,
                    }),
                    Err(e) => {
                        report.push(
                            ReportRow { metric: "mean_risk".into(), ..base.clone() }
                                .method("cpcr")
                                .rank(k)
                                .failed(e.clone()),
                        );
                        continue;
                    }
                },
                MethodName::Pcr => SyntheticMethod::Pcr { r: k, subspace: cfg.subspace },
                MethodName::Plsr => SyntheticMethod::Plsr { k },
                MethodName::Ridge => unreachable!("rejected by validate"),
            };
            cells.push((k, method));
        }
    }
    let methods: Vec<SyntheticMethod> = cells.iter().map(|c| c.1).collect();
    let values = monte_carlo_risks(&scenario, &methods, cfg.replicates, derive_seed(seed, &[SEED_MONTE_CARLO]));

    let mut curves: Vec<(&'static str, Vec<f64>, usize)> = Vec::new();
    for ((k, m), vals) in cells.iter().zip(&values) {
        let row = base.clone().method(m.name()).rank(*k).lambda(reported_lambda(m, &scenario));
        let (rows, agg) = monte_carlo_rows(&row, vals);
        report.extend(rows);
        let entry = match curves.iter_mut().position(|c| c.0 == m.name()) {
            Some(i) => &mut curves[i],
            None => {
                curves.push((m.name(), Vec::new(), 0));
                curves.last_mut().expect("just pushed")
            }
        };
        match agg {
            Some((mean, _)) => entry.1.push(mean),
            None => entry.2 += 1,
        }
    }
    for name in &cfg.methods {
        let row = base.with_metric("max_min_ratio").method(name.as_str());
        let Some((_, means, failed)) = curves.iter().find(|c| c.0 == name.as_str()) else {
            report.push(row.failed("no rank succeeded"));
            continue;
        };
        let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        report.push(if *failed > 0 {
            row.failed(format!("{failed} ranks failed"))
        } else if means.is_empty() || !(min > 0.0) {
            row.failed("no positive risks")
        } else {
            row.ok(max / min, None)
        });
    }
    Ok(report)
}
