//! Shared plumbing for the synthetic subcommands.

use std::sync::Arc;

use anyhow::{anyhow, Result};
use cpcr_core::rmt::{optimal_lambda, ridge_optimal_lambda, BracketEdge, LambdaOptimum, RmtInput};
use cpcr_core::rng::derive_seed;
use cpcr_core::synthgen::{
    aggregate, make_spiked_covariance, EigenSampler, Scenario, SpikedCovariance, SyntheticMethod,
};

use crate::config::LambdaPolicy;
use crate::report::ReportRow;

pub const SEED_COVARIANCE: u64 = 11;
pub const SEED_MONTE_CARLO: u64 = 12;

pub fn sample_count(p: usize, c: f64) -> usize {
    (p as f64 / c).round() as usize
}

pub fn covariance(
    p: usize,
    r: usize,
    spectrum_s: &EigenSampler,
    spectrum_c: &EigenSampler,
    seed: u64,
) -> Result<Arc<SpikedCovariance>> {
    let cov = make_spiked_covariance(p, r, spectrum_s, spectrum_c, derive_seed(seed, &[SEED_COVARIANCE]))?;
    Ok(Arc::new(cov))
}

pub fn edge_note(edge: Option<BracketEdge>) -> Option<&'static str> {
    match edge {
        Some(BracketEdge::Lower) => Some("lambda_star at lower bracket edge"),
        Some(BracketEdge::Upper) => Some("lambda_star at upper bracket edge"),
        None => None,
    }
}

/// Per-sample CPCR penalty and, for `auto`, the optimum record.
pub fn cpcr_lambda(
    policy: &LambdaPolicy,
    scenario: &Scenario,
    bracket: [f64; 2],
) -> Result<(f64, Option<LambdaOptimum>)> {
    match policy {
        LambdaPolicy::Fixed { value } => Ok((*value, None)),
        LambdaPolicy::Auto => {
            let input = RmtInput::from_covariance(&scenario.cov, scenario.n_fold(), scenario.kappa, scenario.sigma2, 1.0)?;
            let opt = optimal_lambda(&input, (bracket[0], bracket[1]))?;
            Ok((opt.lambda_star, Some(opt)))
        }
        LambdaPolicy::Holdout { .. } => Err(anyhow!("holdout selection is not available for synthetic scenarios")),
    }
}

/// Per-sample ridge penalty on all `n` samples.
pub fn ridge_lambda(policy: &LambdaPolicy, scenario: &Scenario, bracket: [f64; 2]) -> Result<f64> {
    match policy {
        LambdaPolicy::Fixed { value } => Ok(*value),
        LambdaPolicy::Auto => {
            let input = RmtInput::from_covariance(&scenario.cov, scenario.n_fold(), scenario.kappa, scenario.sigma2, 1.0)?;
            Ok(ridge_optimal_lambda(&input, scenario.n, (bracket[0], bracket[1]))?.0)
        }
        LambdaPolicy::Holdout { .. } => Err(anyhow!("holdout selection is not available for synthetic scenarios")),
    }
}

/// Rows for a `lambda_star` record.
pub fn optimum_rows(base: &ReportRow, opt: &LambdaOptimum) -> Vec<ReportRow> {
    let mut star = ReportRow { metric: "lambda_star".into(), ..base.clone() }
        .provenance("theoretical")
        .ok(opt.lambda_star, None);
    if let Some(note) = edge_note(opt.edge) {
        star = star.note(note);
    }
    vec![star]
}

/// Per-replicate `risk` rows plus the aggregated `mean_risk` row of one
/// method. Returns the rows and the mean and standard error when at least
/// 80% of the replicates succeeded.
pub fn monte_carlo_rows(
    base: &ReportRow,
    values: &[std::result::Result<f64, String>],
) -> (Vec<ReportRow>, Option<(f64, Option<f64>)>) {
    let mut rows: Vec<ReportRow> = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            ReportRow { metric: "risk".into(), ..base.clone() }
                .replicate(i)
                .provenance("empirical")
                .outcome(v.clone())
        })
        .collect();
    let mean = ReportRow { metric: "mean_risk".into(), ..base.clone() }.provenance("empirical");
    match aggregate(values) {
        Ok(agg) => {
            let mut row = mean.ok(agg.total, agg.std_error);
            if agg.failures > 0 {
                row = row.note(format!("{} of {} replicates failed", agg.failures, values.len()));
            }
            rows.push(row);
            (rows, Some((agg.total, agg.std_error)))
        }
        Err(e) => {
            rows.push(mean.failed(e.to_string()));
            (rows, None)
        }
    }
}

/// Slope of the least-squares line through `(x, y)`.
pub fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Per-sample penalty shown in reports for a method.
pub fn reported_lambda(method: &SyntheticMethod, scenario: &Scenario) -> Option<f64> {
    match method {
        SyntheticMethod::Cpcr(spec) => Some(spec.lambda / scenario.n_fold() as f64),
        SyntheticMethod::Ridge { lambda } => Some(lambda / scenario.n as f64),
        _ => None,
    }
}
