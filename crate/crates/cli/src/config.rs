//! JSON experiment configurations. Every field has a default, so `{}` is a
//! valid config for each subcommand. Penalties are per-sample values `λ̄`:
//! CPCR calibrates with `⌊n/2⌋·λ̄` and ridge uses `n·λ̄`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cpcr_core::rmt::TheoryMode;
use cpcr_core::synthgen::{DesignNoise, EigenSampler, SubspaceChoice};
use cpcr_core::datasets::BandwidthRule;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum LambdaPolicy {
    /// Minimiser of the deterministic risk (synthetic scenarios only).
    Auto,
    Fixed { value: f64 },
    /// Grid search on a random holdout of the training rows.
    Holdout { grid: Vec<f64>, fraction: f64 },
}

impl LambdaPolicy {
    pub fn validate(&self, what: &str) -> Result<()> {
        match self {
            LambdaPolicy::Auto => Ok(()),
            LambdaPolicy::Fixed { value } => {
                if !(*value > 0.0 && value.is_finite()) {
                    bail!("{what}: fixed lambda must be positive, got {value}");
                }
                Ok(())
            }
            LambdaPolicy::Holdout { grid, fraction } => {
                if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    bail!("{what}: holdout grid must be non-empty and positive");
                }
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    bail!("{what}: holdout fraction must lie in (0, 1), got {fraction}");
                }
                Ok(())
            }
        }
    }
}

pub fn default_holdout() -> LambdaPolicy {
    LambdaPolicy::Holdout {
        grid: vec![1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0, 10.0],
        fraction: 0.25,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Cpcr,
    Pcr,
    Ridge,
    Plsr,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Cpcr => "cpcr",
            MethodName::Pcr => "pcr",
            MethodName::Ridge => "ridge",
            MethodName::Plsr => "plsr",
        }
    }
}

fn check_grid(name: &str, values: &[f64], lo: f64, hi: f64) -> Result<()> {
    if values.is_empty() {
        bail!("{name} must not be empty");
    }
    if let Some(v) = values.iter().find(|v| !(**v >= lo && **v <= hi)) {
        bail!("{name}: {v} is outside [{lo}, {hi}]");
    }
    Ok(())
}

fn check_bracket(b: [f64; 2]) -> Result<()> {
    if !(b[0] > 0.0 && b[1] > b[0] && b[1].is_finite()) {
        bail!("lambda_bracket must satisfy 0 < lo < hi, got {b:?}");
    }
    Ok(())
}

fn sample_count(p: usize, c: f64) -> usize {
    (p as f64 / c).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryVsMcConfig {
    pub label: String,
    pub p: usize,
    pub r: usize,
    pub sigma2: f64,
    /// `p / n` for the full sample.
    pub c_values: Vec<f64>,
    pub kappas: Vec<f64>,
    pub spectrum_s: EigenSampler,
    pub spectrum_c: EigenSampler,
    pub lambda: LambdaPolicy,
    pub lambda_bracket: [f64; 2],
    pub theory: TheoryMode,
    pub replicates: usize,
    pub subspace: SubspaceChoice,
    pub design: DesignNoise,
    /// Also estimate bias and variance parts empirically.
    pub decompose: bool,
}

impl Default for TheoryVsMcConfig {
    fn default() -> Self {
        Self {
            label: "default".into(),
            p: 400,
            r: 10,
            sigma2: 1.0,
            c_values: vec![1.25, 1.5, 2.0, 3.0, 4.0],
            kappas: vec![0.8, 0.9, 0.99],
            spectrum_s: EigenSampler::Uniform { low: 2.0, high: 4.0 },
            spectrum_c: EigenSampler::Uniform { low: 0.0, high: 1.0 },
            lambda: LambdaPolicy::Auto,
            lambda_bracket: [1e-3, 1e2],
            theory: TheoryMode::FiniteRank,
            replicates: 10,
            subspace: SubspaceChoice::Oracle,
            design: DesignNoise::Gaussian,
            decompose: false,
        }
    }
}

impl TheoryVsMcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r >= self.p {
            bail!("need 1 ≤ r < p");
        }
        check_grid("c_values", &self.c_values, 0.5, 1e3)?;
        check_grid("kappas", &self.kappas, 1e-9, 1.0)?;
        check_bracket(self.lambda_bracket)?;
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if matches!(self.lambda, LambdaPolicy::Holdout { .. }) {
            bail!("lambda: holdout selection is not available for synthetic scenarios");
        }
        self.lambda.validate("lambda")?;
        for &c in &self.c_values {
            if sample_count(self.p, c) < 8 {
                bail!("c = {c} leaves fewer than 8 samples");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sweep {
    Kappa { values: Vec<f64> },
    /// Σc entries uniform on `[mean − half_width, mean + half_width]`.
    SpectrumMean { means: Vec<f64>, half_width: f64, kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodCompareConfig {
    pub label: String,
    pub p: usize,
    pub r: usize,
    pub c: f64,
    pub sigma2: f64,
    pub spectrum_s: EigenSampler,
    pub spectrum_c: EigenSampler,
    pub sweep: Sweep,
    pub methods: Vec<MethodName>,
    pub subspace: SubspaceChoice,
    pub cpcr_lambda: LambdaPolicy,
    pub ridge_lambda: LambdaPolicy,
    pub lambda_bracket: [f64; 2],
    pub replicates: usize,
}

impl Default for MethodCompareConfig {
    fn default() -> Self {
        Self {
            label: "default".into(),
            p: 400,
            r: 10,
            c: 2.0,
            sigma2: 1.0,
            spectrum_s: EigenSampler::Uniform { low: 2.0, high: 4.0 },
            spectrum_c: EigenSampler::Uniform { low: 1.0, high: 3.0 },
            sweep: Sweep::Kappa {
                values: vec![0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999],
            },
            methods: vec![MethodName::Cpcr, MethodName::Pcr, MethodName::Ridge],
            subspace: SubspaceChoice::Oracle,
            cpcr_lambda: LambdaPolicy::Auto,
            ridge_lambda: LambdaPolicy::Auto,
            lambda_bracket: [1e-3, 1e2],
            replicates: 10,
        }
    }
}

impl MethodCompareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r >= self.p {
            bail!("need 1 ≤ r < p");
        }
        check_grid("c", &[self.c], 0.5, 1e3)?;
        if sample_count(self.p, self.c) < 8 {
            bail!("c = {} leaves fewer than 8 samples", self.c);
        }
        if self.methods.is_empty() {
            bail!("methods must not be empty");
        }
        check_bracket(self.lambda_bracket)?;
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        for (name, policy) in [("cpcr_lambda", &self.cpcr_lambda), ("ridge_lambda", &self.ridge_lambda)] {
            if matches!(policy, LambdaPolicy::Holdout { .. }) {
                bail!("{name}: holdout selection is not available for synthetic scenarios");
            }
            policy.validate(name)?;
        }
        match &self.sweep {
            Sweep::Kappa { values } => check_grid("sweep.values", values, 1e-9, 1.0)?,
            Sweep::SpectrumMean { means, half_width, kappa } => {
                check_grid("sweep.means", means, 0.0, 1e6)?;
                check_grid("sweep.kappa", &[*kappa], 1e-9, 1.0)?;
                if !(*half_width >= 0.0) || means.iter().any(|m| m - half_width < 0.0) {
                    bail!("sweep: every mean − half_width must be ≥ 0");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSweepConfig {
    pub label: String,
    pub p: usize,
    pub c: f64,
    pub kappa: f64,
    pub sigma2: f64,
    /// Rank of the true signal subspace.
    pub rank_u: usize,
    /// Ranks of the estimated subspace.
    pub ranks: Vec<usize>,
    pub spectrum_s: EigenSampler,
    pub spectrum_c: EigenSampler,
    pub methods: Vec<MethodName>,
    pub subspace: SubspaceChoice,
    pub cpcr_lambda: LambdaPolicy,
    pub lambda_bracket: [f64; 2],
    pub replicates: usize,
}

impl Default for RankSweepConfig {
    fn default() -> Self {
        Self {
            label: "default".into(),
            p: 400,
            c: 1.2,
            kappa: 0.98,
            sigma2: 1.0,
            rank_u: 20,
            ranks: (1..=20).collect(),
            spectrum_s: EigenSampler::Uniform { low: 2.0, high: 4.0 },
            spectrum_c: EigenSampler::Uniform { low: 0.0, high: 1.0 },
            methods: vec![MethodName::Cpcr, MethodName::Pcr],
            subspace: SubspaceChoice::Pooled,
            cpcr_lambda: LambdaPolicy::Auto,
            lambda_bracket: [1e-3, 1e2],
            replicates: 10,
        }
    }
}

impl RankSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank_u == 0 || self.rank_u >= self.p {
            bail!("need 1 ≤ rank_u < p");
        }
        if self.ranks.is_empty() || self.ranks.iter().any(|&k| k == 0 || k >= self.p) {
            bail!("ranks must be non-empty with entries in [1, p)");
        }
        check_grid("c", &[self.c], 0.5, 1e3)?;
        check_grid("kappa", &[self.kappa], 1e-9, 1.0)?;
        let n = sample_count(self.p, self.c);
        if let Some(k) = self.ranks.iter().find(|&&k| k > n / 2) {
            bail!("rank {k} exceeds the fold size {}", n / 2);
        }
        if self.methods.is_empty() || self.methods.contains(&MethodName::Ridge) {
            bail!("methods must be a non-empty subset of cpcr, pcr, plsr");
        }
        check_bracket(self.lambda_bracket)?;
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if matches!(self.cpcr_lambda, LambdaPolicy::Holdout { .. }) {
            bail!("cpcr_lambda: holdout selection is not available for synthetic scenarios");
        }
        self.cpcr_lambda.validate("cpcr_lambda")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaMapConfig {
    pub label: String,
    pub p: usize,
    pub r: usize,
    pub c: f64,
    pub sigma2: f64,
    pub spectrum_s: EigenSampler,
    pub spectrum_c: EigenSampler,
    pub kappas: Vec<f64>,
    /// Per-sample penalties at which the risk surface is evaluated.
    pub lambdas: Vec<f64>,
    pub lambda_bracket: [f64; 2],
}

impl Default for LambdaMapConfig {
    fn default() -> Self {
        let lambdas = (0..=48).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 48.0)).collect();
        Self {
            label: "default".into(),
            p: 400,
            r: 10,
            c: 2.0,
            sigma2: 1.0,
            spectrum_s: EigenSampler::Uniform { low: 2.0, high: 4.0 },
            spectrum_c: EigenSampler::Uniform { low: 0.0, high: 1.0 },
            kappas: vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.97, 0.98, 0.99, 0.995, 0.999],
            lambdas,
            lambda_bracket: [1e-3, 1e3],
        }
    }
}

impl LambdaMapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r >= self.p {
            bail!("need 1 ≤ r < p");
        }
        check_grid("c", &[self.c], 0.5, 1e3)?;
        check_grid("kappas", &self.kappas, 0.0, 1.0)?;
        check_bracket(self.lambda_bracket)?;
        check_grid("lambdas", &self.lambdas, self.lambda_bracket[0], self.lambda_bracket[1])?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: PathBuf,
    pub target: String,
    #[serde(default = "comma")]
    pub delimiter: char,
}

fn comma() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LandmarkCount {
    /// One landmark per training row.
    TrainSize,
    Fixed { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UciBenchConfig {
    pub label: String,
    pub datasets: Vec<DatasetEntry>,
    pub splits: usize,
    pub train_fraction: f64,
    /// PC count shared by CPCR, PCR and PLSR.
    pub components: usize,
    pub landmarks: LandmarkCount,
    pub bandwidth: BandwidthRule,
    /// Keep the standardized raw columns next to the Nyström features.
    pub include_raw: bool,
    pub cpcr_lambda: LambdaPolicy,
    pub methods: Vec<MethodName>,
}

impl Default for UciBenchConfig {
    fn default() -> Self {
        let entry = |name: &str, file: &str, target: &str| DatasetEntry {
            name: name.into(),
            path: PathBuf::from("data/uci").join(file),
            target: target.into(),
            delimiter: ',',
        };
        Self {
            label: "default".into(),
            datasets: vec![
                entry("D1", "d1.csv", "target"),
                entry("D2", "d2.csv", "target"),
                entry("D3", "d3.csv", "target"),
                entry("D4", "d4.csv", "target"),
                entry("D5", "d5.csv", "target"),
            ],
            splits: 5,
            train_fraction: 0.8,
            components: 5,
            landmarks: LandmarkCount::TrainSize,
            bandwidth: BandwidthRule::Median,
            include_raw: true,
            cpcr_lambda: default_holdout(),
            methods: vec![MethodName::Pcr, MethodName::Plsr, MethodName::Cpcr],
        }
    }
}

impl UciBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.splits == 0 {
            bail!("splits must be at least 1");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!("train_fraction must lie in (0, 1)");
        }
        if self.components == 0 {
            bail!("components must be at least 1");
        }
        if matches!(self.cpcr_lambda, LambdaPolicy::Auto) {
            bail!("cpcr_lambda: auto selection needs a known covariance; use fixed or holdout");
        }
        self.cpcr_lambda.validate("cpcr_lambda")?;
        if self.methods.is_empty() || self.methods.contains(&MethodName::Ridge) {
            bail!("methods must be a non-empty subset of cpcr, pcr, plsr");
        }
        for d in &self.datasets {
            if !d.delimiter.is_ascii() {
                bail!("dataset {}: delimiter must be ASCII", d.name);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EmbeddingSource {
    /// Gaussian embeddings with class means in a low-rank subspace and a
    /// few high-variance nuisance directions.
    Synthetic {
        dim: usize,
        classes: usize,
        mean_rank: usize,
        mean_scale: f64,
        nuisance_rank: usize,
        nuisance_sd: f64,
        n_train: usize,
        n_test: usize,
    },
    /// Separate train and test embedding files.
    Files { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub label: String,
    pub source: EmbeddingSource,
    pub seeds: usize,
    pub flip_fraction: f64,
    pub r: usize,
    /// Estimate `Û` from train and test features together (unlabeled).
    pub pooled_subspace: bool,
    pub cpcr_lambda: LambdaPolicy,
    pub lr_lambda: LambdaPolicy,
    pub pcr_penalty: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            label: "default".into(),
            source: EmbeddingSource::Synthetic {
                dim: 768,
                classes: 7,
                mean_rank: 6,
                mean_scale: 2.0,
                nuisance_rank: 6,
                nuisance_sd: 4.0,
                n_train: 400,
                n_test: 4000,
            },
            seeds: 5,
            flip_fraction: 0.2,
            r: 8,
            pooled_subspace: true,
            cpcr_lambda: LambdaPolicy::Holdout {
                grid: vec![0.001, 0.003, 0.01, 0.03, 0.1, 0.3],
                fraction: 0.25,
            },
            lr_lambda: LambdaPolicy::Holdout {
                grid: vec![0.1, 0.3, 1.0, 3.0, 10.0],
                fraction: 0.25,
            },
            pcr_penalty: 1e-6,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            bail!("seeds must be at least 1");
        }
        if !(0.0..1.0).contains(&self.flip_fraction) {
            bail!("flip_fraction must lie in [0, 1)");
        }
        if self.r == 0 {
            bail!("r must be at least 1");
        }
        if !(self.pcr_penalty > 0.0) {
            bail!("pcr_penalty must be positive");
        }
        for (name, policy) in [("cpcr_lambda", &self.cpcr_lambda), ("lr_lambda", &self.lr_lambda)] {
            if matches!(policy, LambdaPolicy::Auto) {
                bail!("{name}: auto selection is only available for synthetic regression scenarios");
            }
            policy.validate(name)?;
        }
        if let EmbeddingSource::Synthetic {
            dim,
            classes,
            mean_rank,
            nuisance_rank,
            n_train,
            n_test,
            ..
        } = &self.source
        {
            if *classes < 2 {
                bail!("classification needs at least 2 classes");
            }
            if mean_rank + nuisance_rank > *dim || *mean_rank == 0 {
                bail!("mean_rank + nuisance_rank must not exceed dim");
            }
            if *n_train < 8 || *n_test == 0 {
                bail!("need at least 8 training and 1 test sample");
            }
        }
        Ok(())
    }
}
