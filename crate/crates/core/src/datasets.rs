//! Tabular CSV ingestion, standardization, Nyström features, embedding
//! files and label corruption.
//!
//! Raw tables are `samples × columns`; feature matrices handed to the
//! estimators are `features × samples`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    /// Raw column indices that survived (non-constant on the fitting rows).
    pub kept_columns: Vec<usize>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub target_mean: f64,
    pub target_scale: f64,
}

impl Standardization {
    /// Z-scores `ds` with the stored statistics.
    pub fn apply(&self, ds: &TabularDataset) -> Result<TabularDataset> {
        if ds.column_names.len() != self.raw_width(ds) {
            return Err(Error::Input("dataset columns do not match the standardization record".into()));
        }
        let n = ds.features.nrows();
        let features = DMatrix::from_fn(n, self.kept_columns.len(), |i, j| {
            (ds.features[(i, self.kept_columns[j])] - self.feature_mean[j]) / self.feature_scale[j]
        });
        Ok(TabularDataset {
            features,
            target: ds.target.map(|v| (v - self.target_mean) / self.target_scale),
            column_names: self.kept_columns.iter().map(|&j| ds.column_names[j].clone()).collect(),
            target_name: ds.target_name.clone(),
            standardization: Some(self.clone()),
        })
    }

    fn raw_width(&self, ds: &TabularDataset) -> usize {
        ds.features.ncols()
    }

    /// Maps standardized target values back to the raw scale.
    pub fn inverse_target(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| v * self.target_scale + self.target_mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    /// `n × d`
    pub features: DMatrix<f64>,
    pub target: DVector<f64>,
    pub column_names: Vec<String>,
    pub target_name: String,
    /// Set once the dataset has been standardized.
    pub standardization: Option<Standardization>,
}

impl TabularDataset {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// The listed rows, in order.
    pub fn subset(&self, rows: &[usize]) -> TabularDataset {
        TabularDataset {
            features: self.features.select_rows(rows),
            target: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.target[i])),
            column_names: self.column_names.clone(),
            target_name: self.target_name.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Features as a `d × n` matrix.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        self.features.transpose()
    }
}

/// Reads a headed CSV. Row numbers in errors count data rows from 1.
pub fn load_csv(path: &Path, target_column: &str, delimiter: u8) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Input(format!("{}: empty file", path.display())));
    }
    if headers.len() < 2 {
        return Err(Error::Input(format!("{}: need at least 2 columns", path.display())));
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Input(format!("{}: no target column \"{target_column}\"", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 1,
                    column: headers[j].clone(),
                    message: format!("\"{cell}\" is not a finite number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Input(format!("{}: no data rows", path.display())));
    }
    let d = headers.len() - 1;
    let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][if j < target_idx { j } else { j + 1 }]);
    let target = DVector::from_iterator(rows.len(), rows.iter().map(|r| r[target_idx]));
    let column_names = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Ok(TabularDataset {
        features,
        target,
        column_names,
        target_name: target_column.to_string(),
        standardization: None,
    })
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Fits z-scoring on `ds` (the training rows) and applies it. Constant
/// feature columns are dropped with a warning.
pub fn standardize(ds: &TabularDataset) -> Result<TabularDataset> {
    if ds.len() < 2 {
        return Err(Error::Input("standardization needs at least 2 rows".into()));
    }
    let (target_mean, target_scale) = sample_sd(ds.target.iter().copied());
    if !(target_scale > 0.0) {
        return Err(Error::Input(format!("target \"{}\" has zero variance", ds.target_name)));
    }
    let mut record = Standardization {
        kept_columns: Vec::new(),
        feature_mean: Vec::new(),
        feature_scale: Vec::new(),
        target_mean,
        target_scale,
    };
    for j in 0..ds.features.ncols() {
        let (mean, sd) = sample_sd(ds.features.column(j).iter().copied());
        if sd > 1e-12 * mean.abs().max(1.0) {
            record.kept_columns.push(j);
            record.feature_mean.push(mean);
            record.feature_scale.push(sd);
        } else {
            log::warn!("dropping constant column \"{}\"", ds.column_names[j]);
        }
    }
    if record.kept_columns.is_empty() {
        return Err(Error::Input("every feature column is constant".into()));
    }
    record.apply(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum BandwidthRule {
    /// Median pairwise distance between landmarks.
    Median,
    Fixed { length_scale: f64 },
}

/// `φ(x) = W k(landmarks, x)` with RBF kernel
/// `k(a, b) = exp(−‖a − b‖² / (2ℓ²))` and `W = K_mm^{−1/2}` (pseudo-inverse).
#[derive(Debug, Clone, PartialEq)]
pub struct NystromMap {
    /// `m × d`
    pub landmarks: DMatrix<f64>,
    pub bandwidth: f64,
    /// `m × m`
    pub whitener: DMatrix<f64>,
    pub seed: u64,
    /// Eigenvalues of `K_mm` kept by the whitener.
    pub retained: usize,
}

fn sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (0..a.ncols()).map(|k| (a[(i, k)] - b[(j, k)]).powi(2)).sum()
}

fn rbf(a: &DMatrix<f64>, b: &DMatrix<f64>, bandwidth: f64) -> DMatrix<f64> {
    let s = 2.0 * bandwidth * bandwidth;
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| (-sq_dist(a, i, b, j) / s).exp())
}

impl NystromMap {
    /// Picks `m_landmarks` distinct training rows and builds the whitener.
    pub fn fit(train: &DMatrix<f64>, m_landmarks: usize, rule: BandwidthRule, seed: u64) -> Result<Self> {
        let n = train.nrows();
        if m_landmarks == 0 {
            return Err(Error::Config("m_landmarks must be at least 1".into()));
        }
        if m_landmarks > n {
            return Err(Error::Config(format!(
                "m_landmarks = {m_landmarks} exceeds the {n} training rows; landmarks are drawn \
                 without replacement, so more landmarks would only duplicate rows. Use at most {n}."
            )));
        }
        let mut rng = rng::stream(seed, &[rng::PURPOSE_DATA]);
        let mut rows = index::sample(&mut rng, n, m_landmarks).into_vec();
        rows.sort_unstable();
        let landmarks = train.select_rows(&rows);
        let bandwidth = match rule {
            BandwidthRule::Fixed { length_scale } => length_scale,
            BandwidthRule::Median => median_distance(&landmarks),
        };
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Parameter(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let kmm = rbf(&landmarks, &landmarks, bandwidth);
        let (values, vectors) = sym_eigen_desc(&kmm);
        let top = values[0];
        if !(top >= 1e-12) {
            return Err(Error::Input("landmark kernel block is degenerate".into()));
        }
        let floor = 1e-10 * top;
        let retained = values.iter().filter(|v| **v > floor).count();
        let scaled = DMatrix::from_fn(m_landmarks, m_landmarks, |i, j| {
            if j < retained {
                vectors[(i, j)] / values[j].sqrt()
            } else {
                0.0
            }
        });
        let whitener = &scaled * vectors.transpose();
        Ok(Self {
            landmarks,
            bandwidth,
            whitener,
            seed,
            retained,
        })
    }

    /// Features of the rows of `x` (`n × d`) as an `m × n` matrix.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.landmarks.ncols() {
            return Err(Error::Input(format!(
                "rows have {} columns, landmarks have {}",
                x.ncols(),
                self.landmarks.ncols()
            )));
        }
        Ok(&self.whitener * rbf(&self.landmarks, x, self.bandwidth))
    }
}

fn median_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut d: Vec<f64> = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(x, i, x, j).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    if d.len() % 2 == 0 {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    }
}

/// Fits a map on `ds` and returns it with the `m × n` training features.
pub fn nystrom_features(
    ds: &TabularDataset,
    m_landmarks: usize,
    rule: BandwidthRule,
    seed: u64,
) -> Result<(NystromMap, DMatrix<f64>)> {
    let map = NystromMap::fit(&ds.features, m_landmarks, rule, seed)?;
    let phi = map.transform(&ds.features)?;
    Ok((map, phi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `p × n`
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Original label strings by class index, when labels were named.
    pub label_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(features: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.ncols() != labels.len() {
            return Err(Error::Input(format!(
                "{} feature columns but {} labels",
                features.ncols(),
                labels.len()
            )));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            features,
            labels,
            classes,
            label_names: None,
        })
    }

    pub fn label_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.labels.len(), self.labels.iter().map(|&l| l as f64))
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_columns(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            label_names: self.label_names.clone(),
        }
    }
}

const EMBEDDING_MAGIC: &[u8; 8] = b"CPCREMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFormat {
    Csv,
    Binary,
}

/// Loads an embedding table. Binary files start with `CPCREMB1`, followed by
/// little-endian `u64` row count `n` and width `d`, then `n` records of a
/// `u64` label and `d` `f64` values. Anything else is read as CSV with a
/// `label` column and `f0..f{d−1}`; labels must be integers.
pub fn load_embeddings(path: &Path) -> Result<LabeledDataset> {
    load_embeddings_with_labels(path, None)
}

/// As `load_embeddings`, with a map for string labels in CSV files.
pub fn load_embeddings_with_labels(
    path: &Path,
    label_map: Option<&HashMap<String, usize>>,
) -> Result<LabeledDataset> {
    let mut head = [0u8; 8];
    let mut file = File::open(path)?;
    let read = file.read(&mut head)?;
    if read == 0 {
        return Err(Error::Input(format!("{}: empty file", path.display())));
    }
    if read == 8 && &head == EMBEDDING_MAGIC {
        return read_binary(path);
    }
    read_embedding_csv(path, label_map)
}

fn read_binary(path: &Path) -> Result<LabeledDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut buf8)?;
        Ok(u64::from_le_bytes(buf8))
    };
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    if n == 0 || d == 0 {
        return Err(Error::Input(format!("{}: empty embedding table", path.display())));
    }
    let mut features = DMatrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for i in 0..n {
        r.read_exact(&mut b).map_err(|_| truncated(path, i))?;
        labels.push(u64::from_le_bytes(b) as usize);
        for k in 0..d {
            r.read_exact(&mut b).map_err(|_| truncated(path, i))?;
            features[(k, i)] = f64::from_le_bytes(b);
        }
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Input(format!("{}: trailing bytes after {n} records", path.display())));
    }
    LabeledDataset::new(features, labels)
}

fn truncated(path: &Path, row: usize) -> Error {
    Error::Input(format!("{}: record {} is truncated", path.display(), row + 1))
}

fn read_embedding_csv(path: &Path, label_map: Option<&HashMap<String, usize>>) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Input(format!("{}: no \"label\" column", path.display())))?;
    let mut feature_cols = Vec::new();
    for k in 0.. {
        match headers.iter().position(|h| *h == format!("f{k}")) {
            Some(j) => feature_cols.push(j),
            None => break,
        }
    }
    if feature_cols.is_empty() {
        return Err(Error::Input(format!("{}: no feature columns f0, f1, ...", path.display())));
    }
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: i + 1,
            column: String::new(),
            message: format!("ragged or unreadable row: {e}"),
        })?;
        raw_labels.push(record[label_idx].trim().to_string());
        let v = feature_cols
            .iter()
            .map(|&j| {
                record[j].trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 1,
                    column: headers[j].clone(),
                    message: format!("\"{}\" is not a number", &record[j]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        cols.push(v);
    }
    if cols.is_empty() {
        return Err(Error::Input(format!("{}: no data rows", path.display())));
    }
    let labels = raw_labels
        .iter()
        .enumerate()
        .map(|(i, s)| match label_map {
            Some(map) => map.get(s).copied().ok_or_else(|| Error::Input(format!(
                "{}: row {}: label \"{s}\" is not in the label map",
                path.display(),
                i + 1
            ))),
            None => s.parse::<usize>().map_err(|_| Error::Input(format!(
                "{}: row {}: label \"{s}\" is not a class index and no label map was given",
                path.display(),
                i + 1
            ))),
        })
        .collect::<Result<Vec<usize>>>()?;
    let d = feature_cols.len();
    let features = DMatrix::from_fn(d, cols.len(), |k, i| cols[i][k]);
    let mut ds = LabeledDataset::new(features, labels)?;
    if let Some(map) = label_map {
        let mut names = vec![String::new(); map.values().max().map_or(0, |m| m + 1)];
        for (k, &v) in map {
            names[v] = k.clone();
        }
        ds.classes = ds.classes.max(names.len());
        ds.label_names = Some(names);
    }
    Ok(ds)
}

pub fn write_embeddings(path: &Path, ds: &LabeledDataset, format: EmbeddingFormat) -> Result<()> {
    let (d, n) = ds.features.shape();
    match format {
        EmbeddingFormat::Binary => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(EMBEDDING_MAGIC)?;
            w.write_all(&(n as u64).to_le_bytes())?;
            w.write_all(&(d as u64).to_le_bytes())?;
            for i in 0..n {
                w.write_all(&(ds.labels[i] as u64).to_le_bytes())?;
                for k in 0..d {
                    w.write_all(&ds.features[(k, i)].to_le_bytes())?;
                }
            }
            w.flush()?;
        }
        EmbeddingFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            let mut header = vec!["label".to_string()];
            header.extend((0..d).map(|k| format!("f{k}")));
            w.write_record(&header)?;
            for i in 0..n {
                let mut row = vec![ds.labels[i].to_string()];
                // `{}` on f64 prints the shortest string that parses back exactly.
                row.extend((0..d).map(|k| format!("{}", ds.features[(k, i)])));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Reassigns exactly `⌊fraction · n⌋` uniformly chosen labels to a uniformly
/// chosen different class.
pub fn flip_labels(labels: &[usize], classes: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if classes < 2 {
        return Err(Error::Input(format!("label flipping needs at least 2 classes, got {classes}")));
    }
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("fraction must lie in [0, 1), got {fraction}")));
    }
    if let Some(l) = labels.iter().find(|l| **l >= classes) {
        return Err(Error::Input(format!("label {l} is out of range for {classes} classes")));
    }
    let n = labels.len();
    let count = (fraction * n as f64).floor() as usize;
    let mut rng = rng::stream(seed, &[rng::PURPOSE_LABELS]);
    let mut chosen: Vec<usize> = index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    let mut out = labels.to_vec();
    for i in chosen {
        let shift = rng.random_range(1..classes);
        out[i] = (labels[i] + shift) % classes;
    }
    Ok(out)
}

/// Random train/test row split with `n_train` training rows.
pub fn train_test_split(n: usize, n_train: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train == 0 || n_train >= n {
        return Err(Error::Parameter(format!("need 0 < n_train < n, got {n_train} of {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[rng::PURPOSE_SPLIT]));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
