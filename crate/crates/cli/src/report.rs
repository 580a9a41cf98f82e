//! Long-form CSV reports: one metric per row.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub const COLUMNS: [&str; 13] = [
    "dataset",
    "method",
    "c",
    "kappa",
    "lambda",
    "rank",
    "replicate",
    "metric",
    "provenance",
    "value",
    "std_error",
    "status",
    "note",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Failed => "failed",
            Status::Skipped => "skipped",
        }
    }
}

/// A single report line. `None` cells are written empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportRow {
    pub dataset: Option<String>,
    pub method: Option<String>,
    pub c: Option<f64>,
    pub kappa: Option<f64>,
    /// Per-sample penalty.
    pub lambda: Option<f64>,
    pub rank: Option<usize>,
    pub replicate: Option<usize>,
    pub metric: String,
    pub provenance: Option<String>,
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    pub status: Option<Status>,
    pub note: Option<String>,
}

impl ReportRow {
    pub fn metric(metric: &str) -> Self {
        Self {
            metric: metric.into(),
            ..Self::default()
        }
    }

    /// A copy of `self` reporting `metric`.
    pub fn with_metric(&self, metric: &str) -> Self {
        Self {
            metric: metric.into(),
            ..self.clone()
        }
    }

    pub fn dataset(mut self, name: &str) -> Self {
        self.dataset = Some(name.into());
        self
    }

    pub fn method(mut self, name: &str) -> Self {
        self.method = Some(name.into());
        self
    }

    pub fn c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn lambda(mut self, lambda: Option<f64>) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn rank(mut self, rank: usize) -> Self {
        self.rank = Some(rank);
        self
    }

    pub fn replicate(mut self, i: usize) -> Self {
        self.replicate = Some(i);
        self
    }

    pub fn provenance(mut self, p: &str) -> Self {
        self.provenance = Some(p.into());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A successful measurement; non-finite values become failed rows.
    pub fn ok(mut self, value: f64, std_error: Option<f64>) -> Self {
        if value.is_finite() {
            self.value = Some(value);
            self.std_error = std_error.filter(|s| s.is_finite());
            self.status = Some(Status::Ok);
        } else {
            self.status = Some(Status::Failed);
            self.note = Some(if value.is_nan() { "value is not a number" } else { "value is infinite" }.to_string());
        }
        self
    }

    pub fn failed(mut self, message: impl Into<String>) -> Self {
        self.status = Some(Status::Failed);
        self.note = Some(message.into());
        self
    }

    pub fn skipped(mut self, message: impl Into<String>) -> Self {
        self.status = Some(Status::Skipped);
        self.note = Some(message.into());
        self
    }

    /// `Ok(v)` becomes an ok row, `Err` a failed one.
    pub fn outcome<E: std::fmt::Display>(self, value: std::result::Result<f64, E>) -> Self {
        match value {
            Ok(v) => self.ok(v, None),
            Err(e) => self.failed(e.to_string()),
        }
    }

    pub fn status(&self) -> Status {
        self.status.unwrap_or(Status::Failed)
    }

    fn cells(&self) -> [String; 13] {
        fn num(v: Option<f64>) -> String {
            v.map(|x| format!("{x}")).unwrap_or_default()
        }
        fn int(v: Option<usize>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        [
            self.dataset.clone().unwrap_or_default(),
            self.method.clone().unwrap_or_default(),
            num(self.c),
            num(self.kappa),
            num(self.lambda),
            int(self.rank),
            int(self.replicate),
            self.metric.clone(),
            self.provenance.clone().unwrap_or_default(),
            num(self.value),
            num(self.std_error),
            self.status().as_str().into(),
            self.note.clone().unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = ReportRow>) {
        self.rows.extend(rows);
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status() == Status::Failed).count()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.cells())?;
        }
        Ok(w.into_inner().context("flushing CSV buffer")?)
    }
}

/// Reads a report back; used by tests and the acceptance suite.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let s = |i: usize| Some(rec[i].to_string()).filter(|v| !v.is_empty());
        let f = |i: usize| -> Result<Option<f64>> { Ok(s(i).map(|v| v.parse()).transpose()?) };
        let u = |i: usize| -> Result<Option<usize>> { Ok(s(i).map(|v| v.parse()).transpose()?) };
        let status = match &rec[11] {
            "ok" => Status::Ok,
            "skipped" => Status::Skipped,
            _ => Status::Failed,
        };
        rows.push(ReportRow {
            dataset: s(0),
            method: s(1),
            c: f(2)?,
            kappa: f(3)?,
            lambda: f(4)?,
            rank: u(5)?,
            replicate: u(6)?,
            metric: rec[7].to_string(),
            provenance: s(8),
            value: f(9)?,
            std_error: f(10)?,
            status: Some(status),
            note: s(12),
        });
    }
    Ok(rows)
}

/// Writes `report.csv`, `resolved_config.json` and `figure_manifest.txt`
/// into `dir`, returning the report path.
pub fn write_outputs<C: Serialize>(
    dir: &Path,
    report: &Report,
    resolved: &C,
    seed: u64,
    manifest: &str,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let report_path = dir.join("report.csv");
    std::fs::write(&report_path, report.to_csv()?).with_context(|| format!("writing {}", report_path.display()))?;

    #[derive(Serialize)]
    struct Echo<'a, C> {
        seed: u64,
        config: &'a C,
    }
    let mut json = serde_json::to_vec_pretty(&Echo { seed, config: resolved })?;
    json.push(b'\n');
    std::fs::write(dir.join("resolved_config.json"), json)?;

    let mut f = std::fs::File::create(dir.join("figure_manifest.txt"))?;
    f.write_all(manifest.as_bytes())?;
    Ok(report_path)
}
