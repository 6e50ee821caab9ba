use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_CSV_HEADER: &str =
    "fold,subject,dimension,p_acc,p_f,nmi,n_test,train_seconds,extract_seconds,decode_seconds,status";

/// Settings that produced a report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub features: String,
    pub decoder: String,
    pub variant: String,
    pub kappa: usize,
    pub eta: f64,
    pub latent: usize,
    pub seed: u64,
    pub vote_per_trial: bool,
    pub shuffled_labels: bool,
}

/// One (fold, dimension) result. Metrics are empty for failed folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub fold: usize,
    pub subject: String,
    pub dimension: String,
    pub p_acc: Option<f64>,
    pub p_f: Option<f64>,
    pub nmi: Option<f64>,
    pub n_test: usize,
    pub train_seconds: f64,
    pub extract_seconds: f64,
    pub decode_seconds: f64,
    pub status: String,
}

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub subject: String,
    pub trial: String,
    pub segment: usize,
    pub dimension: String,
    pub predicted: usize,
    #[serde(rename = "true")]
    pub truth: usize,
}

/// Mean and population standard deviation of one metric over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionSummary {
    pub dimension: String,
    pub folds_ok: usize,
    pub folds_failed: usize,
    pub p_acc: Option<Stat>,
    pub p_f: Option<Stat>,
    pub nmi: Option<Stat>,
    pub train_seconds: f64,
    pub extract_seconds: f64,
    pub decode_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    /// Dimensions in order of first appearance.
    pub fn dimensions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.dimension.as_str()) {
                out.push(&r.dimension);
            }
        }
        out
    }

    /// Aggregates per dimension; timings are summed over folds.
    pub fn summary(&self) -> Vec<DimensionSummary> {
        self.dimensions()
            .into_iter()
            .map(|d| {
                let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.dimension == d).collect();
                let ok: Vec<&&ReportRow> = rows.iter().filter(|r| r.is_ok()).collect();
                let pick = |f: fn(&ReportRow) -> Option<f64>| Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
                DimensionSummary {
                    dimension: d.to_string(),
                    folds_ok: ok.len(),
                    folds_failed: rows.len() - ok.len(),
                    p_acc: pick(|r| r.p_acc),
                    p_f: pick(|r| r.p_f),
                    nmi: pick(|r| r.nmi),
                    train_seconds: rows.iter().map(|r| r.train_seconds).sum(),
                    extract_seconds: rows.iter().map(|r| r.extract_seconds).sum(),
                    decode_seconds: rows.iter().map(|r| r.decode_seconds).sum(),
                }
            })
            .collect()
    }

    /// Mean accuracy over successful folds of all dimensions.
    pub fn mean_p_acc(&self) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.is_ok()).filter_map(|r| r.p_acc).collect();
        Stat::of(&v).map(|s| s.mean)
    }

    pub fn decode_seconds(&self) -> f64 {
        self.rows.iter().map(|r| r.decode_seconds).sum()
    }

    /// Training and extraction happen once per fold, so each fold counts once.
    pub fn fold_seconds(&self) -> (f64, f64) {
        let mut seen = std::collections::BTreeSet::new();
        let (mut train, mut extract) = (0.0, 0.0);
        for r in &self.rows {
            if seen.insert(r.fold) {
                train += r.train_seconds;
                extract += r.extract_seconds;
            }
        }
        (train, extract)
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(File::create(path).map_err(|e| Error::io(path, e))?)
            .map_err(|e| with_path(e, path))
    }

    /// Rows only; the metadata lives in the JSON form.
    pub fn read_csv_rows(path: &Path) -> Result<Vec<ReportRow>> {
        read_rows(path)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Validation(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: e.line(), column: e.column(), msg: e.to_string() })
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Validation(msg) => Error::Io { path: path.into(), source: std::io::Error::other(msg) },
        other => other,
    }
}

pub(crate) fn write_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Validation(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Validation(e.to_string()))
}

pub(crate) fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (line, column) = e.position().map_or((0, 0), |p| (p.line() as usize, 1));
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse { path: path.into(), line, column, msg: format!("{kind:?}") },
    }
}

pub fn write_predictions(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    write_rows(File::create(path).map_err(|e| Error::io(path, e))?, rows).map_err(|e| with_path(e, path))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    read_rows(path)
}

fn cell(s: Option<Stat>, scale: f64, digits: usize) -> String {
    match s {
        Some(s) => format!("{:.d$} ± {:.d$}", s.mean * scale, s.std * scale, d = digits),
        None => "n/a".into(),
    }
}

/// Methods as rows and one `P_acc | P_f` column pair per dimension, as
/// mean ± std over folds, followed by mean NMI.
pub fn paper_table(entries: &[(String, &EvalReport)]) -> String {
    let mut dims: Vec<String> = Vec::new();
    for (_, r) in entries {
        for d in r.dimensions() {
            if !dims.iter().any(|x| x == d) {
                dims.push(d.to_string());
            }
        }
    }
    let mut out = String::from("| Method |");
    for d in &dims {
        let _ = write!(out, " {d} P_acc (%) | {d} P_f (%) | {d} NMI |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|---|---|".repeat(dims.len()));
    out.push('\n');
    for (name, report) in entries {
        let summary = report.summary();
        let _ = write!(out, "| {name} |");
        for d in &dims {
            match summary.iter().find(|s| &s.dimension == d) {
                Some(s) => {
                    let _ = write!(out, " {} | {} | {} |", cell(s.p_acc, 1.0, 2), cell(s.p_f, 1.0, 2), cell(s.nmi, 1.0, 4));
                }
                None => out.push_str(" n/a | n/a | n/a |"),
            }
        }
        out.push('\n');
    }
    out
}
