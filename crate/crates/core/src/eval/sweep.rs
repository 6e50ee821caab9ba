use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{decode_prepared, prepare_folds, run_experiment, ExperimentConfig, ExperimentOutput};
use super::report::{write_rows, EvalReport};
use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::model::Segment;
use crate::scalar::Scalar;
use crate::signal::resample_fft;
use crate::tensor::Tensor;

pub const KAPPA_GRID: [usize; 7] = [5, 10, 15, 20, 25, 30, 35];
pub const ETA_GRID: [f64; 7] = [1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 15.0];

/// Values tried for each factor; factors are varied one at a time around
/// the base configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub timepoints: Vec<usize>,
    pub kappa: Vec<usize>,
    pub eta: Vec<f64>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.timepoints.len() + self.kappa.len() + self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Timepoints,
    Kappa,
    Eta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Timepoints => "timepoints",
            SweepAxis::Kappa => "kappa",
            SweepAxis::Eta => "eta",
        }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub value: f64,
    pub output: ExperimentOutput,
}

/// Summed wall-clock seconds over folds at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub parameter: String,
    pub value: f64,
    pub train_seconds: f64,
    pub extract_seconds: f64,
    pub decode_seconds: f64,
    pub mean_p_acc: Option<f64>,
}

pub const TIMING_CSV_HEADER: &str = "parameter,value,train_seconds,extract_seconds,decode_seconds,mean_p_acc";

impl TimingRow {
    fn of(axis: SweepAxis, value: f64, report: &EvalReport) -> Self {
        let (train, extract) = report.fold_seconds();
        Self {
            parameter: axis.name().into(),
            value,
            train_seconds: train,
            extract_seconds: extract,
            decode_seconds: report.decode_seconds(),
            mean_p_acc: report.mean_p_acc(),
        }
    }
}

pub fn write_timing_csv(path: &Path, rows: &[TimingRow]) -> Result<()> {
    write_rows(File::create(path).map_err(|e| Error::io(path, e))?, rows)
}

#[derive(Debug)]
pub struct SweepOutput {
    pub points: Vec<SweepPoint>,
    pub timing: Vec<TimingRow>,
}

/// Resamples every segment to `timepoints` samples; returns the corpus and
/// its new sampling rate.
pub fn resample_corpus<S: Scalar>(corpus: &Corpus<S>, rate: f64, timepoints: usize) -> Result<(Corpus<S>, f64)> {
    let first = corpus.segments.first().ok_or_else(|| Error::contract("corpus is empty"))?;
    let (c, t) = (first.data.shape()[0], first.data.shape()[1]);
    if timepoints == 0 {
        return Err(Error::config("input size must be positive"));
    }
    let segments = corpus
        .segments
        .iter()
        .map(|s| {
            if s.data.shape() != [c, t] {
                return Err(Error::dim("resample_corpus", format!("segment {:?} is {:?}", s.id, s.data.shape())));
            }
            let data = s
                .data
                .data()
                .chunks(t)
                .flat_map(|row| resample_fft(&row.iter().map(|v| v.as_f64()).collect::<Vec<_>>(), timepoints))
                .map(S::of)
                .collect();
            Ok(Segment { id: s.id.clone(), data: Tensor::new(&[c, timepoints], data)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let resampled = Corpus { segments, dimensions: corpus.dimensions.clone(), labels: corpus.labels.clone() };
    Ok((resampled, rate * timepoints as f64 / t as f64))
}

/// One experiment per grid value. Input-size points rerun the whole
/// pipeline; κ and η points reuse each fold's fitted features and only
/// repeat the decoding.
pub fn sweep<S: Scalar>(corpus: &Corpus<S>, rate: f64, base: &ExperimentConfig, grid: &SweepGrid) -> Result<SweepOutput> {
    if grid.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    base.validate()?;
    let mut points = Vec::with_capacity(grid.len());
    for &t in &grid.timepoints {
        let (resampled, new_rate) = resample_corpus(corpus, rate, t)?;
        let output = run_experiment(&resampled, new_rate, base)?;
        points.push(SweepPoint { axis: SweepAxis::Timepoints, value: t as f64, output });
    }
    if !grid.kappa.is_empty() || !grid.eta.is_empty() {
        let prepared = prepare_folds(corpus, rate, base)?;
        for &kappa in &grid.kappa {
            let mut cfg = base.clone();
            cfg.decode.kappa = kappa;
            cfg.validate()?;
            points.push(SweepPoint { axis: SweepAxis::Kappa, value: kappa as f64, output: decode_prepared(corpus, &prepared, &cfg)? });
        }
        for &eta in &grid.eta {
            let mut cfg = base.clone();
            cfg.decode.eta = eta;
            cfg.validate()?;
            points.push(SweepPoint { axis: SweepAxis::Eta, value: eta, output: decode_prepared(corpus, &prepared, &cfg)? });
        }
    }
    let timing = points.iter().map(|p| TimingRow::of(p.axis, p.value, &p.output.report)).collect();
    Ok(SweepOutput { points, timing })
}
