//! Import of per-trial CSV recordings: `<input>/<subject>/<trial>.csv`, one
//! row per channel, plus a label table `subject,trial,dimension,score[,class]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::manifest::{Dimension, Label, Manifest, Store, SubjectEntry, TrialEntry};
use super::preprocess::{binarize_label, preprocess, segment_trial, PreprocConfig, SCORE_THRESHOLD};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Deserialize)]
struct LabelRow {
    subject: String,
    trial: String,
    dimension: String,
    #[serde(default)]
    score: Option<f64>,
    #[serde(default)]
    class: Option<usize>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (line, column) = match e.position() {
        Some(p) => (p.line() as usize, 0),
        None => (0, 0),
    };
    Error::Parse { path: path.to_path_buf(), line, column, msg: e.to_string() }
}

/// Reads a channels-by-samples CSV without header into `[C, N]`.
pub fn read_trial_csv(path: &Path) -> Result<Tensor<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: r + 1,
                    column: col + 1,
                    msg: format!("{field:?} is not a finite number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Validation(format!("{} has no rows", path.display())));
    }
    Tensor::from_rows(&rows).map_err(|_| Error::Validation(format!("{}: rows differ in length", path.display())))
}

fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    reader.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

/// Converts a directory of CSV trials into a preprocessed, segmented store.
pub fn import_csv(input: &Path, labels: &Path, rate: f64, config: &PreprocConfig, out: &Path) -> Result<Store> {
    config.validate(rate)?;
    let label_rows = read_labels(labels)?;
    let mut by_trial: BTreeMap<(String, String), Vec<Label>> = BTreeMap::new();
    let mut dims: BTreeMap<String, usize> = BTreeMap::new();
    for row in label_rows {
        let class = match (row.class, row.score) {
            (Some(c), _) => c,
            (None, Some(s)) => binarize_label(s, SCORE_THRESHOLD)?,
            (None, None) => {
                return Err(Error::Validation(format!("label for {}/{} has neither score nor class", row.subject, row.trial)))
            }
        };
        let classes = dims.entry(row.dimension.clone()).or_insert(2);
        *classes = (*classes).max(class + 1);
        by_trial
            .entry((row.subject, row.trial))
            .or_default()
            .push(Label { dimension: row.dimension, score: row.score, class });
    }

    let mut subject_dirs: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subject_dirs.sort();

    let out_rate = config.target_rate.unwrap_or(rate);
    let timepoints = (out_rate * config.segment_seconds).round() as usize;
    let mut channels = None;
    let mut subjects = Vec::new();
    let mut blobs = Vec::new();
    for dir in subject_dirs {
        let sid = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let mut trials = Vec::new();
        for file in files {
            let tid = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let raw = read_trial_csv(&file)?;
            if *channels.get_or_insert(raw.shape()[0]) != raw.shape()[0] {
                return Err(Error::Validation(format!("{} has {} channels, expected {:?}", file.display(), raw.shape()[0], channels)));
            }
            let clean = preprocess(&raw, rate, config)?;
            let segs = segment_trial(&clean, out_rate, config.segment_seconds)?;
            let labels = by_trial
                .get(&(sid.clone(), tid.clone()))
                .cloned()
                .ok_or_else(|| Error::Validation(format!("no labels for {sid}/{tid}")))?;
            trials.push(TrialEntry { id: tid.clone(), segments: segs.shape()[0], labels, blob: format!("blobs/{sid}_{tid}.eft") });
            blobs.push(segs.cast::<f32>());
        }
        if !trials.is_empty() {
            subjects.push(SubjectEntry { id: sid, trials });
        }
    }
    let manifest = Manifest {
        name: input.file_name().and_then(|s| s.to_str()).unwrap_or("imported").to_string(),
        sampling_rate: out_rate,
        channels: channels.ok_or_else(|| Error::Validation(format!("no CSV trials under {}", input.display())))?,
        timepoints,
        dimensions: dims.into_iter().map(|(name, classes)| Dimension { name, classes }).collect(),
        subjects,
    };
    Store::create(out, manifest, &blobs)
}

/// Re-runs preprocessing on every trial of a store: the segments of a trial
/// are joined back into one recording, filtered, resampled and cut again.
pub fn preprocess_store(store: &Store, config: &PreprocConfig, out: &Path) -> Result<Store> {
    let m = &store.manifest;
    config.validate(m.sampling_rate)?;
    let out_rate = config.target_rate.unwrap_or(m.sampling_rate);
    let (c, t) = (m.channels, m.timepoints);
    let mut manifest = m.clone();
    let mut blobs = Vec::new();
    for (si, s) in m.subjects.iter().enumerate() {
        for (ti, trial) in s.trials.iter().enumerate() {
            let blob = store.trial_blob(trial)?;
            let n = trial.segments * t;
            let mut joined = vec![0.0f64; c * n];
            for (seg, chunk) in blob.data().chunks(c * t).enumerate() {
                for ch in 0..c {
                    for (k, &v) in chunk[ch * t..(ch + 1) * t].iter().enumerate() {
                        joined[ch * n + seg * t + k] = v as f64;
                    }
                }
            }
            let clean = preprocess(&Tensor::new(&[c, n], joined)?, m.sampling_rate, config)?;
            let segs = segment_trial(&clean, out_rate, config.segment_seconds)?;
            let entry = &mut manifest.subjects[si].trials[ti];
            entry.segments = segs.shape()[0];
            blobs.push(segs.cast::<f32>());
        }
    }
    manifest.sampling_rate = out_rate;
    manifest.timepoints = (out_rate * config.segment_seconds).round() as usize;
    Store::create(out, manifest, &blobs)
}
