use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Segment, SegmentId};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor, write_tensor, Tensor};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub dimension: String,
    /// Raw rating on the 1–9 scale; absent for categorical corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub id: String,
    pub segments: usize,
    pub labels: Vec<Label>,
    /// Blob path relative to the manifest directory.
    pub blob: String,
}

impl TrialEntry {
    pub fn label(&self, dimension: &str) -> Option<&Label> {
        self.labels.iter().find(|l| l.dimension == dimension)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub sampling_rate: f64,
    pub channels: usize,
    pub timepoints: usize,
    pub dimensions: Vec<Dimension>,
    pub subjects: Vec<SubjectEntry>,
}

impl Manifest {
    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0) || self.channels == 0 || self.timepoints == 0 {
            return Err(Error::Validation("sampling rate, channels and timepoints must be positive".into()));
        }
        if self.subjects.is_empty() {
            return Err(Error::Validation("manifest lists no subjects".into()));
        }
        if self.dimensions.iter().any(|d| d.classes < 2) {
            return Err(Error::Validation("every label dimension needs at least 2 classes".into()));
        }
        let mut ids = HashSet::new();
        for s in &self.subjects {
            if !ids.insert(&s.id) {
                return Err(Error::Validation(format!("duplicate subject id {:?}", s.id)));
            }
            if s.trials.is_empty() {
                return Err(Error::Validation(format!("subject {:?} has 0 trials", s.id)));
            }
            let mut trial_ids = HashSet::new();
            for t in &s.trials {
                if !trial_ids.insert(&t.id) {
                    return Err(Error::Validation(format!("subject {:?}: duplicate trial id {:?}", s.id, t.id)));
                }
                if t.segments == 0 {
                    return Err(Error::Validation(format!("trial {:?}/{:?} has 0 segments", s.id, t.id)));
                }
                for d in &self.dimensions {
                    let l = t.label(&d.name).ok_or_else(|| {
                        Error::Validation(format!("trial {:?}/{:?} lacks a {:?} label", s.id, t.id, d.name))
                    })?;
                    if l.class >= d.classes {
                        return Err(Error::Validation(format!(
                            "trial {:?}/{:?}: class {} outside 0..{}",
                            s.id, t.id, l.class, d.classes
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self, name: &str) -> Result<&Dimension> {
        self.dimensions
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::config(format!("manifest has no label dimension {name:?}")))
    }

    pub fn total_segments(&self) -> usize {
        self.subjects.iter().flat_map(|s| &s.trials).map(|t| t.segments).sum()
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        self.subjects.iter().map(|s| s.id.as_str()).collect()
    }
}

/// A manifest together with the directory its blob paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct Store {
    pub manifest: Manifest,
    pub root: PathBuf,
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse { path: path.to_path_buf(), line: e.line(), column: e.column(), msg: e.to_string() }
}

impl Store {
    /// Reads and validates `manifest.json` (or the given file) and checks
    /// that every blob exists.
    pub fn open(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| parse_error(&file, e))?;
        manifest.validate()?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let store = Self { manifest, root };
        for s in &store.manifest.subjects {
            for t in &s.trials {
                let p = store.root.join(&t.blob);
                if !p.is_file() {
                    return Err(Error::Integrity(format!("missing blob {}", p.display())));
                }
            }
        }
        Ok(store)
    }

    /// Writes the manifest and one `[segments, C, T]` f32 blob per trial.
    /// `blobs` must follow the manifest's subject/trial order.
    pub fn create(dir: &Path, manifest: Manifest, blobs: &[Tensor<f32>]) -> Result<Self> {
        manifest.validate()?;
        let n_trials: usize = manifest.subjects.iter().map(|s| s.trials.len()).sum();
        if blobs.len() != n_trials {
            return Err(Error::contract(format!("{} blobs for {n_trials} trials", blobs.len())));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let trials = manifest.subjects.iter().flat_map(|s| &s.trials);
        for (t, blob) in trials.zip(blobs) {
            let want = [t.segments, manifest.channels, manifest.timepoints];
            if blob.shape() != want {
                return Err(Error::dim("store", format!("trial {:?}: blob {:?}, expected {want:?}", t.id, blob.shape())));
            }
            let p = dir.join(&t.blob);
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_tensor(&p, blob)?;
        }
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        Ok(Self { manifest, root: dir.to_path_buf() })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    /// Loads one trial blob and checks its extents against the manifest.
    pub fn trial_blob(&self, trial: &TrialEntry) -> Result<Tensor<f32>> {
        let t: Tensor<f32> = read_tensor(&self.root.join(&trial.blob))?;
        let m = &self.manifest;
        let want = [trial.segments, m.channels, m.timepoints];
        if t.shape() != want {
            return Err(Error::Integrity(format!("blob {} is {:?}, manifest says {want:?}", trial.blob, t.shape())));
        }
        if let Some(i) = t.first_non_finite() {
            return Err(Error::Integrity(format!("blob {} has a non-finite sample at {i}", trial.blob)));
        }
        Ok(t)
    }

    /// Every segment in manifest order, with its class for each dimension.
    pub fn load_corpus<S: Scalar>(&self) -> Result<Corpus<S>> {
        let m = &self.manifest;
        let mut segments = Vec::with_capacity(m.total_segments());
        let mut labels = vec![Vec::with_capacity(m.total_segments()); m.dimensions.len()];
        for s in &m.subjects {
            for t in &s.trials {
                let blob = self.trial_blob(t)?;
                for i in 0..t.segments {
                    segments.push(Segment {
                        id: SegmentId { subject: s.id.clone(), trial: t.id.clone(), index: i },
                        data: blob.index_outer(i)?.cast(),
                    });
                    for (d, dim) in m.dimensions.iter().enumerate() {
                        labels[d].push(t.label(&dim.name).expect("validated").class);
                    }
                }
            }
        }
        Ok(Corpus { segments, dimensions: m.dimensions.clone(), labels })
    }
}

/// Segments of a store plus their labels, dimension-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus<S> {
    pub segments: Vec<Segment<S>>,
    pub dimensions: Vec<Dimension>,
    /// `labels[d][i]` is the class of segment `i` on dimension `d`.
    pub labels: Vec<Vec<usize>>,
}

impl<S> Corpus<S> {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn dimension_index(&self, name: &str) -> Result<usize> {
        self.dimensions
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| Error::config(format!("corpus has no label dimension {name:?}")))
    }
}
