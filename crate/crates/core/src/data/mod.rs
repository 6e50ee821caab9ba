//! Corpus storage, preprocessing, segmentation and the synthetic generator.

mod import;
mod manifest;
mod preprocess;
mod synth;

pub use import::{import_csv, preprocess_store, read_trial_csv};
pub use manifest::{Corpus, Dimension, Label, Manifest, Store, SubjectEntry, TrialEntry, MANIFEST_FILE};
pub use preprocess::{binarize_label, preprocess, segment_trial, PreprocConfig, SCORE_THRESHOLD};
pub use synth::{class_frequency, synth_corpus, synth_dataset, SynthSpec, CLASS_FREQUENCIES};
