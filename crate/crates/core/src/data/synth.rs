//! Synthetic EEG with a known class signal: each class adds an oscillation
//! at its own frequency through its own spatial pattern, on top of
//! temporally correlated noise. Subjects perturb the pattern and frequency
//! slightly so cross-subject generalization is not trivial.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::{Dimension, Label, Manifest, Store, SubjectEntry, TrialEntry};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CLASS_FREQUENCIES: [f64; 4] = [6.0, 10.5, 20.0, 25.0];
const AR_COEFF: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub name: String,
    pub subjects: usize,
    pub trials: usize,
    pub segments: usize,
    pub classes: usize,
    pub channels: usize,
    /// Sampling rate in Hz; one segment spans one second.
    pub rate: usize,
    pub amplitude: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            subjects: 6,
            trials: 10,
            segments: 30,
            classes: 2,
            channels: 8,
            rate: 64,
            amplitude: 1.0,
            noise: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.trials == 0 || self.segments == 0 || self.channels == 0 || self.rate == 0 {
            return Err(Error::config("synthetic corpus extents must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::config("a synthetic corpus needs at least 2 classes"));
        }
        if class_frequency(self.classes - 1) >= self.rate as f64 / 2.0 {
            return Err(Error::config(format!(
                "class {} oscillates at {} Hz, above the Nyquist frequency of {} Hz",
                self.classes - 1,
                class_frequency(self.classes - 1),
                self.rate as f64 / 2.0
            )));
        }
        if !(self.noise >= 0.0 && self.amplitude >= 0.0) {
            return Err(Error::config("amplitude and noise must be non-negative"));
        }
        Ok(())
    }
}

pub fn class_frequency(class: usize) -> f64 {
    match CLASS_FREQUENCIES.get(class) {
        Some(&f) => f,
        None => 25.0 + 4.0 * (class + 1 - CLASS_FREQUENCIES.len()) as f64,
    }
}

/// Spatial mode `k` over `c` channels, scaled to unit RMS.
fn spatial_pattern(k: usize, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|ch| (PI * (ch as f64 + 0.5) / c as f64 * (k + 1) as f64).sin()).collect();
    let norm = (raw.iter().map(|v| v * v).sum::<f64>() / c as f64).sqrt().max(1e-12);
    raw.iter().map(|v| v / norm).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Builds the manifest and one `[segments, C, T]` blob per trial.
pub fn synth_corpus(spec: &SynthSpec) -> Result<(Manifest, Vec<Tensor<f32>>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (c, t) = (spec.channels, spec.rate);
    let rate = spec.rate as f64;
    let n = spec.segments * t;
    let innovation = (1.0 - AR_COEFF * AR_COEFF).sqrt();
    let mut subjects = Vec::with_capacity(spec.subjects);
    let mut blobs = Vec::with_capacity(spec.subjects * spec.trials);

    for s in 0..spec.subjects {
        let sid = format!("s{:02}", s + 1);
        let patterns: Vec<Vec<f64>> = (0..spec.classes)
            .map(|k| spatial_pattern(k, c).into_iter().map(|v| v + 0.15 * normal(&mut rng)).collect())
            .collect();
        let shift = rng.random_range(-0.5..0.5);
        let mut classes: Vec<usize> = (0..spec.trials).map(|i| i % spec.classes).collect();
        classes.shuffle(&mut rng);

        let mut trials = Vec::with_capacity(spec.trials);
        for (ti, &k) in classes.iter().enumerate() {
            let tid = format!("t{:02}", ti + 1);
            let freq = class_frequency(k) + shift;
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = spec.amplitude * (1.0 + 0.1 * normal(&mut rng));
            let mut trial = vec![0.0f64; c * n];
            for ch in 0..c {
                let mut state = normal(&mut rng);
                for i in 0..n {
                    state = AR_COEFF * state + innovation * normal(&mut rng);
                    let wave = (2.0 * PI * freq * i as f64 / rate + phase).sin();
                    trial[ch * n + i] = amp * patterns[k][ch] * wave + spec.noise * state;
                }
            }
            // Reorder [C, segments·T] into [segments, C, T].
            let mut blob = Vec::with_capacity(c * n);
            for seg in 0..spec.segments {
                for ch in 0..c {
                    blob.extend(trial[ch * n + seg * t..ch * n + (seg + 1) * t].iter().map(|&v| v as f32));
                }
            }
            blobs.push(Tensor::new(&[spec.segments, c, t], blob)?);
            let score = (spec.classes == 2).then(|| {
                if k == 1 {
                    rng.random_range(5.5..=9.0)
                } else {
                    rng.random_range(1.0..=4.5)
                }
            });
            trials.push(TrialEntry {
                blob: format!("blobs/{sid}_{tid}.eft"),
                id: tid,
                segments: spec.segments,
                labels: vec![Label { dimension: "valence".into(), score, class: k }],
            });
        }
        subjects.push(SubjectEntry { id: sid, trials });
    }
    let manifest = Manifest {
        name: spec.name.clone(),
        sampling_rate: rate,
        channels: c,
        timepoints: t,
        dimensions: vec![Dimension { name: "valence".into(), classes: spec.classes }],
        subjects,
    };
    Ok((manifest, blobs))
}

/// Generates a corpus and writes it under `dir`.
pub fn synth_dataset(spec: &SynthSpec, dir: &Path) -> Result<Store> {
    let (manifest, blobs) = synth_corpus(spec)?;
    Store::create(dir, manifest, &blobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::preprocess::binarize_label;

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec { subjects: 2, trials: 4, segments: 2, ..SynthSpec::default() };
        let a = synth_corpus(&spec).unwrap();
        assert_eq!(a, synth_corpus(&spec).unwrap());
        let b = synth_corpus(&SynthSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.1, b.1);
    }

    #[test]
    fn class_counts_and_scores() {
        let spec = SynthSpec { subjects: 3, trials: 6, segments: 5, ..SynthSpec::default() };
        let (m, blobs) = synth_corpus(&spec).unwrap();
        m.validate().unwrap();
        assert_eq!(blobs.len(), 18);
        for s in &m.subjects {
            let high: usize = s.trials.iter().filter(|t| t.labels[0].class == 1).map(|t| t.segments).sum();
            assert_eq!(high, 15);
            for t in &s.trials {
                let l = &t.labels[0];
                assert_eq!(binarize_label(l.score.unwrap(), 5.0).unwrap(), l.class);
            }
        }
    }

    #[test]
    fn rejects_class_above_nyquist() {
        let spec = SynthSpec { classes: 4, rate: 32, ..SynthSpec::default() };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }
}
