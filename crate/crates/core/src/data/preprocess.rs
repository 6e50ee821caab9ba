use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{resample_fft, Biquad, Pass, Sos};
use crate::tensor::Tensor;

pub const NOTCH_Q: f64 = 30.0;

/// Every stage can be switched off; an all-off config is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocConfig {
    /// High-pass edge in Hz.
    pub low_hz: Option<f64>,
    /// Low-pass edge in Hz.
    pub high_hz: Option<f64>,
    pub notch_hz: Option<f64>,
    pub common_average: bool,
    pub target_rate: Option<f64>,
    pub segment_seconds: f64,
    /// Butterworth order of each edge.
    pub filter_order: usize,
}

impl Default for PreprocConfig {
    fn default() -> Self {
        Self {
            low_hz: Some(4.0),
            high_hz: Some(45.0),
            notch_hz: None,
            common_average: true,
            target_rate: None,
            segment_seconds: 1.0,
            filter_order: 6,
        }
    }
}

impl PreprocConfig {
    pub fn identity() -> Self {
        Self { low_hz: None, high_hz: None, notch_hz: None, common_average: false, target_rate: None, ..Self::default() }
    }

    pub fn validate(&self, rate: f64) -> Result<()> {
        if !(rate > 0.0) {
            return Err(Error::config("sampling rate must be positive"));
        }
        if !(self.segment_seconds > 0.0) {
            return Err(Error::config("segment length must be positive"));
        }
        let out_rate = self.target_rate.unwrap_or(rate);
        if !(out_rate > 0.0) {
            return Err(Error::config("target rate must be positive"));
        }
        let nyquist = rate.min(out_rate) / 2.0;
        for (name, edge) in [("low", self.low_hz), ("high", self.high_hz), ("notch", self.notch_hz)] {
            if let Some(f) = edge {
                if !(f > 0.0 && f < nyquist) {
                    return Err(Error::config(format!("{name} edge {f} Hz must lie in (0, {nyquist}) Hz")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.low_hz, self.high_hz) {
            if lo >= hi {
                return Err(Error::config(format!("band edges must satisfy low < high, got {lo} and {hi}")));
            }
        }
        Ok(())
    }

    fn filter(&self, rate: f64) -> Result<Sos> {
        let mut sos = Sos::default();
        if let Some(lo) = self.low_hz {
            sos = sos.then(Sos::butterworth(Pass::High, self.filter_order, lo, rate)?);
        }
        if let Some(hi) = self.high_hz {
            sos = sos.then(Sos::butterworth(Pass::Low, self.filter_order, hi, rate)?);
        }
        if let Some(f) = self.notch_hz {
            sos.sections.push(Biquad::notch(f, rate, NOTCH_Q));
        }
        Ok(sos)
    }
}

/// Re-reference, zero-phase filter, then resample a `[C, N]` trial.
pub fn preprocess<S: Scalar>(trial: &Tensor<S>, rate: f64, config: &PreprocConfig) -> Result<Tensor<S>> {
    config.validate(rate)?;
    if trial.rank() != 2 {
        return Err(Error::dim("preprocess", format!("expected [C, N], got {:?}", trial.shape())));
    }
    let (c, n) = (trial.shape()[0], trial.shape()[1]);
    let mut rows: Vec<Vec<f64>> = (0..c).map(|i| trial.data()[i * n..(i + 1) * n].iter().map(|v| v.as_f64()).collect()).collect();

    if config.common_average {
        for t in 0..n {
            let mean = rows.iter().map(|r| r[t]).sum::<f64>() / c as f64;
            rows.iter_mut().for_each(|r| r[t] -= mean);
        }
    }
    let sos = config.filter(rate)?;
    if !sos.sections.is_empty() {
        rows = rows.iter().map(|r| sos.filtfilt(r)).collect();
    }
    let m = match config.target_rate {
        Some(target) if target != rate => ((n as f64) * target / rate).round().max(1.0) as usize,
        _ => n,
    };
    if m != n {
        rows = rows.iter().map(|r| resample_fft(r, m)).collect();
    }
    let data = rows.into_iter().flatten().map(S::of).collect();
    Tensor::new(&[c, m], data)
}

/// Cuts a `[C, N]` trial into consecutive non-overlapping windows of
/// `round(rate·seconds)` samples, returning `[segments, C, T]`. The trailing
/// remainder is dropped.
pub fn segment_trial<S: Scalar>(trial: &Tensor<S>, rate: f64, seconds: f64) -> Result<Tensor<S>> {
    if trial.rank() != 2 {
        return Err(Error::dim("segment_trial", format!("expected [C, N], got {:?}", trial.shape())));
    }
    let window = (rate * seconds).round() as usize;
    if window == 0 {
        return Err(Error::config("segment window is shorter than one sample"));
    }
    let (c, n) = (trial.shape()[0], trial.shape()[1]);
    let count = n / window;
    if count == 0 {
        return Err(Error::contract(format!("trial of {n} samples is shorter than one {window}-sample window")));
    }
    let mut data = Vec::with_capacity(count * c * window);
    for s in 0..count {
        for ch in 0..c {
            let start = ch * n + s * window;
            data.extend_from_slice(&trial.data()[start..start + window]);
        }
    }
    Tensor::new(&[count, c, window], data)
}

pub const SCORE_THRESHOLD: f64 = 5.0;

/// 1 ("high") iff `score > threshold`; scores must lie on the 1–9 scale.
pub fn binarize_label(score: f64, threshold: f64) -> Result<usize> {
    if !(1.0..=9.0).contains(&score) {
        return Err(Error::contract(format!("score {score} is outside the 1-9 rating scale")));
    }
    Ok(usize::from(score > threshold))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::signal::rms;

    fn sine_trial(c: usize, n: usize, freq: f64, rate: f64) -> Tensor<f64> {
        let data = (0..c)
            .flat_map(|ch| (0..n).map(move |i| (ch as f64 + 1.0) * (2.0 * PI * freq * i as f64 / rate).sin()))
            .collect();
        Tensor::new(&[c, n], data).unwrap()
    }

    #[test]
    fn mains_hum_is_removed() {
        // One minute, with a phase that leaves both ends off zero.
        let rate = 256.0;
        let n = 60 * 256;
        let x = Tensor::new(&[1, n], (0..n).map(|i| (2.0 * PI * 60.0 * i as f64 / rate + 0.7).sin()).collect()).unwrap();
        let cfg = PreprocConfig { common_average: false, ..PreprocConfig::default() };
        let y = preprocess(&x, rate, &cfg).unwrap();
        let ratio = rms(y.data()) / rms(x.data());
        assert!(ratio < 0.05, "{ratio}");
    }

    #[test]
    fn common_average_has_zero_channel_mean() {
        let mut x = sine_trial(4, 100, 7.0, 64.0);
        x.data_mut()[17] += 3.0;
        let cfg = PreprocConfig { low_hz: None, high_hz: None, ..PreprocConfig::default() };
        let y = preprocess(&x, 64.0, &cfg).unwrap();
        for t in 0..100 {
            let m: f64 = (0..4).map(|c| y.data()[c * 100 + t]).sum();
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn identity_config_is_identity() {
        let x = sine_trial(3, 50, 5.0, 64.0);
        assert_eq!(preprocess(&x, 64.0, &PreprocConfig::identity()).unwrap(), x);
    }

    #[test]
    fn band_above_nyquist_is_config_error() {
        let x = sine_trial(1, 64, 5.0, 64.0);
        assert!(matches!(preprocess(&x, 64.0, &PreprocConfig::default()), Err(Error::Config(_))));
        let cfg = PreprocConfig { target_rate: Some(64.0), ..PreprocConfig::default() };
        assert!(matches!(preprocess(&sine_trial(1, 256, 5.0, 256.0), 256.0, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn resampling_changes_length() {
        let x = sine_trial(2, 512, 5.0, 256.0);
        let cfg = PreprocConfig { target_rate: Some(128.0), high_hz: Some(40.0), ..PreprocConfig::default() };
        assert_eq!(preprocess(&x, 256.0, &cfg).unwrap().shape(), &[2, 256]);
    }

    #[test]
    fn second_pass_is_nearly_idempotent() {
        let rate = 128.0;
        let x = {
            let a = sine_trial(3, 1280, 10.0, rate);
            let b = sine_trial(3, 1280, 21.0, rate);
            let mut d: Vec<f64> = a.data().iter().zip(b.data()).map(|(p, q)| p + q).collect();
            d[..1280].iter_mut().for_each(|v| *v *= -0.7);
            Tensor::new(&[3, 1280], d).unwrap()
        };
        let cfg = PreprocConfig::default();
        let once = preprocess(&x, rate, &cfg).unwrap();
        let twice = preprocess(&once, rate, &cfg).unwrap();
        let change = (rms(twice.data()) - rms(once.data())).abs() / rms(once.data());
        assert!(change < 0.01, "{change}");
    }

    #[test]
    fn segmentation_counts() {
        let x = Tensor::<f64>::zeros(&[2, 60 * 128]);
        assert_eq!(segment_trial(&x, 128.0, 1.0).unwrap().shape()[0], 60);
        let short = Tensor::<f64>::zeros(&[2, 96]);
        assert_eq!(segment_trial(&short, 64.0, 1.0).unwrap().shape()[0], 1);
        let tiny = Tensor::<f64>::zeros(&[2, 30]);
        assert!(matches!(segment_trial(&tiny, 64.0, 1.0), Err(Error::Contract(_))));
        assert_eq!(32 * 40 * 60, 76800);
    }

    #[test]
    fn segments_reproduce_trial_prefix() {
        let n = 70;
        let x = Tensor::new(&[2, n], (0..2 * n).map(|v| v as f64).collect()).unwrap();
        let segs = segment_trial(&x, 16.0, 1.0).unwrap();
        assert_eq!(segs.shape(), &[4, 2, 16]);
        for ch in 0..2 {
            let joined: Vec<f64> = (0..4).flat_map(|s| segs.index_outer(s).unwrap().data()[ch * 16..(ch + 1) * 16].to_vec()).collect();
            assert_eq!(joined, x.data()[ch * n..ch * n + 64].to_vec());
        }
    }

    #[test]
    fn binarization() {
        assert_eq!(binarize_label(7.2, SCORE_THRESHOLD).unwrap(), 1);
        assert_eq!(binarize_label(3.0, SCORE_THRESHOLD).unwrap(), 0);
        assert_eq!(binarize_label(5.0, SCORE_THRESHOLD).unwrap(), 0);
        assert!(matches!(binarize_label(9.5, SCORE_THRESHOLD), Err(Error::Contract(_))));
    }
}
