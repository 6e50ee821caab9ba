use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Segment;
use crate::scalar::Scalar;
use crate::signal::{band_integral, periodogram, variance, Sos};
use crate::tensor::Tensor;

/// Floor on the band variance before taking the log.
pub const DE_VARIANCE_FLOOR: f64 = 1e-12;
/// Butterworth order of each edge of the DE band filter; two edges make a
/// 4th-order band-pass.
pub const DE_EDGE_ORDER: usize = 2;
pub const TIME_STATS_PER_CHANNEL: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: &'static str,
    pub low: f64,
    pub high: f64,
}

pub const STANDARD_BANDS: [Band; 4] = [
    Band { name: "theta", low: 4.0, high: 8.0 },
    Band { name: "alpha", low: 8.0, high: 13.0 },
    Band { name: "beta", low: 13.0, high: 30.0 },
    Band { name: "gamma", low: 30.0, high: 45.0 },
];

/// The standard bands whose upper edge lies below the Nyquist frequency.
pub fn bands_below_nyquist(rate: f64) -> Vec<Band> {
    STANDARD_BANDS.iter().copied().filter(|b| b.high < rate / 2.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    TimeDomain,
    BandPower,
    DifferentialEntropy,
    Eegfusenet,
}

impl FeatureFamily {
    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::TimeDomain => "time_domain",
            FeatureFamily::BandPower => "band_power",
            FeatureFamily::DifferentialEntropy => "differential_entropy",
            FeatureFamily::Eegfusenet => "eegfusenet",
        }
    }
}

fn channels<S: Scalar>(segment: &Tensor<S>, op: &'static str) -> Result<Vec<Vec<f64>>> {
    if segment.rank() != 2 {
        return Err(Error::dim(op, format!("expected [C, T], got {:?}", segment.shape())));
    }
    let t = segment.shape()[1];
    Ok(segment.data().chunks(t.max(1)).map(|c| c.iter().map(|v| v.as_f64()).collect()).collect())
}

fn check_bands(bands: &[Band], rate: f64) -> Result<()> {
    if bands.is_empty() {
        return Err(Error::config("no frequency bands selected"));
    }
    for b in bands {
        if !(b.low >= 0.0 && b.low < b.high) {
            return Err(Error::config(format!("band {} has edges {}..{}", b.name, b.low, b.high)));
        }
        if b.high >= rate / 2.0 {
            return Err(Error::config(format!(
                "band {} reaches {} Hz, at or above the Nyquist frequency of {} Hz",
                b.name,
                b.high,
                rate / 2.0
            )));
        }
    }
    Ok(())
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Per channel: mean, std, mean |Δx|, mean |Δ²x|, Hjorth activity,
/// mobility and complexity, skewness and kurtosis.
pub fn time_domain_features<S: Scalar>(segment: &Tensor<S>) -> Result<Vec<S>> {
    let chans = channels(segment, "time_domain_features")?;
    let t = segment.shape()[1];
    if t < 3 {
        return Err(Error::contract(format!("time-domain statistics need at least 3 samples, got {t}")));
    }
    let mut out = Vec::with_capacity(chans.len() * TIME_STATS_PER_CHANNEL);
    for x in &chans {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = variance(x);
        let std = var.sqrt();
        let d1 = diff(x);
        let d2 = diff(&d1);
        let mad1 = d1.iter().map(|v| v.abs()).sum::<f64>() / d1.len() as f64;
        let mad2 = d2.iter().map(|v| v.abs()).sum::<f64>() / d2.len() as f64;
        let std1 = variance(&d1).sqrt();
        let std2 = variance(&d2).sqrt();
        let mobility = ratio(std1, std);
        let complexity = ratio(ratio(std2, std1), mobility);
        let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
        let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
        let skew = ratio(m3, var * std);
        let kurt = ratio(m4, var * var);
        out.extend([mean, std, mad1, mad2, var, mobility, complexity, skew, kurt].map(S::of));
    }
    Ok(out)
}

/// Hann periodogram power integrated over each band, channel-major.
pub fn band_power<S: Scalar>(segment: &Tensor<S>, rate: f64, bands: &[Band]) -> Result<Vec<S>> {
    check_bands(bands, rate)?;
    let chans = channels(segment, "band_power")?;
    let mut out = Vec::with_capacity(chans.len() * bands.len());
    for x in &chans {
        let (f, p) = periodogram(x, rate);
        out.extend(bands.iter().map(|b| S::of(band_integral(&f, &p, b.low, b.high))));
    }
    Ok(out)
}

/// `½·ln(2πe·σ²)` of each zero-phase band-filtered channel, channel-major.
pub fn differential_entropy<S: Scalar>(segment: &Tensor<S>, rate: f64, bands: &[Band]) -> Result<Vec<S>> {
    check_bands(bands, rate)?;
    let chans = channels(segment, "differential_entropy")?;
    let filters = bands
        .iter()
        .map(|b| Sos::bandpass(DE_EDGE_ORDER, b.low.max(f64::MIN_POSITIVE), b.high, rate))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(chans.len() * bands.len());
    for x in &chans {
        for sos in &filters {
            let v = variance(&sos.filtfilt(x)).max(DE_VARIANCE_FLOOR);
            out.push(S::of(0.5 * (2.0 * PI * E * v).ln()));
        }
    }
    Ok(out)
}

/// Extracts one hand-crafted family for every segment, in input order.
pub fn extract_all<S: Scalar>(family: FeatureFamily, segments: &[&Segment<S>], rate: f64, bands: &[Band]) -> Result<Vec<Vec<S>>> {
    let one = |seg: &&Segment<S>| -> Result<Vec<S>> {
        match family {
            FeatureFamily::TimeDomain => time_domain_features(&seg.data),
            FeatureFamily::BandPower => band_power(&seg.data, rate, bands),
            FeatureFamily::DifferentialEntropy => differential_entropy(&seg.data, rate, bands),
            FeatureFamily::Eegfusenet => Err(Error::contract("learned features come from a trained generator")),
        }
    };
    segments.par_iter().map(one).collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn sine(freq: f64, rate: f64, n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn seg(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn constant_channel_guards() {
        let f = time_domain_features(&seg(&[vec![2.0; 50]])).unwrap();
        assert_eq!(f, vec![2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(time_domain_features(&seg(&[vec![1.0, 2.0]])), Err(Error::Contract(_))));
    }

    #[test]
    fn sinusoid_mobility() {
        let (f, rate) = (3.0, 256.0);
        let feats = time_domain_features(&seg(&[sine(f, rate, 2560, 1.0)])).unwrap();
        let want = 2.0 * PI * f / rate;
        assert!((feats[5] - want).abs() / want < 1e-3, "{} vs {want}", feats[5]);
    }

    #[test]
    fn white_noise_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let feats = time_domain_features(&seg(&[x])).unwrap();
        // Standard error of the sample std is about 1/sqrt(2n).
        assert!((feats[1] - 1.0).abs() < 3.0 / (2.0f64 * 10_000.0).sqrt());
    }

    #[test]
    fn alpha_dominates_for_10hz() {
        let rate = 128.0;
        let p = band_power(&seg(&[sine(10.0, rate, 512, 1.0)]), rate, &STANDARD_BANDS).unwrap();
        for (i, &v) in p.iter().enumerate() {
            if i != 1 {
                assert!(p[1] > 10.0 * v, "{p:?}");
            }
        }
        let zero = band_power(&seg(&[vec![0.0; 256]]), rate, &STANDARD_BANDS).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn band_above_nyquist() {
        let s = seg(&[vec![0.0; 64]]);
        assert!(matches!(band_power(&s, 64.0, &STANDARD_BANDS), Err(Error::Config(_))));
        assert!(matches!(differential_entropy(&s, 64.0, &STANDARD_BANDS), Err(Error::Config(_))));
        assert_eq!(bands_below_nyquist(64.0).len(), 3);
        assert_eq!(bands_below_nyquist(128.0).len(), 4);
    }

    #[test]
    fn de_values() {
        assert!((0.5 * (2.0 * PI * E * (1.0 / (2.0 * PI * E))).ln()).abs() < 1e-15);
        assert!((0.5 * (2.0 * PI * E).ln() - 1.41894).abs() < 1e-5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..256).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let bands = bands_below_nyquist(128.0);
        let a = differential_entropy(&seg(&[x.clone()]), 128.0, &bands).unwrap();
        let b = differential_entropy(&seg(&[x2]), 128.0, &bands).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((q - p - 2f64.ln()).abs() < 1e-9);
        }
        let zero = differential_entropy(&seg(&[vec![0.0; 128]]), 128.0, &bands).unwrap();
        assert!(zero.iter().all(|&v| (v - 0.5 * (2.0 * PI * E * DE_VARIANCE_FLOOR).ln()).abs() < 1e-12));
    }

    #[test]
    fn offset_and_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..256).map(|_| rng.sample(StandardNormal)).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + 7.5).collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        let bands = bands_below_nyquist(128.0);
        let p0 = band_power(&seg(&[x.clone()]), 128.0, &bands).unwrap();
        let p1 = band_power(&seg(&[shifted.clone()]), 128.0, &bands).unwrap();
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
        let d0 = differential_entropy(&seg(&[x.clone()]), 128.0, &bands).unwrap();
        let d1 = differential_entropy(&seg(&[shifted]), 128.0, &bands).unwrap();
        for (a, b) in d0.iter().zip(&d1) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
        let t0 = time_domain_features(&seg(&[x])).unwrap();
        let t1 = time_domain_features(&seg(&[scaled])).unwrap();
        assert!((t0[5] - t1[5]).abs() < 1e-12 && (t0[6] - t1[6]).abs() < 1e-12);
    }
}
