//! Butterworth filtering, zero-phase application, FFT resampling and the Hann
//! periodogram. Everything works in f64 on plain slices.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Second-order section in transposed direct form II, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Low,
    High,
}

impl Biquad {
    /// Bilinear-transformed second-order section with pre-warping at `cutoff`.
    fn second_order(pass: Pass, cutoff: f64, rate: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = match pass {
            Pass::Low => [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0],
            Pass::High => [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0],
        };
        Self { b: b.map(|v| v / a0), a: [-2.0 * cos / a0, (1.0 - alpha) / a0] }
    }

    /// First-order section stored as a biquad with zero second-order terms.
    fn first_order(pass: Pass, cutoff: f64, rate: f64) -> Self {
        let k = (PI * cutoff / rate).tan();
        let a0 = k + 1.0;
        let b = match pass {
            Pass::Low => [k / a0, k / a0, 0.0],
            Pass::High => [1.0 / a0, -1.0 / a0, 0.0],
        };
        Self { b, a: [(k - 1.0) / a0, 0.0] }
    }

    /// Notch at `freq` with quality `q`.
    pub fn notch(freq: f64, rate: f64, q: f64) -> Self {
        let w0 = 2.0 * PI * freq / rate;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self { b: [1.0 / a0, -2.0 * cos / a0, 1.0 / a0], a: [-2.0 * cos / a0, (1.0 - alpha) / a0] }
    }

    /// DC gain `H(1)`.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Frequency response magnitude at `freq`.
    pub fn gain(&self, freq: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq / rate;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        (num / den).norm()
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Butterworth low- or high-pass of the given order.
    pub fn butterworth(pass: Pass, order: usize, cutoff: f64, rate: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::config("filter order must be positive"));
        }
        if !(cutoff > 0.0 && cutoff < rate / 2.0) {
            return Err(Error::config(format!(
                "cutoff {cutoff} Hz must lie strictly between 0 and the Nyquist frequency {} Hz",
                rate / 2.0
            )));
        }
        let mut sections: Vec<Biquad> = (0..order / 2)
            .map(|k| {
                let q = 1.0 / (2.0 * (PI * (2 * k + 1) as f64 / (2 * order) as f64).sin());
                Biquad::second_order(pass, cutoff, rate, q)
            })
            .collect();
        if order % 2 == 1 {
            sections.push(Biquad::first_order(pass, cutoff, rate));
        }
        Ok(Self { sections })
    }

    /// High-pass at `low` cascaded with low-pass at `high`, each of `order`.
    pub fn bandpass(order: usize, low: f64, high: f64, rate: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::config(format!("band edges must satisfy low < high, got {low} and {high}")));
        }
        let mut s = Self::butterworth(Pass::High, order, low, rate)?;
        s.sections.extend(Self::butterworth(Pass::Low, order, high, rate)?.sections);
        Ok(s)
    }

    pub fn then(mut self, other: Sos) -> Self {
        self.sections.extend(other.sections);
        self
    }

    pub fn gain(&self, freq: f64, rate: f64) -> f64 {
        self.sections.iter().map(|s| s.gain(freq, rate)).product()
    }

    /// Causal filtering with states initialized to the step response of `x[0]`.
    pub fn filter(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let mut level = first;
        for s in &self.sections {
            let g = s.dc_gain();
            let mut z1 = (g - s.b[0]) * level;
            let mut z2 = (s.b[2] - s.a[1] * g) * level;
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * y + z2;
                z2 = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
            level *= g;
        }
    }

    /// Zero-phase filtering: forward and backward passes over an
    /// odd-reflected extension of the signal. The reflection is as long as
    /// the signal itself so start-up transients of low cutoffs die out
    /// before reaching the data.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 || self.sections.is_empty() {
            return x.to_vec();
        }
        let pad = n - 1;
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.filter(&mut ext);
        ext.reverse();
        self.filter(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Resamples a (periodically extended) signal to `m` samples by truncating
/// or zero-padding its spectrum.
pub fn resample_fft(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    if n == m || n == 0 || m == 0 {
        return if m == 0 { Vec::new() } else { x.to_vec() };
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut spec: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut out = vec![Complex::new(0.0, 0.0); m];
    let keep = n.min(m);
    // Bins 0..=h on the positive side and h negatives, where h = (keep-1)/2.
    let h = (keep - 1) / 2;
    out[0] = spec[0];
    for k in 1..=h {
        out[k] = spec[k];
        out[m - k] = spec[n - k];
    }
    if keep % 2 == 0 {
        // Shared Nyquist bin of the shorter length.
        let k = keep / 2;
        if m > n {
            out[k] = spec[k] * 0.5;
            out[m - k] = spec[k] * 0.5;
        } else {
            out[k] = spec[k] + spec[n - k];
        }
    }
    planner.plan_fft_inverse(m).process(&mut out);
    let scale = 1.0 / n as f64;
    out.iter().map(|c| c.re * scale).collect()
}

/// One-sided Hann periodogram of a mean-removed signal, in power per Hz.
/// Returns `(frequencies, density)`.
pub fn periodogram(x: &[f64], rate: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let window: Vec<f64> = if n == 1 {
        vec![1.0]
    } else {
        (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
    };
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let mut buf: Vec<Complex<f64>> = x.iter().zip(&window).map(|(&v, &w)| Complex::new((v - mean) * w, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let bins = n / 2 + 1;
    let df = rate / n as f64;
    let freqs = (0..bins).map(|k| k as f64 * df).collect();
    let density = (0..bins)
        .map(|k| {
            let p = buf[k].norm_sqr() / (rate * wss);
            let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
            if mirrored {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    (freqs, density)
}

/// Integrates a periodogram over `[low, high)`.
pub fn band_integral(freqs: &[f64], density: &[f64], low: f64, high: f64) -> f64 {
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    freqs.iter().zip(density).filter(|(&f, _)| f >= low && f < high).map(|(_, &p)| p * df).sum()
}

pub fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    #[test]
    fn butterworth_half_power_at_cutoff() {
        for order in 1..=6 {
            for pass in [Pass::Low, Pass::High] {
                let s = Sos::butterworth(pass, order, 10.0, 128.0).unwrap();
                assert!((s.gain(10.0, 128.0) - 0.5f64.sqrt()).abs() < 1e-12, "{order} {pass:?}");
            }
        }
        let lp = Sos::butterworth(Pass::Low, 4, 10.0, 128.0).unwrap();
        assert!((lp.gain(0.0, 128.0) - 1.0).abs() < 1e-12);
        assert!(lp.gain(40.0, 128.0) < 1e-3);
    }

    #[test]
    fn rejects_cutoff_beyond_nyquist() {
        assert!(matches!(Sos::butterworth(Pass::Low, 4, 70.0, 128.0), Err(Error::Config(_))));
        assert!(matches!(Sos::bandpass(4, 20.0, 10.0, 128.0), Err(Error::Config(_))));
    }

    #[test]
    fn filtfilt_preserves_passband_phase() {
        let x = sine(10.0, 256.0, 1024);
        let y = Sos::bandpass(4, 4.0, 45.0, 256.0).unwrap().filtfilt(&x);
        let mid = 200..824;
        let err = mid.clone().map(|i| (x[i] - y[i]).abs()).fold(0.0, f64::max);
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn constant_input_passes_low_pass_unchanged() {
        let x = vec![3.0; 50];
        let y = Sos::butterworth(Pass::Low, 4, 5.0, 64.0).unwrap().filtfilt(&x);
        assert!(y.iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn resample_band_limited_sine() {
        let x = sine(3.0, 64.0, 128);
        let up = resample_fft(&x, 256);
        let want = sine(3.0, 128.0, 256);
        assert!(up.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10));
        let down = resample_fft(&x, 64);
        let want = sine(3.0, 32.0, 64);
        assert!(down.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn periodogram_parseval() {
        let x: Vec<f64> = (0..2048).map(|i| (i as f64 * 0.37).sin() + 0.5 * (i as f64 * 1.91).cos()).collect();
        let (f, p) = periodogram(&x, 100.0);
        let total = band_integral(&f, &p, 0.0, 1e9);
        let v = variance(&x);
        assert!((total - v).abs() / v < 0.01, "{total} vs {v}");
    }
}
