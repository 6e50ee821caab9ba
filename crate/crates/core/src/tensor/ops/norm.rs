use serde::{Deserialize, Serialize};

use super::expect_rank;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Running per-channel statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

impl<S: Scalar> BatchNormStats<S> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![S::zero(); channels], var: vec![S::one(); channels] }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

fn check<S: Scalar>(x: &Tensor<S>, gamma: &Tensor<S>, beta: &Tensor<S>, stats: &BatchNormStats<S>) -> Result<usize> {
    expect_rank("batchnorm2d", x, 4)?;
    let c = x.shape()[1];
    if gamma.shape() != [c] || beta.shape() != [c] || stats.channels() != c {
        return Err(Error::dim(
            "batchnorm2d",
            format!("axis 1: {c} channels vs gamma {:?}, beta {:?}, stats {}", gamma.shape(), beta.shape(), stats.channels()),
        ));
    }
    Ok(c)
}

impl<'t, S: Scalar> Var<'t, S> {
    /// Normalizes each channel over (N, H, W) with the batch statistics and
    /// folds them into `stats` with momentum 0.1.
    pub fn batchnorm2d_train(
        self,
        gamma: Var<'t, S>,
        beta: Var<'t, S>,
        stats: &mut BatchNormStats<S>,
    ) -> Result<Var<'t, S>> {
        let (x, gm, bt) = (self.value(), gamma.value(), beta.value());
        let c = check(&x, &gm, &bt, stats)?;
        let (n, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let plane = h * w;
        let m = n * plane;
        if m < 2 {
            return Err(Error::DegenerateBatch(m));
        }
        let mf = S::of(m as f64);
        let eps = S::of(BN_EPS);
        let mut mean = vec![S::zero(); c];
        let mut var = vec![S::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                mean[ch] += x.data()[base..base + plane].iter().copied().sum::<S>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= mf);
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                var[ch] += x.data()[base..base + plane].iter().map(|&v| (v - mean[ch]) * (v - mean[ch])).sum::<S>();
            }
        }
        var.iter_mut().for_each(|v| *v /= mf);
        let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();

        let mut xhat = vec![S::zero(); x.len()];
        let mut out = vec![S::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                for i in base..base + plane {
                    xhat[i] = (x.data()[i] - mean[ch]) * inv_std[ch];
                    out[i] = gm.data()[ch] * xhat[i] + bt.data()[ch];
                }
            }
        }

        let mom = S::of(BN_MOMENTUM);
        let unbias = mf / S::of((m - 1) as f64);
        for ch in 0..c {
            stats.mean[ch] = (S::one() - mom) * stats.mean[ch] + mom * mean[ch];
            stats.var[ch] = (S::one() - mom) * stats.var[ch] + mom * var[ch] * unbias;
        }

        let shape = x.shape().to_vec();
        Ok(self.tape.push(
            Tensor::from_parts(shape.clone(), out),
            &[self, gamma, beta],
            Box::new(move |g, needs| {
                let gd = g.data();
                let mut sum_g = vec![S::zero(); c];
                let mut sum_gx = vec![S::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * plane;
                        for i in base..base + plane {
                            sum_g[ch] += gd[i];
                            sum_gx[ch] += gd[i] * xhat[i];
                        }
                    }
                }
                let gx = needs[0].then(|| {
                    let mut dx = vec![S::zero(); gd.len()];
                    for b in 0..n {
                        for ch in 0..c {
                            let base = (b * c + ch) * plane;
                            let k = gm.data()[ch] * inv_std[ch] / mf;
                            for i in base..base + plane {
                                dx[i] = k * (mf * gd[i] - sum_g[ch] - xhat[i] * sum_gx[ch]);
                            }
                        }
                    }
                    Tensor::from_parts(shape.clone(), dx)
                });
                vec![
                    gx,
                    needs[1].then(|| Tensor::from_parts(vec![c], sum_gx.clone())),
                    needs[2].then(|| Tensor::from_parts(vec![c], sum_g.clone())),
                ]
            }),
        ))
    }

    /// Normalizes with the running statistics; a per-channel affine map.
    pub fn batchnorm2d_eval(
        self,
        gamma: Var<'t, S>,
        beta: Var<'t, S>,
        stats: &BatchNormStats<S>,
    ) -> Result<Var<'t, S>> {
        let (x, gm, bt) = (self.value(), gamma.value(), beta.value());
        let c = check(&x, &gm, &bt, stats)?;
        let plane = x.shape()[2] * x.shape()[3];
        let eps = S::of(BN_EPS);
        let inv_std: Vec<S> = stats.var.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let mean = stats.mean.clone();
        let xhat: Vec<S> = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let ch = (i / plane) % c;
                (v - mean[ch]) * inv_std[ch]
            })
            .collect();
        let out: Vec<S> = xhat
            .iter()
            .enumerate()
            .map(|(i, &xh)| {
                let ch = (i / plane) % c;
                gm.data()[ch] * xh + bt.data()[ch]
            })
            .collect();
        let shape = x.shape().to_vec();
        Ok(self.tape.push(
            Tensor::from_parts(shape.clone(), out),
            &[self, gamma, beta],
            Box::new(move |g, needs| {
                let gd = g.data();
                let mut sum_g = vec![S::zero(); c];
                let mut sum_gx = vec![S::zero(); c];
                for (i, &gv) in gd.iter().enumerate() {
                    let ch = (i / plane) % c;
                    sum_g[ch] += gv;
                    sum_gx[ch] += gv * xhat[i];
                }
                let gx = needs[0].then(|| {
                    let dx = gd
                        .iter()
                        .enumerate()
                        .map(|(i, &gv)| {
                            let ch = (i / plane) % c;
                            gv * gm.data()[ch] * inv_std[ch]
                        })
                        .collect();
                    Tensor::from_parts(shape.clone(), dx)
                });
                vec![
                    gx,
                    needs[1].then(|| Tensor::from_parts(vec![c], sum_gx)),
                    needs[2].then(|| Tensor::from_parts(vec![c], sum_g)),
                ]
            }),
        ))
    }

    pub fn batchnorm2d(
        self,
        gamma: Var<'t, S>,
        beta: Var<'t, S>,
        stats: &mut BatchNormStats<S>,
        mode: Mode,
    ) -> Result<Var<'t, S>> {
        match mode {
            Mode::Train => self.batchnorm2d_train(gamma, beta, stats),
            Mode::Eval => self.batchnorm2d_eval(gamma, beta, stats),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn channel_moments(y: &Tensor<f64>, c: usize) -> Vec<(f64, f64)> {
        let (n, plane) = (y.shape()[0], y.shape()[2] * y.shape()[3]);
        (0..c)
            .map(|ch| {
                let vals: Vec<f64> = (0..n)
                    .flat_map(|b| y.data()[(b * c + ch) * plane..(b * c + ch + 1) * plane].to_vec())
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
                (m, v)
            })
            .collect()
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::full(&[2, 1, 2, 3], 4.2));
        let mut stats = BatchNormStats::new(1);
        let y = x
            .batchnorm2d_train(tape.constant(Tensor::ones(&[1])), tape.constant(Tensor::zeros(&[1])), &mut stats)
            .unwrap();
        assert!(y.value().data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_gamma_gives_beta() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[2, 2, 1, 2], vec![1.0, 2.0, 3.0, 5.0, -1.0, 0.0, 8.0, 1.0]).unwrap());
        let mut stats = BatchNormStats::new(2);
        let beta = Tensor::from_vec(vec![0.25, -3.0]);
        let y = x
            .batchnorm2d_train(tape.constant(Tensor::zeros(&[2])), tape.constant(beta), &mut stats)
            .unwrap();
        assert_eq!(y.value().data(), &[0.25, 0.25, -3.0, -3.0, 0.25, 0.25, -3.0, -3.0]);
    }

    #[test]
    fn normalized_moments() {
        // Output variance is σ²/(σ²+ε); inputs with σ² ≫ ε put it within 1e-6 of 1.
        let (n, c, h, w) = (4, 3, 2, 5);
        let data: Vec<f64> = (0..n * c * h * w).map(|i| 10.0 * ((i as f64) * 1.37).sin() + i as f64 * 0.05).collect();
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[n, c, h, w], data).unwrap());
        let mut stats = BatchNormStats::new(c);
        let y = x
            .batchnorm2d_train(tape.constant(Tensor::ones(&[c])), tape.constant(Tensor::zeros(&[c])), &mut stats)
            .unwrap();
        let xin = channel_moments(&x.value(), c);
        for ((m, v), (_, raw_var)) in channel_moments(&y.value(), c).into_iter().zip(xin) {
            assert!(m.abs() < 1e-6);
            assert!((v - raw_var / (raw_var + BN_EPS)).abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn running_stats_update_and_eval() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::new(&[2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap());
        let mut stats = BatchNormStats::new(1);
        let (g, b) = (tape.constant(Tensor::ones(&[1])), tape.constant(Tensor::zeros(&[1])));
        x.batchnorm2d_train(g, b, &mut stats).unwrap();
        assert!((stats.mean[0] - 0.4).abs() < 1e-12);
        // unbiased variance of {1,3,5,7} is 20/3
        assert!((stats.var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
        let y = x.batchnorm2d_eval(g, b, &stats).unwrap();
        let expected = (1.0 - 0.4) / (stats.var[0] + BN_EPS).sqrt();
        assert!((y.value().data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn single_value_batch_is_degenerate() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros(&[1, 2, 1, 1]));
        let mut stats = BatchNormStats::new(2);
        let r = x.batchnorm2d_train(tape.constant(Tensor::ones(&[2])), tape.constant(Tensor::zeros(&[2])), &mut stats);
        assert!(matches!(r, Err(Error::DegenerateBatch(1))));
    }
}
