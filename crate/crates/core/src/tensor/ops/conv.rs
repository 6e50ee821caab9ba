//! 2-D cross-correlation (no kernel flip), its transpose, and average pooling.
//! Layouts follow the NCHW convention; conv kernels are `[Cout, Cin/groups, kh, kw]`
//! and transposed-conv kernels are `[Cin, Cout, kh, kw]`.

use serde::{Deserialize, Serialize};

use super::expect_rank;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2dConfig {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Default for Conv2dConfig {
    fn default() -> Self {
        Self { stride: (1, 1), padding: (0, 0), groups: 1 }
    }
}

impl Conv2dConfig {
    pub fn padded(padding: (usize, usize)) -> Self {
        Self { padding, ..Self::default() }
    }

    pub fn strided(stride: (usize, usize)) -> Self {
        Self { stride, ..Self::default() }
    }

    pub fn grouped(groups: usize) -> Self {
        Self { groups, ..Self::default() }
    }
}

/// `floor((len + 2·pad − k)/stride) + 1`, or `None` when the kernel does not fit.
pub fn conv_extent(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (stride > 0 && kernel > 0 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// `(len − 1)·stride − 2·pad + k`, the extent whose conv with the same config is `len`.
pub fn conv_transpose_extent(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let full = (len - 1) * stride + kernel;
    (stride > 0 && kernel > 0 && len > 0 && full > 2 * pad).then(|| full - 2 * pad)
}

/// Shape bookkeeping shared by the forward conv and both of its adjoints.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    groups: usize,
}

/// Outputs `o` with `0 <= o·stride + offset < len`, clipped to `[0, count)`.
#[inline]
fn valid(count: usize, len: usize, stride: usize, offset: isize) -> std::ops::Range<usize> {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let hi = (len as isize - 1 - offset).div_euclid(s) + 1;
    let hi = hi.clamp(0, count as isize);
    (lo.min(hi) as usize)..(hi as usize)
}

impl Geometry {
    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }
    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }

    /// Visits every (input plane, output plane, kernel tap, output row) tuple
    /// together with the valid output-column range.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, std::ops::Range<usize>)) {
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        for n in 0..self.n {
            for oc in 0..self.cout {
                let g = oc / cout_g;
                for icg in 0..cin_g {
                    let ic = g * cin_g + icg;
                    let in_plane = (n * self.cin + ic) * self.h * self.w;
                    let out_plane = (n * self.cout + oc) * self.oh * self.ow;
                    let k_base = (oc * cin_g + icg) * self.kh * self.kw;
                    for ki in 0..self.kh {
                        let rows = valid(self.oh, self.h, self.sh, ki as isize - self.ph as isize);
                        for kj in 0..self.kw {
                            let cols = valid(self.ow, self.w, self.sw, kj as isize - self.pw as isize);
                            if cols.is_empty() {
                                continue;
                            }
                            let k_idx = k_base + ki * self.kw + kj;
                            for oh in rows.clone() {
                                let ih = oh * self.sh + ki - self.ph;
                                let in_row = in_plane + ih * self.w;
                                let out_row = out_plane + oh * self.ow;
                                f(k_idx, in_row, out_row, kj, oh, cols.clone());
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward<S: Scalar>(&self, input: &[S], kernel: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.n * self.cout * self.oh * self.ow];
        let (sw, pw) = (self.sw, self.pw);
        self.for_each_tap(|k, in_row, out_row, kj, _, cols| {
            let wv = kernel[k];
            if wv == S::zero() {
                return;
            }
            let base = in_row + kj;
            if sw == 1 {
                let src = &input[base + cols.start - pw..base + cols.end - pw];
                let dst = &mut out[out_row + cols.start..out_row + cols.end];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            } else {
                for o in cols {
                    out[out_row + o] += wv * input[base + o * sw - pw];
                }
            }
        });
        out
    }

    fn input_grad<S: Scalar>(&self, grad_out: &[S], kernel: &[S]) -> Vec<S> {
        let mut gin = vec![S::zero(); self.n * self.cin * self.h * self.w];
        let (sw, pw) = (self.sw, self.pw);
        self.for_each_tap(|k, in_row, out_row, kj, _, cols| {
            let wv = kernel[k];
            if wv == S::zero() {
                return;
            }
            let base = in_row + kj;
            if sw == 1 {
                let src = &grad_out[out_row + cols.start..out_row + cols.end];
                let dst = &mut gin[base + cols.start - pw..base + cols.end - pw];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            } else {
                for o in cols {
                    gin[base + o * sw - pw] += wv * grad_out[out_row + o];
                }
            }
        });
        gin
    }

    fn kernel_grad<S: Scalar>(&self, input: &[S], grad_out: &[S]) -> Vec<S> {
        let mut gk = vec![S::zero(); self.cout * self.cin_g() * self.kh * self.kw];
        let (sw, pw) = (self.sw, self.pw);
        self.for_each_tap(|k, in_row, out_row, kj, _, cols| {
            let base = in_row + kj;
            let acc: S = if sw == 1 {
                let a = &input[base + cols.start - pw..base + cols.end - pw];
                let b = &grad_out[out_row + cols.start..out_row + cols.end];
                a.iter().zip(b).map(|(&x, &y)| x * y).sum()
            } else {
                cols.map(|o| input[base + o * sw - pw] * grad_out[out_row + o]).sum()
            };
            gk[k] += acc;
        });
        gk
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    /// Grouped 2-D cross-correlation of `[N,Cin,H,W]` with `[Cout,Cin/groups,kh,kw]`.
    pub fn conv2d(self, kernel: Var<'t, S>, cfg: Conv2dConfig) -> Result<Var<'t, S>> {
        let (x, k) = (self.value(), kernel.value());
        expect_rank("conv2d", &x, 4)?;
        expect_rank("conv2d", &k, 4)?;
        let (n, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        let groups = cfg.groups;
        if groups == 0 || cin % groups != 0 || cout % groups != 0 {
            return Err(Error::dim(
                "conv2d",
                format!("axis 1: Cin={cin} and Cout={cout} must be divisible by groups={groups}"),
            ));
        }
        if kc != cin / groups {
            return Err(Error::dim(
                "conv2d",
                format!("axis 1: kernel expects {kc} input channels per group, input provides {}", cin / groups),
            ));
        }
        let oh = conv_extent(h, kh, cfg.stride.0, cfg.padding.0).ok_or_else(|| {
            Error::dim("conv2d", format!("axis 2: padded height {} < kernel {kh}", h + 2 * cfg.padding.0))
        })?;
        let ow = conv_extent(w, kw, cfg.stride.1, cfg.padding.1).ok_or_else(|| {
            Error::dim("conv2d", format!("axis 3: padded width {} < kernel {kw}", w + 2 * cfg.padding.1))
        })?;
        let geo = Geometry {
            n, cin, h, w, cout, kh, kw, oh, ow,
            sh: cfg.stride.0, sw: cfg.stride.1, ph: cfg.padding.0, pw: cfg.padding.1, groups,
        };
        let out = Tensor::from_parts(vec![n, cout, oh, ow], geo.forward(x.data(), k.data()));
        Ok(self.tape.push(
            out,
            &[self, kernel],
            Box::new(move |g, needs| {
                let gx = needs[0].then(|| Tensor::from_parts(x.shape().to_vec(), geo.input_grad(g.data(), k.data())));
                let gk = needs[1].then(|| Tensor::from_parts(k.shape().to_vec(), geo.kernel_grad(x.data(), g.data())));
                vec![gx, gk]
            }),
        ))
    }

    /// Transposed convolution of `[N,Cin,H,W]` with `[Cin,Cout,kh,kw]`: the
    /// adjoint of `conv2d` under the same stride and padding.
    pub fn conv_transpose2d(
        self,
        kernel: Var<'t, S>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var<'t, S>> {
        let (x, k) = (self.value(), kernel.value());
        expect_rank("conv_transpose2d", &x, 4)?;
        expect_rank("conv_transpose2d", &k, 4)?;
        let (n, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (kin, cout, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        if kin != cin {
            return Err(Error::dim(
                "conv_transpose2d",
                format!("axis 1: kernel expects {kin} input channels, input provides {cin}"),
            ));
        }
        let oh = conv_transpose_extent(h, kh, stride.0, padding.0)
            .ok_or_else(|| Error::dim("conv_transpose2d", "axis 2: padding consumes the whole output"))?;
        let ow = conv_transpose_extent(w, kw, stride.1, padding.1)
            .ok_or_else(|| Error::dim("conv_transpose2d", "axis 3: padding consumes the whole output"))?;
        // The forward conv whose input is our output and whose output is our input.
        let geo = Geometry {
            n, cin: cout, h: oh, w: ow, cout: cin, kh, kw, oh: h, ow: w,
            sh: stride.0, sw: stride.1, ph: padding.0, pw: padding.1, groups: 1,
        };
        let out = Tensor::from_parts(vec![n, cout, oh, ow], geo.input_grad(x.data(), k.data()));
        Ok(self.tape.push(
            out,
            &[self, kernel],
            Box::new(move |g, needs| {
                let gx = needs[0].then(|| Tensor::from_parts(x.shape().to_vec(), geo.forward(g.data(), k.data())));
                let gk = needs[1].then(|| Tensor::from_parts(k.shape().to_vec(), geo.kernel_grad(g.data(), x.data())));
                vec![gx, gk]
            }),
        ))
    }

    /// Non-overlapping average pooling with window (and stride) `kernel`.
    pub fn avg_pool2d(self, kernel: (usize, usize)) -> Result<Var<'t, S>> {
        let x = self.value();
        expect_rank("avg_pool2d", &x, 4)?;
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (kh, kw) = kernel;
        if kh == 0 || kw == 0 || h % kh != 0 || w % kw != 0 {
            return Err(Error::dim("avg_pool2d", format!("{h}x{w} is not divisible by window {kh}x{kw}")));
        }
        let (oh, ow) = (h / kh, w / kw);
        let scale = S::one() / S::of((kh * kw) as f64);
        let mut out = vec![S::zero(); n * c * oh * ow];
        for p in 0..n * c {
            for i in 0..h {
                for j in 0..w {
                    out[(p * oh + i / kh) * ow + j / kw] += x.data()[(p * h + i) * w + j] * scale;
                }
            }
        }
        let in_shape = x.shape().to_vec();
        Ok(self.tape.push(
            Tensor::from_parts(vec![n, c, oh, ow], out),
            &[self],
            Box::new(move |g, _| {
                let mut gx = vec![S::zero(); n * c * h * w];
                for p in 0..n * c {
                    for i in 0..h {
                        for j in 0..w {
                            gx[(p * h + i) * w + j] = g.data()[(p * oh + i / kh) * ow + j / kw] * scale;
                        }
                    }
                }
                vec![Some(Tensor::from_parts(in_shape.clone(), gx))]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn two_by_two_diagonal_kernel() {
        let tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
        let k = tape.constant(t(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let y = x.conv2d(k, Conv2dConfig::default()).unwrap();
        assert_eq!(y.shape(), vec![1, 1, 1, 1]);
        assert_eq!(y.item(), 5.0);
    }

    #[test]
    fn transpose_of_the_same_kernel() {
        let tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 1, 1], vec![5.0]));
        let k = tape.constant(t(&[1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let y = x.conv_transpose2d(k, (1, 1), (0, 0)).unwrap();
        assert_eq!(y.value().data(), &[5.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn depthwise_identity_kernel() {
        let tape = Tape::new();
        let data: Vec<f64> = (0..2 * 3 * 4 * 5).map(|i| (i as f64).sin()).collect();
        let x = tape.constant(t(&[2, 3, 4, 5], data));
        let k = tape.constant(Tensor::ones(&[3, 1, 1, 1]));
        let y = x.conv2d(k, Conv2dConfig::grouped(3)).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn unit_transpose_is_identity() {
        let tape = Tape::new();
        let data: Vec<f64> = (0..12).map(|i| i as f64 - 3.5).collect();
        let x = tape.constant(t(&[1, 2, 2, 3], data));
        let mut eye = Tensor::zeros(&[2, 2, 1, 1]);
        eye.data_mut()[0] = 1.0;
        eye.data_mut()[3] = 1.0;
        let y = x.conv_transpose2d(tape.constant(eye), (1, 1), (0, 0)).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn temporal_filter_shape() {
        // Half-second kernel on 384 samples with half-kernel padding.
        assert_eq!(conv_extent(384, 192, 1, 96), Some(385));
        assert_eq!(conv_extent(1, 1, 1, 0), Some(1));
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros(&[1, 1, 32, 384]));
        let k = tape.constant(Tensor::zeros(&[16, 1, 1, 192]));
        let y = x.conv2d(k, Conv2dConfig::padded((0, 96))).unwrap();
        assert_eq!(y.shape(), vec![1, 16, 32, 385]);
    }

    #[test]
    fn transpose_restores_extents() {
        for &(len, k, s, p) in &[(64, 8, 8, 0), (16, 4, 4, 0), (10, 3, 2, 1), (7, 5, 1, 2), (384, 193, 1, 96)] {
            let out = conv_extent(len, k, s, p).unwrap();
            if (len + 2 * p - k) % s == 0 {
                assert_eq!(conv_transpose_extent(out, k, s, p), Some(len));
            }
        }
    }

    #[test]
    fn kernel_too_large_is_dimension_error() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros(&[1, 1, 2, 2]));
        let k = tape.constant(Tensor::zeros(&[1, 1, 3, 3]));
        let err = x.conv2d(k, Conv2dConfig::default()).unwrap_err();
        assert!(err.to_string().contains("axis 2"));
    }

    #[test]
    fn group_mismatch_is_dimension_error() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::<f64>::zeros(&[1, 4, 3, 3]));
        let k = tape.constant(Tensor::zeros(&[6, 1, 1, 1]));
        assert!(x.conv2d(k, Conv2dConfig::grouped(3)).is_err());
    }

    #[test]
    fn pooling_averages_windows() {
        let tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 1, 8], (1..=8).map(f64::from).collect()));
        let y = x.avg_pool2d((1, 4)).unwrap();
        assert_eq!(y.value().data(), &[2.5, 6.5]);
        assert!(x.avg_pool2d((1, 3)).is_err());
    }
}
