use super::expect_rank;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, Var};

/// `a[n,f] · b[f,g]`, row-major, no transposes.
pub(crate) fn matmul_raw<S: Scalar>(a: &[S], b: &[S], n: usize, f: usize, g: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * g];
    for i in 0..n {
        let row = &mut out[i * g..(i + 1) * g];
        for k in 0..f {
            let av = a[i * f + k];
            if av == S::zero() {
                continue;
            }
            let brow = &b[k * g..(k + 1) * g];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[n,f] · b[g,f]ᵀ`
fn matmul_bt<S: Scalar>(a: &[S], b: &[S], n: usize, f: usize, g: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * g];
    for i in 0..n {
        let arow = &a[i * f..(i + 1) * f];
        for j in 0..g {
            let brow = &b[j * f..(j + 1) * f];
            out[i * g + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// `a[n,f]ᵀ · b[n,g]`
fn matmul_at<S: Scalar>(a: &[S], b: &[S], n: usize, f: usize, g: usize) -> Vec<S> {
    let mut out = vec![S::zero(); f * g];
    for i in 0..n {
        let brow = &b[i * g..(i + 1) * g];
        for k in 0..f {
            let av = a[i * f + k];
            let orow = &mut out[k * g..(k + 1) * g];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

impl<'t, S: Scalar> Var<'t, S> {
    /// Matrix product of `[N,F]` and `[F,G]`.
    pub fn matmul(self, weight: Var<'t, S>) -> Result<Var<'t, S>> {
        let (x, w) = (self.value(), weight.value());
        expect_rank("matmul", &x, 2)?;
        expect_rank("matmul", &w, 2)?;
        let (n, f, g) = (x.shape()[0], x.shape()[1], w.shape()[1]);
        if w.shape()[0] != f {
            return Err(Error::dim("matmul", format!("inner extents {f} vs {}", w.shape()[0])));
        }
        let out = Tensor::from_parts(vec![n, g], matmul_raw(x.data(), w.data(), n, f, g));
        Ok(self.tape.push(
            out,
            &[self, weight],
            Box::new(move |grad, needs| {
                let gx = needs[0]
                    .then(|| Tensor::from_parts(vec![n, f], matmul_bt(grad.data(), w.data(), n, g, f)));
                let gw = needs[1]
                    .then(|| Tensor::from_parts(vec![f, g], matmul_at(x.data(), grad.data(), n, f, g)));
                vec![gx, gw]
            }),
        ))
    }

    /// `x·W + b` for `x:[N,F]`, `W:[F,G]`, `b:[G]`.
    pub fn affine(self, weight: Var<'t, S>, bias: Var<'t, S>) -> Result<Var<'t, S>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        expect_rank("affine", &x, 2)?;
        expect_rank("affine", &w, 2)?;
        let (n, f, g) = (x.shape()[0], x.shape()[1], w.shape()[1]);
        if w.shape()[0] != f {
            return Err(Error::dim("affine", format!("input width {f} vs weight rows {}", w.shape()[0])));
        }
        if b.shape() != [g] {
            return Err(Error::dim("affine", format!("bias {:?} vs output width {g}", b.shape())));
        }
        let mut out = matmul_raw(x.data(), w.data(), n, f, g);
        for row in out.chunks_mut(g) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.tape.push(
            Tensor::from_parts(vec![n, g], out),
            &[self, weight, bias],
            Box::new(move |grad, needs| {
                let gx = needs[0]
                    .then(|| Tensor::from_parts(vec![n, f], matmul_bt(grad.data(), w.data(), n, g, f)));
                let gw = needs[1]
                    .then(|| Tensor::from_parts(vec![f, g], matmul_at(x.data(), grad.data(), n, f, g)));
                let gb = needs[2].then(|| {
                    let mut acc = vec![S::zero(); g];
                    for row in grad.data().chunks(g) {
                        acc.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                    }
                    Tensor::from_parts(vec![g], acc)
                });
                vec![gx, gw, gb]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn identity_weight_zero_bias() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.0, 9.0]]).unwrap());
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let w = tape.constant(eye);
        let b = tape.constant(Tensor::zeros(&[3]));
        let y = x.affine(w, b).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn one_by_one() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(&[1, 1], vec![2.0]).unwrap());
        let w = tape.constant(Tensor::new(&[1, 1], vec![3.0]).unwrap());
        let b = tape.constant(Tensor::from_vec(vec![1.0]));
        assert_eq!(x.affine(w, b).unwrap().item(), 7.0);
    }

    #[test]
    fn matches_triple_loop() {
        let (n, f, g) = (3, 4, 5);
        let a: Vec<f64> = (0..n * f).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let b: Vec<f64> = (0..f * g).map(|i| ((i * 5 % 13) as f64) * 0.25 - 1.0).collect();
        let bias: Vec<f64> = (0..g).map(|i| i as f64 * 0.1).collect();
        let tape = Tape::<f64>::new();
        let y = tape
            .constant(Tensor::new(&[n, f], a.clone()).unwrap())
            .affine(
                tape.constant(Tensor::new(&[f, g], b.clone()).unwrap()),
                tape.constant(Tensor::from_vec(bias.clone())),
            )
            .unwrap();
        let y = y.value();
        for i in 0..n {
            for j in 0..g {
                let mut acc = bias[j];
                for k in 0..f {
                    acc += a[i * f + k] * b[k * g + j];
                }
                assert!((y.data()[i * g + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inner_mismatch_is_error() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        let w = tape.constant(Tensor::zeros(&[4, 2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        assert!(x.affine(w, b).is_err());
    }
}
