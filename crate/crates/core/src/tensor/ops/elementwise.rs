
use serde::{Deserialize, Serialize};

use super::same_shape;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Exponential linear unit with alpha = 1.
    Elu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Elu => {
                if x > S::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative<S: Scalar>(self, x: S, y: S) -> S {
        match self {
            Activation::Elu => {
                if x > S::zero() {
                    S::one()
                } else {
                    y + S::one()
                }
            }
            Activation::Sigmoid => y * (S::one() - y),
            Activation::Tanh => S::one() - y * y,
        }
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn zip_map<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn add(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let out = zip_map(&a, &b, |x, y| x + y);
        Ok(self.tape.push(out, &[self, other], Box::new(|g, _| vec![Some(g.clone()), Some(g.clone())])))
    }

    pub fn sub(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let out = zip_map(&a, &b, |x, y| x - y);
        Ok(self.tape.push(
            out,
            &[self, other],
            Box::new(|g, _| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let out = zip_map(&a, &b, |x, y| x * y);
        Ok(self.tape.push(
            out,
            &[self, other],
            Box::new(move |g, needs| {
                vec![
                    needs[0].then(|| zip_map(g, &b, |gv, y| gv * y)),
                    needs[1].then(|| zip_map(g, &a, |gv, x| gv * x)),
                ]
            }),
        ))
    }

    pub fn scale(self, c: S) -> Var<'t, S> {
        let out = self.value().map(|v| v * c);
        self.tape.push(out, &[self], Box::new(move |g, _| vec![Some(g.map(|v| v * c))]))
    }

    pub fn add_scalar(self, c: S) -> Var<'t, S> {
        let out = self.value().map(|v| v + c);
        self.tape.push(out, &[self], Box::new(|g, _| vec![Some(g.clone())]))
    }

    pub fn neg(self) -> Var<'t, S> {
        self.scale(-S::one())
    }

    /// `1 - x`
    pub fn one_minus(self) -> Var<'t, S> {
        self.neg().add_scalar(S::one())
    }

    pub fn activation(self, kind: Activation) -> Var<'t, S> {
        let x = self.value();
        let out = x.map(|v| kind.apply(v));
        let saved = out.clone();
        self.tape.push(
            out,
            &[self],
            Box::new(move |g, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(x.data().iter().zip(saved.data()))
                    .map(|(&gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            }),
        )
    }

    pub fn sigmoid(self) -> Var<'t, S> {
        self.activation(Activation::Sigmoid)
    }

    pub fn tanh(self) -> Var<'t, S> {
        self.activation(Activation::Tanh)
    }

    pub fn elu(self) -> Var<'t, S> {
        self.activation(Activation::Elu)
    }

    /// Natural log; inputs must be positive.
    pub fn ln(self) -> Var<'t, S> {
        let x = self.value();
        let out = x.map(|v| v.ln());
        self.tape.push(out, &[self], Box::new(move |g, _| vec![Some(zip_map(g, &x, |gv, xv| gv / xv))]))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping engaged.
    pub fn clamp(self, lo: S, hi: S) -> Var<'t, S> {
        let x = self.value();
        let out = x.map(|v| v.max(lo).min(hi));
        self.tape.push(
            out,
            &[self],
            Box::new(move |g, _| {
                vec![Some(zip_map(g, &x, |gv, xv| if xv < lo || xv > hi { S::zero() } else { gv }))]
            }),
        )
    }

    pub fn sum(self) -> Var<'t, S> {
        let x = self.value();
        let shape = x.shape().to_vec();
        self.tape.push(Tensor::scalar(x.sum()), &[self], Box::new(move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0]))]
        }))
    }

    pub fn mean(self) -> Var<'t, S> {
        let n = S::of(self.value().len() as f64);
        self.sum().scale(S::one() / n)
    }

    /// Mean of squared elementwise differences.
    pub fn mse(self, target: Var<'t, S>) -> Result<Var<'t, S>> {
        let (a, b) = (self.value(), target.value());
        same_shape("mse", &a, &b)?;
        let n = S::of(a.len() as f64);
        let loss: S = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y) * (x - y)).sum::<S>() / n;
        Ok(self.tape.push(
            Tensor::scalar(loss),
            &[self, target],
            Box::new(move |g, needs| {
                let c = g.data()[0] * S::of(2.0) / n;
                let da = zip_map(&a, &b, |x, y| c * (x - y));
                let db = needs[1].then(|| da.map(|v| -v));
                vec![needs[0].then_some(da), db]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::Elu.apply(2.5f64), 2.5);
        assert!((Activation::Elu.apply(-50.0f64) + 1.0).abs() < 1e-15);
        // tanh(0.5) = (e - 1)/(e + 1) with e = exp(1)
        let e = 1.0f64.exp();
        let expected = (e - 1.0) / (e + 1.0);
        assert!((Activation::Tanh.apply(0.5f64) - expected).abs() < 1e-15);
        assert!((expected - 0.462_117_157_260_009_8).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert_eq!(sigmoid(-800.0f64), 0.0);
    }

    #[test]
    fn mse_matches_hand_value() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.constant(Tensor::from_vec(vec![1.0, 4.0]));
        assert_eq!(x.mse(y).unwrap().item(), 2.0);
        assert_eq!(y.mse(x).unwrap().item(), 2.0);
        assert_eq!(x.mse(x).unwrap().item(), 0.0);
    }

    #[test]
    fn mismatched_add_is_dimension_error() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(&[2]));
        let y = tape.constant(Tensor::zeros(&[3]));
        assert!(matches!(x.add(y), Err(crate::Error::Dimension { .. })));
    }
}
