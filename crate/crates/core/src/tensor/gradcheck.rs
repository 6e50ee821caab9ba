use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compares tape gradients of a scalar function against central differences.
///
/// Returns `max |analytic − numeric| / max(1, |numeric|)` over every coordinate
/// of every input. Coordinates are numbered consecutively across inputs.
pub fn grad_check<S, F>(f: F, inputs: &[Tensor<S>], eps: f64) -> Result<f64>
where
    S: Scalar,
    F: for<'t> Fn(&'t Tape<S>, &[Var<'t, S>]) -> Result<Var<'t, S>>,
{
    let eval = |xs: &[Tensor<S>]| -> Result<S> {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&tape, &vars)?;
    if !out.item().is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    let grads = tape.backward(out)?;

    let h = S::of(eps);
    let mut worst = 0.0f64;
    let mut coord = 0usize;
    let mut probe: Vec<Tensor<S>> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var);
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            probe[k].data_mut()[i] = orig + h;
            let plus = eval(&probe)?;
            probe[k].data_mut()[i] = orig - h;
            let minus = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let numeric = ((plus - minus) / (h + h)).as_f64();
            let a = analytic.data()[i].as_f64();
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NonFinite { index: coord });
            }
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
            coord += 1;
        }
    }
    Ok(worst)
}
