use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, Var};

/// (outer, axis extent, inner) split of a shape around `axis`.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, S>> {
        let x = self.value();
        let from = x.shape().to_vec();
        let out = (*x).clone().reshape(shape)?;
        Ok(self.tape.push(
            out,
            &[self],
            Box::new(move |g, _| vec![Some(g.clone().reshape(&from).expect("same length"))]),
        ))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t, S>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(
                "narrow",
                format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, extent, inner) = split(&shape, axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        Ok(self.tape.push(
            Tensor::from_parts(out_shape, data),
            &[self],
            Box::new(move |g, _| {
                let mut full = vec![S::zero(); outer * extent * inner];
                for o in 0..outer {
                    let base = o * extent * inner + start * inner;
                    full[base..base + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(Tensor::from_parts(shape.clone(), full))]
            }),
        ))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<'t, S>], axis: usize) -> Result<Var<'t, S>> {
        let first = parts.first().ok_or_else(|| Error::dim("concat", "no inputs"))?;
        let tape = first.tape;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", format!("axis {axis} out of range for {base:?}")));
        }
        for v in &values {
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(Error::dim("concat", format!("{s:?} does not fit {base:?} on axis {axis}")));
            }
        }
        let extents: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let (outer, _, inner) = split(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &e) in values.iter().zip(&extents) {
                data.extend_from_slice(&v.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(tape.push(
            Tensor::from_parts(out_shape, data),
            parts,
            Box::new(move |g, needs| {
                let mut grads: Vec<Vec<S>> =
                    extents.iter().map(|&e| Vec::with_capacity(outer * e * inner)).collect();
                let mut offset = 0;
                for _ in 0..outer {
                    for (gi, &e) in grads.iter_mut().zip(&extents) {
                        gi.extend_from_slice(&g.data()[offset..offset + e * inner]);
                        offset += e * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(&shapes)
                    .zip(needs)
                    .map(|((d, s), &need)| need.then(|| Tensor::from_parts(s.clone(), d)))
                    .collect()
            }),
        ))
    }
}
