//! Gated recurrent unit and its bidirectional wrapper.
//!
//! Weights multiply from the right: `x·W` with `W: [input, hidden]`, so a
//! batch of row vectors `[N, input]` maps to `[N, hidden]`.

use rand::Rng;

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{glorot_init_grouped, Tape, Tensor, Var};

/// Plain-tensor GRU weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams<S> {
    pub w_z: Tensor<S>,
    pub w_r: Tensor<S>,
    pub w_h: Tensor<S>,
    pub u_z: Tensor<S>,
    pub u_r: Tensor<S>,
    pub u_h: Tensor<S>,
    pub b_z: Tensor<S>,
    pub b_r: Tensor<S>,
    pub b_h: Tensor<S>,
}

impl<S: Scalar> GruCellParams<S> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[input, hidden]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self { w_z: w(), w_r: w(), w_h: w(), u_z: u(), u_r: u(), u_h: u(), b_z: b(), b_r: b(), b_h: b() }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn glorot<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w = || glorot_init_grouped(&[input, hidden], 1, rng);
        let (w_z, w_r, w_h) = (w(), w(), w());
        let mut u = || glorot_init_grouped(&[hidden, hidden], 1, rng);
        let (u_z, u_r, u_h) = (u(), u(), u());
        let b = || Tensor::zeros(&[hidden]);
        Self { w_z, w_r, w_h, u_z, u_r, u_h, b_z: b(), b_r: b(), b_h: b() }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.b_z.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_size(), self.hidden_size());
        for (name, t, want) in [
            ("w_z", &self.w_z, [i, h]),
            ("w_r", &self.w_r, [i, h]),
            ("w_h", &self.w_h, [i, h]),
            ("u_z", &self.u_z, [h, h]),
            ("u_r", &self.u_r, [h, h]),
            ("u_h", &self.u_h, [h, h]),
        ] {
            if t.shape() != want {
                return Err(Error::dim("gru", format!("{name} is {:?}, expected {want:?}", t.shape())));
            }
        }
        for (name, t) in [("b_r", &self.b_r), ("b_h", &self.b_h)] {
            if t.shape() != [h] {
                return Err(Error::dim("gru", format!("{name} is {:?}, expected [{h}]", t.shape())));
            }
        }
        if let Some(t) = self.tensors().into_iter().find(|t| t.first_non_finite().is_some()) {
            return Err(Error::NonFinite { index: t.first_non_finite().unwrap_or(0) });
        }
        Ok(())
    }

    fn tensors(&self) -> [&Tensor<S>; 9] {
        [&self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r, &self.b_h]
    }

    pub fn bind<'t>(&self, tape: &'t Tape<S>) -> GruVars<'t, S> {
        let [w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h] = self.tensors().map(|t| tape.param(t.clone()));
        GruVars { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h }
    }
}

/// GRU weights placed on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars<'t, S> {
    pub w_z: Var<'t, S>,
    pub w_r: Var<'t, S>,
    pub w_h: Var<'t, S>,
    pub u_z: Var<'t, S>,
    pub u_r: Var<'t, S>,
    pub u_h: Var<'t, S>,
    pub b_z: Var<'t, S>,
    pub b_r: Var<'t, S>,
    pub b_h: Var<'t, S>,
}

impl<'t, S: Scalar> GruVars<'t, S> {
    pub fn hidden_size(&self) -> usize {
        self.b_z.shape()[0]
    }

    /// One step on a batch: `x: [N, input]`, `h: [N, hidden]`.
    pub fn step(&self, x: Var<'t, S>, h: Var<'t, S>) -> Result<Var<'t, S>> {
        let z = x.affine(self.w_z, self.b_z)?.add(h.matmul(self.u_z)?)?.sigmoid();
        let r = x.affine(self.w_r, self.b_r)?.add(h.matmul(self.u_r)?)?.sigmoid();
        let cand = x.affine(self.w_h, self.b_h)?.add(r.mul(h)?.matmul(self.u_h)?)?.tanh();
        z.one_minus().mul(h)?.add(z.mul(cand)?)
    }

    /// Runs the recursion from `h0`, returning every hidden state in step order.
    pub fn unroll(&self, seq: &[Var<'t, S>], h0: Var<'t, S>) -> Result<Vec<Var<'t, S>>> {
        let mut h = h0;
        let mut out = Vec::with_capacity(seq.len());
        for &x in seq {
            h = self.step(x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Output of a bidirectional pass.
pub struct BiGruOutput<'t, S> {
    /// `a_t = h_t^f ⊕ h_t^b`, each `[N, 2·hidden]`.
    pub outputs: Vec<Var<'t, S>>,
    /// Forward state after the last step.
    pub forward_final: Var<'t, S>,
    /// Backward state after consuming the whole sequence right to left.
    pub backward_final: Var<'t, S>,
}

/// Bidirectional GRU over a batch sequence of `[N, input]` steps.
pub fn bigru_vars<'t, S: Scalar>(
    seq: &[Var<'t, S>],
    fwd: &GruVars<'t, S>,
    bwd: &GruVars<'t, S>,
) -> Result<BiGruOutput<'t, S>> {
    let first = seq.first().ok_or_else(|| Error::contract("bigru needs a nonempty sequence"))?;
    let n = first.shape()[0];
    if seq.iter().any(|x| x.shape() != first.shape()) {
        return Err(Error::dim("bigru", "sequence steps have different extents"));
    }
    let tape = first.tape();
    let hf = fwd.unroll(seq, tape.constant(Tensor::zeros(&[n, fwd.hidden_size()])))?;
    let rev: Vec<_> = seq.iter().rev().copied().collect();
    let mut hb = bwd.unroll(&rev, tape.constant(Tensor::zeros(&[n, bwd.hidden_size()])))?;
    let backward_final = *hb.last().expect("nonempty");
    hb.reverse();
    let outputs = hf.iter().zip(&hb).map(|(&f, &b)| Var::concat(&[f, b], 1)).collect::<Result<Vec<_>>>()?;
    Ok(BiGruOutput { outputs, forward_final: *hf.last().expect("nonempty"), backward_final })
}

fn row<S: Scalar>(v: &[S]) -> Tensor<S> {
    Tensor::from_parts(vec![1, v.len()], v.to_vec())
}

fn check_vec(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::dim("gru", format!("{name} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Single-vector GRU step.
pub fn gru_cell<S: Scalar>(x: &[S], h_prev: &[S], params: &GruCellParams<S>) -> Result<Vec<S>> {
    params.validate()?;
    check_vec("x_t", x.len(), params.input_size())?;
    check_vec("h_prev", h_prev.len(), params.hidden_size())?;
    let tape = Tape::new();
    let p = params.bind(&tape);
    let h = p.step(tape.constant(row(x)), tape.constant(row(h_prev)))?;
    Ok(h.value().data().to_vec())
}

/// Bidirectional GRU over a sequence of vectors, returning `a_1..a_T`.
pub fn bigru<S: Scalar>(seq: &[Vec<S>], fwd: &GruCellParams<S>, bwd: &GruCellParams<S>) -> Result<Vec<Vec<S>>> {
    if seq.is_empty() {
        return Err(Error::contract("bigru needs a nonempty sequence"));
    }
    fwd.validate()?;
    bwd.validate()?;
    if fwd.input_size() != bwd.input_size() {
        return Err(Error::dim("bigru", "forward and backward input sizes differ"));
    }
    for x in seq {
        check_vec("x_t", x.len(), fwd.input_size())?;
    }
    let tape = Tape::new();
    let (f, b) = (fwd.bind(&tape), bwd.bind(&tape));
    let steps: Vec<_> = seq.iter().map(|x| tape.constant(row(x))).collect();
    let out = bigru_vars(&steps, &f, &b)?;
    Ok(out.outputs.iter().map(|a| a.value().data().to_vec()).collect())
}

/// Parameter ids of a GRU registered in a [`ParamStore`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct GruIds {
    ids: [ParamId; 9],
}

impl GruIds {
    pub fn register<S: Scalar, R: Rng>(
        name: &str,
        input: usize,
        hidden: usize,
        store: &mut ParamStore<S>,
        rng: &mut R,
    ) -> Self {
        let p = GruCellParams::<S>::glorot(input, hidden, rng);
        let names = ["w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"];
        let tensors = [p.w_z, p.w_r, p.w_h, p.u_z, p.u_r, p.u_h, p.b_z, p.b_r, p.b_h];
        let mut ids = [ParamId(0); 9];
        for (k, (n, t)) in names.iter().zip(tensors).enumerate() {
            ids[k] = store.add(format!("{name}.{n}"), t);
        }
        Self { ids }
    }

    pub fn vars<'t, S: Scalar>(&self, p: &[Var<'t, S>]) -> GruVars<'t, S> {
        let [w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h] = self.ids.map(|id| p[id.0]);
        GruVars { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h }
    }
}
