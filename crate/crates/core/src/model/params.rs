use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{glorot_init_grouped, BatchNormStats, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Ordered, named parameter tensors of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub(crate) fn glorot<R: Rng>(&mut self, name: &str, shape: &[usize], groups: usize, rng: &mut R) -> ParamId {
        self.add(name, glorot_init_grouped(shape, groups, rng))
    }

    pub(crate) fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::zeros(shape))
    }

    pub(crate) fn ones(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.add(name, Tensor::ones(shape))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Places every parameter on `tape` as a gradient-tracking leaf, in order.
    pub fn bind<'t>(&self, tape: &'t Tape<S>) -> Vec<Var<'t, S>> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Places every parameter on `tape` as a constant.
    pub fn bind_constant<'t>(&self, tape: &'t Tape<S>) -> Vec<Var<'t, S>> {
        self.tensors.iter().map(|t| tape.constant(t.clone())).collect()
    }

    /// Replaces a parameter by name; used when loading checkpoints.
    pub fn assign(&mut self, name: &str, value: Tensor<S>) -> Result<()> {
        let id = self.find(name).ok_or_else(|| Error::Integrity(format!("unknown parameter {name}")))?;
        if self.tensors[id.0].shape() != value.shape() {
            return Err(Error::Integrity(format!(
                "parameter {name}: stored {:?}, model expects {:?}",
                value.shape(),
                self.tensors[id.0].shape()
            )));
        }
        self.tensors[id.0] = value;
        Ok(())
    }
}

/// Batch-norm layer: learnable scale and shift plus an index into the
/// network's running statistics.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BatchNormLayer {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: usize,
}

impl BatchNormLayer {
    pub fn new<S: Scalar>(
        name: &str,
        channels: usize,
        params: &mut ParamStore<S>,
        stats: &mut Vec<BatchNormStats<S>>,
    ) -> Self {
        let gamma = params.ones(&format!("{name}.gamma"), &[channels]);
        let beta = params.zeros(&format!("{name}.beta"), &[channels]);
        stats.push(BatchNormStats::new(channels));
        Self { gamma, beta, stats: stats.len() - 1 }
    }
}

/// Whether batch-norm layers use batch statistics (and update the running
/// ones) or the stored running statistics.
pub(crate) enum BnCtx<'a, S> {
    Train(&'a mut [BatchNormStats<S>]),
    Eval(&'a [BatchNormStats<S>]),
}

impl<S: Scalar> BnCtx<'_, S> {
    pub fn apply<'t>(&mut self, x: Var<'t, S>, layer: BatchNormLayer, p: &[Var<'t, S>]) -> Result<Var<'t, S>> {
        let (g, b) = (p[layer.gamma.0], p[layer.beta.0]);
        match self {
            BnCtx::Train(stats) => x.batchnorm2d_train(g, b, &mut stats[layer.stats]),
            BnCtx::Eval(stats) => x.batchnorm2d_eval(g, b, &stats[layer.stats]),
        }
    }
}
