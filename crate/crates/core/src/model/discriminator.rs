use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::spec::{DiscriminatorSpec, POOL1, SEPARABLE_KERNEL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Conv2dConfig, Tape, Tensor, Var};

/// Real-versus-reconstructed classifier. It reuses the encoder's conv layout
/// without batch norm, then global average pooling and a sigmoid head.
#[derive(Debug, Clone)]
pub struct Discriminator<S> {
    spec: DiscriminatorSpec,
    params: ParamStore<S>,
    temporal: ParamId,
    spatial: ParamId,
    sep_depth: ParamId,
    sep_point: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

impl<S: Scalar> Discriminator<S> {
    pub fn build(spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        let t = spec.timepoints;
        if spec.channels == 0 || spec.f1 == 0 || spec.depth_multiplier == 0 {
            return Err(Error::Config("discriminator widths must be positive".into()));
        }
        if t < 2 || t % 2 != 0 || t % POOL1 != 0 {
            return Err(Error::Config(format!("discriminator: T={t} must be divisible by {POOL1}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut p = ParamStore::default();
        let (c, f1, f2) = (spec.channels, spec.f1, spec.f1 * spec.depth_multiplier);
        let temporal = p.glorot("disc.temporal", &[f1, 1, 1, t / 2], 1, &mut rng);
        let spatial = p.glorot("disc.spatial", &[f2, 1, c, 1], f1, &mut rng);
        let sep_depth = p.glorot("disc.sep_depth", &[f2, 1, 1, SEPARABLE_KERNEL], f2, &mut rng);
        let sep_point = p.glorot("disc.sep_point", &[f2, f2, 1, 1], 1, &mut rng);
        let head_w = p.glorot("disc.head.w", &[f2, 1], 1, &mut rng);
        let head_b = p.zeros("disc.head.b", &[1]);
        Ok(Self { spec, params: p, temporal, spatial, sep_depth, sep_point, head_w, head_b })
    }

    pub fn spec(&self) -> &DiscriminatorSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Probabilities `[N, 1]` for a batch `[N, C, T]`.
    pub fn forward<'t>(&self, p: &[Var<'t, S>], x: Var<'t, S>) -> Result<Var<'t, S>> {
        let (c, t) = (self.spec.channels, self.spec.timepoints);
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != c || sh[2] != t {
            return Err(Error::dim("discriminator", format!("expected [N, {c}, {t}], got {sh:?}")));
        }
        let n = sh[0];
        let (f1, f2) = (self.spec.f1, self.spec.f1 * self.spec.depth_multiplier);
        let k = t / 2;
        let h = x.reshape(&[n, 1, c, t])?;
        let h = h.conv2d(p[self.temporal.0], Conv2dConfig::padded((0, k / 2)))?;
        let h = h.narrow(3, 0, t)?;
        let h = h.conv2d(p[self.spatial.0], Conv2dConfig::grouped(f1))?.elu().avg_pool2d((1, POOL1))?;
        let l = t / POOL1;
        let sep = Conv2dConfig { padding: (0, SEPARABLE_KERNEL / 2), groups: f2, ..Conv2dConfig::default() };
        let h = h.conv2d(p[self.sep_depth.0], sep)?.narrow(3, 0, l)?;
        let h = h.conv2d(p[self.sep_point.0], Conv2dConfig::default())?.elu();
        let pooled = h.avg_pool2d((1, l))?.reshape(&[n, f2])?;
        Ok(pooled.affine(p[self.head_w.0], p[self.head_b.0])?.sigmoid())
    }

    /// Probability that one segment `[C, T]` is real.
    pub fn discriminate(&self, x: &Tensor<S>) -> Result<S> {
        let (c, t) = (self.spec.channels, self.spec.timepoints);
        if x.shape() != [c, t] {
            return Err(Error::dim("discriminator", format!("expected [{c}, {t}], got {:?}", x.shape())));
        }
        let tape = Tape::new();
        let p = self.params.bind_constant(&tape);
        let out = self.forward(&p, tape.constant(x.clone().reshape(&[1, c, t])?))?;
        Ok(out.item())
    }
}
