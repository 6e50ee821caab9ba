use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gru::{bigru_vars, GruIds};
use super::params::{BatchNormLayer, BnCtx, ParamId, ParamStore};
use super::spec::{GeneratorSpec, POOL1, POOL2, SEPARABLE_KERNEL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{BatchNormStats, Conv2dConfig, Tape, Tensor, Var};

#[derive(Debug, Clone)]
enum Bottleneck {
    Affine { w: ParamId, b: ParamId },
    BiGru { fwd: GruIds, bwd: GruIds },
}

#[derive(Debug, Clone)]
struct DecoderRnn {
    gru: GruIds,
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layers {
    temporal: ParamId,
    bn1: BatchNormLayer,
    spatial: ParamId,
    bn2: BatchNormLayer,
    sep_depth: ParamId,
    sep_point: ParamId,
    bn3: BatchNormLayer,
    bottleneck: Bottleneck,
    proj_w: ParamId,
    proj_b: ParamId,
    rnn: Option<DecoderRnn>,
    up1: ParamId,
    dbn1: BatchNormLayer,
    up2: ParamId,
    dbn2: BatchNormLayer,
    dspatial: ParamId,
    dbn3: BatchNormLayer,
    dtemporal: ParamId,
}

/// Reconstruction and latent code of one forward pass.
pub struct GenOutput<'t, S> {
    /// `[N, C, T]`
    pub recon: Var<'t, S>,
    /// `[N, ℓ]`
    pub latent: Var<'t, S>,
}

/// Encoder-decoder network. Parameters live in a [`ParamStore`] so an
/// optimizer can walk them as one flat list.
#[derive(Debug, Clone)]
pub struct Generator<S> {
    spec: GeneratorSpec,
    seed: u64,
    params: ParamStore<S>,
    bn: Vec<BatchNormStats<S>>,
    layers: Layers,
}

/// Keeps the first `len` samples along the time axis.
fn crop<'t, S: Scalar>(x: Var<'t, S>, len: usize) -> Result<Var<'t, S>> {
    if x.shape()[3] == len {
        Ok(x)
    } else {
        x.narrow(3, 0, len)
    }
}

/// Splits `[N, F, 1, S]` into `S` steps of `[N, F]`.
fn time_steps<'t, S: Scalar>(x: Var<'t, S>) -> Result<Vec<Var<'t, S>>> {
    let sh = x.shape();
    (0..sh[3]).map(|s| x.narrow(3, s, 1)?.reshape(&[sh[0], sh[1]])).collect()
}

impl<S: Scalar> Generator<S> {
    pub fn build(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::default();
        let mut bn = Vec::new();
        let (c, f1, f2, k, s, lat) =
            (spec.channels, spec.f1, spec.f2(), spec.temporal_kernel(), spec.pooled_len(), spec.latent);

        let temporal = p.glorot("enc.temporal", &[f1, 1, 1, k], 1, &mut rng);
        let bn1 = BatchNormLayer::new("enc.bn1", f1, &mut p, &mut bn);
        let spatial = p.glorot("enc.spatial", &[f2, 1, c, 1], f1, &mut rng);
        let bn2 = BatchNormLayer::new("enc.bn2", f2, &mut p, &mut bn);
        let sep_depth = p.glorot("enc.sep_depth", &[f2, 1, 1, SEPARABLE_KERNEL], f2, &mut rng);
        let sep_point = p.glorot("enc.sep_point", &[f2, f2, 1, 1], 1, &mut rng);
        let bn3 = BatchNormLayer::new("enc.bn3", f2, &mut p, &mut bn);
        let bottleneck = if spec.variant.is_recurrent() {
            Bottleneck::BiGru {
                fwd: GruIds::register("enc.gru_fwd", f2, spec.gru_hidden, &mut p, &mut rng),
                bwd: GruIds::register("enc.gru_bwd", f2, spec.gru_hidden, &mut p, &mut rng),
            }
        } else {
            Bottleneck::Affine {
                w: p.glorot("enc.proj.w", &[f2 * s, lat], 1, &mut rng),
                b: p.zeros("enc.proj.b", &[lat]),
            }
        };

        let proj_w = p.glorot("dec.proj.w", &[lat, f2 * s], 1, &mut rng);
        let proj_b = p.zeros("dec.proj.b", &[f2 * s]);
        let rnn = spec.variant.is_recurrent().then(|| DecoderRnn {
            gru: GruIds::register("dec.gru", f2, lat, &mut p, &mut rng),
            w: p.glorot("dec.gru_out.w", &[lat, f2], 1, &mut rng),
            b: p.zeros("dec.gru_out.b", &[f2]),
        });
        let up1 = p.glorot("dec.up1", &[f2, f2, 1, POOL2], 1, &mut rng);
        let dbn1 = BatchNormLayer::new("dec.bn1", f2, &mut p, &mut bn);
        let up2 = p.glorot("dec.up2", &[f2, f2, 1, POOL1], 1, &mut rng);
        let dbn2 = BatchNormLayer::new("dec.bn2", f2, &mut p, &mut bn);
        let dspatial = p.glorot("dec.spatial", &[f2, f1, c, 1], 1, &mut rng);
        let dbn3 = BatchNormLayer::new("dec.bn3", f1, &mut p, &mut bn);
        let dtemporal = p.glorot("dec.temporal", &[f1, 1, 1, k + 1], 1, &mut rng);

        let layers = Layers {
            temporal, bn1, spatial, bn2, sep_depth, sep_point, bn3, bottleneck,
            proj_w, proj_b, rnn, up1, dbn1, up2, dbn2, dspatial, dbn3, dtemporal,
        };
        Ok(Self { spec, seed, params: p, bn, layers })
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
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

    pub fn bn_stats(&self) -> &[BatchNormStats<S>] {
        &self.bn
    }

    pub fn bn_stats_mut(&mut self) -> &mut [BatchNormStats<S>] {
        &mut self.bn
    }

    /// Training-mode pass: batch statistics, running statistics updated.
    /// `p` must come from `self.params().bind(tape)`; `x` is `[N, C, T]`.
    pub fn forward_train<'t>(&mut self, p: &[Var<'t, S>], x: Var<'t, S>) -> Result<GenOutput<'t, S>> {
        let mut ctx = BnCtx::Train(&mut self.bn);
        self.layers.forward(&self.spec, p, x, &mut ctx)
    }

    /// Eval-mode pass with the running statistics.
    pub fn forward_eval<'t>(&self, p: &[Var<'t, S>], x: Var<'t, S>) -> Result<GenOutput<'t, S>> {
        self.layers.forward(&self.spec, p, x, &mut BnCtx::Eval(&self.bn))
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        let (c, t) = (self.spec.channels, self.spec.timepoints);
        if shape.len() != 3 || shape[1] != c || shape[2] != t {
            return Err(Error::dim("generator", format!("expected [N, {c}, {t}], got {shape:?}")));
        }
        Ok(())
    }

    /// Eval-mode reconstruction and latent codes of a batch `[N, C, T]`.
    pub fn autoencode_batch(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        self.check_input(x.shape())?;
        let tape = Tape::new();
        let p = self.params.bind_constant(&tape);
        let out = self.forward_eval(&p, tape.constant(x.clone()))?;
        Ok(((*out.recon.value()).clone(), (*out.latent.value()).clone()))
    }

    /// Eval-mode latent codes `[N, ℓ]` of a batch `[N, C, T]`.
    pub fn encode_batch(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        self.check_input(x.shape())?;
        let tape = Tape::new();
        let p = self.params.bind_constant(&tape);
        let mut ctx = BnCtx::Eval(&self.bn);
        let o = self.layers.encode(&self.spec, &p, tape.constant(x.clone()), &mut ctx)?;
        Ok((*o.value()).clone())
    }

    /// Latent code of one segment `[C, T]`.
    pub fn encode(&self, x: &Tensor<S>) -> Result<Vec<S>> {
        let batch = self.single(x)?;
        Ok(self.encode_batch(&batch)?.into_data())
    }

    /// Reconstruction `[C, T]` from a latent code.
    pub fn decode(&self, latent: &[S]) -> Result<Tensor<S>> {
        if latent.len() != self.spec.latent {
            return Err(Error::dim("decode", format!("latent has length {}, expected {}", latent.len(), self.spec.latent)));
        }
        let tape = Tape::new();
        let p = self.params.bind_constant(&tape);
        let o = tape.constant(Tensor::from_parts(vec![1, latent.len()], latent.to_vec()));
        let y = self.layers.decode(&self.spec, &p, o, &mut BnCtx::Eval(&self.bn))?;
        let t = (*y.value()).clone();
        t.reshape(&[self.spec.channels, self.spec.timepoints])
    }

    /// Reconstruction and latent code of one segment `[C, T]`.
    pub fn autoencode(&self, x: &Tensor<S>) -> Result<(Tensor<S>, Vec<S>)> {
        let (y, o) = self.autoencode_batch(&self.single(x)?)?;
        Ok((y.reshape(x.shape())?, o.into_data()))
    }

    fn single(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (c, t) = (self.spec.channels, self.spec.timepoints);
        if x.shape() != [c, t] {
            return Err(Error::dim("generator", format!("expected [{c}, {t}], got {:?}", x.shape())));
        }
        x.clone().reshape(&[1, c, t])
    }
}

impl Layers {
    fn forward<'t, S: Scalar>(
        &self,
        spec: &GeneratorSpec,
        p: &[Var<'t, S>],
        x: Var<'t, S>,
        bn: &mut BnCtx<'_, S>,
    ) -> Result<GenOutput<'t, S>> {
        let latent = self.encode(spec, p, x, bn)?;
        let y = self.decode(spec, p, latent, bn)?;
        let n = x.shape()[0];
        let recon = y.reshape(&[n, spec.channels, spec.timepoints])?;
        Ok(GenOutput { recon, latent })
    }

    fn encode<'t, S: Scalar>(
        &self,
        spec: &GeneratorSpec,
        p: &[Var<'t, S>],
        x: Var<'t, S>,
        bn: &mut BnCtx<'_, S>,
    ) -> Result<Var<'t, S>> {
        let sh = x.shape();
        if sh.len() != 3 || sh[1] != spec.channels || sh[2] != spec.timepoints {
            return Err(Error::dim(
                "generator",
                format!("expected [N, {}, {}], got {sh:?}", spec.channels, spec.timepoints),
            ));
        }
        let (n, t, f1, f2) = (sh[0], spec.timepoints, spec.f1, spec.f2());
        let k = spec.temporal_kernel();
        let x = x.reshape(&[n, 1, spec.channels, t])?;

        let h = x.conv2d(p[self.temporal.0], Conv2dConfig::padded((0, k / 2)))?;
        let h = bn.apply(crop(h, t)?, self.bn1, p)?;
        let h = h.conv2d(p[self.spatial.0], Conv2dConfig::grouped(f1))?;
        let h = bn.apply(h, self.bn2, p)?.elu().avg_pool2d((1, POOL1))?;
        let l = t / POOL1;
        let sep = Conv2dConfig { padding: (0, SEPARABLE_KERNEL / 2), groups: f2, ..Conv2dConfig::default() };
        let h = crop(h.conv2d(p[self.sep_depth.0], sep)?, l)?;
        let h = h.conv2d(p[self.sep_point.0], Conv2dConfig::default())?;
        let h = bn.apply(h, self.bn3, p)?.elu().avg_pool2d((1, POOL2))?;

        match &self.bottleneck {
            Bottleneck::Affine { w, b } => h.reshape(&[n, f2 * spec.pooled_len()])?.affine(p[w.0], p[b.0]),
            Bottleneck::BiGru { fwd, bwd } => {
                let steps = time_steps(h)?;
                let out = bigru_vars(&steps, &fwd.vars(p), &bwd.vars(p))?;
                Var::concat(&[out.forward_final, out.backward_final], 1)
            }
        }
    }

    /// Maps `[N, ℓ]` to `[N, 1, C, T]`.
    fn decode<'t, S: Scalar>(
        &self,
        spec: &GeneratorSpec,
        p: &[Var<'t, S>],
        latent: Var<'t, S>,
        bn: &mut BnCtx<'_, S>,
    ) -> Result<Var<'t, S>> {
        let n = latent.shape()[0];
        let (f2, s, k) = (spec.f2(), spec.pooled_len(), spec.temporal_kernel());
        let mut h = latent.affine(p[self.proj_w.0], p[self.proj_b.0])?.reshape(&[n, f2, 1, s])?;
        if let Some(rnn) = &self.rnn {
            let states = rnn.gru.vars(p).unroll(&time_steps(h)?, latent)?;
            let per_step = states
                .iter()
                .map(|st| st.affine(p[rnn.w.0], p[rnn.b.0])?.reshape(&[n, f2, 1, 1]))
                .collect::<Result<Vec<_>>>()?;
            h = Var::concat(&per_step, 3)?;
        }
        let h = h.conv_transpose2d(p[self.up1.0], (1, POOL2), (0, 0))?;
        let h = bn.apply(h, self.dbn1, p)?.elu();
        let h = h.conv_transpose2d(p[self.up2.0], (1, POOL1), (0, 0))?;
        let h = bn.apply(h, self.dbn2, p)?.elu();
        let h = h.conv_transpose2d(p[self.dspatial.0], (1, 1), (0, 0))?;
        let h = bn.apply(h, self.dbn3, p)?.elu();
        h.conv_transpose2d(p[self.dtemporal.0], (1, 1), (0, k / 2))
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::model::spec::Variant;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn small(variant: Variant) -> GeneratorSpec {
        GeneratorSpec::new(variant, 4, 64).with_width(2, 2).with_latent(8)
    }

    #[test]
    fn full_size_latent_has_64_values() {
        let g = Generator::<f32>::build(GeneratorSpec::new(Variant::CnnRnnGan, 32, 384), 1).unwrap();
        let x = random(&[32, 384], 2).cast::<f32>();
        let o = g.encode(&x).unwrap();
        assert_eq!(o.len(), 64);
        assert!(o.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn round_trip_shape_every_variant() {
        for v in Variant::ALL {
            let g = Generator::<f64>::build(small(v), 3).unwrap();
            let x = random(&[4, 64], 4);
            let (y, o) = g.autoencode(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert_eq!(o.len(), 8);
            assert_eq!(g.decode(&o).unwrap(), y);
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let g = Generator::<f64>::build(small(Variant::CnnRnn), 5).unwrap();
        let x = random(&[4, 64], 6);
        assert_eq!(g.encode(&x).unwrap(), g.encode(&x).unwrap());
    }

    #[test]
    fn recurrent_variants_have_more_parameters() {
        for spec in [GeneratorSpec::new(Variant::Cnn, 32, 384), small(Variant::Cnn)] {
            let cnn = Generator::<f32>::build(spec, 0).unwrap().param_count();
            let rnn = Generator::<f32>::build(GeneratorSpec { variant: Variant::CnnRnn, ..spec }, 0)
                .unwrap()
                .param_count();
            assert!(cnn < rnn, "{cnn} vs {rnn}");
        }
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Generator::<f64>::build(small(Variant::CnnGan), 7).unwrap();
        let b = Generator::<f64>::build(small(Variant::CnnGan), 7).unwrap();
        let c = Generator::<f64>::build(small(Variant::CnnGan), 8).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn shape_errors() {
        let g = Generator::<f64>::build(small(Variant::Cnn), 1).unwrap();
        assert!(matches!(g.encode(&random(&[5, 64], 1)), Err(Error::Dimension { .. })));
        assert!(matches!(g.decode(&[0.0; 7]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn training_pass_updates_running_stats() {
        let mut g = Generator::<f64>::build(small(Variant::Cnn), 1).unwrap();
        let before = g.bn_stats().to_vec();
        let tape = Tape::new();
        let p = g.params().bind(&tape);
        let x = tape.constant(random(&[3, 4, 64], 2));
        let out = g.forward_train(&p, x).unwrap();
        assert_eq!(out.recon.shape(), vec![3, 4, 64]);
        assert_ne!(g.bn_stats(), &before[..]);
    }
}
