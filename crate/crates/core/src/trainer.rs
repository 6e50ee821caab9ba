//! Unsupervised training: plain reconstruction descent, or alternating
//! discriminator / generator updates for the adversarial variants.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Discriminator, Generator, GeneratorSpec, Segment, Variant};
use crate::scalar::Scalar;
use crate::tensor::{Adam, AdamConfig, Tape, Tensor, Var};

/// Probabilities are kept this far from 0 and 1 before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Network widths; the variant and the input extents come from elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub f1: usize,
    pub depth_multiplier: usize,
    pub gru_hidden: usize,
    pub latent: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { f1: 16, depth_multiplier: 2, gru_hidden: 32, latent: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lambda_l1: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub variant: Variant,
    pub arch: ArchConfig,
    /// Stop after this many epochs without a new validation minimum.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_generator: 0.001,
            lr_discriminator: 0.0002,
            batch_size: 128,
            max_epochs: 100,
            lambda_l1: 10.0,
            validation_fraction: 0.1,
            seed: 0,
            variant: Variant::CnnRnnGan,
            arch: ArchConfig::default(),
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr_ok = |v: f64| v > 0.0 && v.is_finite();
        if !lr_ok(self.lr_generator) || !lr_ok(self.lr_discriminator) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config(format!(
                "validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return Err(Error::config("lambda_l1 must be a finite non-negative number"));
        }
        Ok(())
    }

    pub fn generator_spec(&self, channels: usize, timepoints: usize) -> GeneratorSpec {
        GeneratorSpec {
            variant: self.variant,
            channels,
            timepoints,
            f1: self.arch.f1,
            depth_multiplier: self.arch.depth_multiplier,
            gru_hidden: self.arch.gru_hidden,
            latent: self.arch.latent,
        }
    }
}

/// One completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_g: f64,
    /// Absent for the non-adversarial variants.
    pub loss_d: Option<f64>,
    pub mse_train: f64,
    pub mse_val: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Epoch (1-based) with the lowest validation MSE; the earliest on ties.
    pub fn best_epoch(&self) -> Option<usize> {
        self.records
            .iter()
            .min_by(|a, b| a.mse_val.total_cmp(&b.mse_val).then(a.epoch.cmp(&b.epoch)))
            .map(|r| r.epoch)
    }

    /// Same losses epoch for epoch, ignoring wall-clock time.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.loss_g.to_bits() == b.loss_g.to_bits()
                    && a.loss_d.map(f64::to_bits) == b.loss_d.map(f64::to_bits)
                    && a.mse_train.to_bits() == b.mse_train.to_bits()
                    && a.mse_val.to_bits() == b.mse_val.to_bits()
            })
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Validation(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<history>", e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
    }
}

/// Reconstruction loss: mean squared elementwise difference.
pub fn mse_loss<'t, S: Scalar>(x: Var<'t, S>, y: Var<'t, S>) -> Result<Var<'t, S>> {
    y.mse(x)
}

/// Discriminator and generator objectives on tape.
///
/// `loss_D = −mean[log d_real + log(1 − d_fake)]` and
/// `loss_G = −mean[log d_fake] + λ·mse(x, gx)`, with probabilities clamped
/// to `[1e-7, 1 − 1e-7]`.
pub fn gan_losses_var<'t, S: Scalar>(
    d_real: Var<'t, S>,
    d_fake: Var<'t, S>,
    x: Var<'t, S>,
    gx: Var<'t, S>,
    lambda: f64,
) -> Result<(Var<'t, S>, Var<'t, S>)> {
    let (lo, hi) = (S::of(PROB_CLAMP), S::of(1.0 - PROB_CLAMP));
    let (real, fake) = (d_real.clamp(lo, hi), d_fake.clamp(lo, hi));
    let loss_d = real.ln().mean().add(fake.one_minus().ln().mean())?.neg();
    let loss_g = fake.ln().mean().neg().add(gx.mse(x)?.scale(S::of(lambda)))?;
    Ok((loss_d, loss_g))
}

/// Scalar form of [`gan_losses_var`] for one pair of probabilities.
pub fn gan_losses<S: Scalar>(d_real: f64, d_fake: f64, x: &Tensor<S>, gx: &Tensor<S>, lambda: f64) -> Result<(f64, f64)> {
    for (name, p) in [("d_real", d_real), ("d_fake", d_fake)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::contract(format!("{name} = {p} is not a probability")));
        }
    }
    let tape = Tape::new();
    let (r, f) = (tape.constant(Tensor::scalar(S::of(d_real))), tape.constant(Tensor::scalar(S::of(d_fake))));
    let (ld, lg) = gan_losses_var(r, f, tape.constant(x.clone()), tape.constant(gx.clone()), lambda)?;
    Ok((ld.item().as_f64(), lg.item().as_f64()))
}

fn trial_key<S>(s: &Segment<S>) -> (&str, &str) {
    (&s.id.subject, &s.id.trial)
}

/// Splits segment indices into (train, validation) by whole trials.
///
/// `max(1, round(fraction·trials))` trials are held out, never all of them.
pub fn split_validation<S>(segments: &[Segment<S>], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("validation fraction must lie in (0, 1), got {fraction}")));
    }
    let mut trials: Vec<(&str, &str)> = Vec::new();
    let mut slot = HashMap::new();
    for s in segments {
        slot.entry(trial_key(s)).or_insert_with(|| {
            trials.push(trial_key(s));
            trials.len() - 1
        });
    }
    if trials.len() < 2 {
        return Err(Error::contract(format!("validation split needs at least 2 trials, got {}", trials.len())));
    }
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((fraction * trials.len() as f64).round() as usize).clamp(1, trials.len() - 1);
    let mut held = vec![false; trials.len()];
    for &t in &order[..n_val] {
        held[t] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (i, s) in segments.iter().enumerate() {
        if held[slot[&trial_key(s)]] {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((train, val))
}

/// Trained networks plus the per-epoch record.
#[derive(Debug, Clone)]
pub struct FitResult<S> {
    pub generator: Generator<S>,
    pub discriminator: Option<Discriminator<S>>,
    pub history: TrainHistory,
    /// Epoch whose parameters were returned; 0 if no epoch ran.
    pub best_epoch: usize,
}

fn common_shape<S: Scalar>(segments: &[&Segment<S>]) -> Result<(usize, usize)> {
    let first = segments.first().ok_or_else(|| Error::contract("training set is empty"))?;
    let sh = first.data.shape().to_vec();
    if sh.len() != 2 {
        return Err(Error::dim("fit", format!("segments must be [C, T], got {sh:?}")));
    }
    if let Some(bad) = segments.iter().find(|s| s.data.shape() != sh.as_slice()) {
        return Err(Error::dim("fit", format!("segment {:?} is {:?}, expected {sh:?}", bad.id, bad.data.shape())));
    }
    Ok((sh[0], sh[1]))
}

fn batch_tensor<S: Scalar>(segments: &[&Segment<S>], idx: &[usize]) -> Result<Tensor<S>> {
    let parts: Vec<Tensor<S>> = idx.iter().map(|&i| segments[i].data.clone()).collect();
    Tensor::stack(&parts)
}

/// Eval-mode reconstruction MSE over `segments`, averaged over all elements.
pub fn reconstruction_mse<S: Scalar>(generator: &Generator<S>, segments: &[&Segment<S>], batch: usize) -> Result<f64> {
    let mut sse = 0.0;
    let mut count = 0usize;
    let idx: Vec<usize> = (0..segments.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let x = batch_tensor(segments, chunk)?;
        let (y, _) = generator.autoencode_batch(&x)?;
        sse += x.data().iter().zip(y.data()).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum::<f64>();
        count += x.len();
    }
    Ok(if count == 0 { f64::NAN } else { sse / count as f64 })
}

fn finite(v: f64, epoch: usize, batch: usize, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { epoch, batch, what })
    }
}

/// Splits off a validation set by trial and trains.
pub fn fit<S: Scalar>(segments: &[Segment<S>], config: &TrainConfig) -> Result<FitResult<S>> {
    fit_observed(segments, config, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_observed<S: Scalar>(
    segments: &[Segment<S>],
    config: &TrainConfig,
    observer: impl FnMut(&EpochRecord),
) -> Result<FitResult<S>> {
    config.validate()?;
    if segments.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let (train, val) = split_validation(segments, config.validation_fraction, config.seed)?;
    let train: Vec<&Segment<S>> = train.iter().map(|&i| &segments[i]).collect();
    let val: Vec<&Segment<S>> = val.iter().map(|&i| &segments[i]).collect();
    fit_split(&train, &val, config, observer)
}

/// Trains on `train`, selecting the epoch with the lowest MSE on `val`.
pub fn fit_split<S: Scalar>(
    train: &[&Segment<S>],
    val: &[&Segment<S>],
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<FitResult<S>> {
    config.validate()?;
    let (c, t) = common_shape(train)?;
    if !val.is_empty() && common_shape(val)? != (c, t) {
        return Err(Error::dim("fit", "validation segments differ in shape from training segments"));
    }
    let spec = config.generator_spec(c, t);
    let mut generator = Generator::<S>::build(spec, config.seed)?;
    let adversarial = config.variant.is_adversarial();
    let mut discriminator = if adversarial { Some(Discriminator::<S>::build((&spec).into(), config.seed)?) } else { None };
    let mut opt_g = Adam::<S>::new(AdamConfig::with_lr(config.lr_generator));
    let mut opt_d = Adam::<S>::new(AdamConfig::with_lr(config.lr_discriminator));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, Generator<S>, Option<Discriminator<S>>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut sum_g, mut sum_d, mut sum_mse) = (0.0, 0.0, 0.0);
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = bi + 1;
            let x = batch_tensor(train, idx)?;
            let weight = idx.len() as f64;
            let tape = Tape::new();
            let gp = generator.params().bind(&tape);
            let xv = tape.constant(x.clone());
            let out = generator.forward_train(&gp, xv)?;
            let mse = out.recon.mse(xv)?;
            let mse_value = finite(mse.item().as_f64(), epoch, batch, "reconstruction loss")?;

            let loss_g = match discriminator.as_mut() {
                Some(disc) => {
                    // Discriminator step on the detached reconstruction.
                    let d_tape = Tape::new();
                    let dp = disc.params().bind(&d_tape);
                    let real = disc.forward(&dp, d_tape.constant(x.clone()))?;
                    let fake = disc.forward(&dp, d_tape.constant((*out.recon.value()).clone()))?;
                    let dummy = d_tape.constant(Tensor::scalar(S::zero()));
                    let (loss_d, _) = gan_losses_var(real, fake, dummy, dummy, 0.0)?;
                    sum_d += weight * finite(loss_d.item().as_f64(), epoch, batch, "discriminator loss")?;
                    let mut grads = d_tape.backward(loss_d)?;
                    let gd: Vec<_> = dp.iter().map(|&v| grads.take(v)).collect();
                    opt_d.step(disc.params_mut().tensors_mut(), &gd)?;

                    // Generator step against the updated discriminator.
                    let dp = disc.params().bind_constant(&tape);
                    let real = disc.forward(&dp, xv)?;
                    let fake = disc.forward(&dp, out.recon)?;
                    gan_losses_var(real, fake, xv, out.recon, config.lambda_l1)?.1
                }
                None => mse,
            };
            sum_g += weight * finite(loss_g.item().as_f64(), epoch, batch, "generator loss")?;
            sum_mse += weight * mse_value;
            let mut grads = tape.backward(loss_g)?;
            let gg: Vec<_> = gp.iter().map(|&v| grads.take(v)).collect();
            if gg.iter().any(|g| g.first_non_finite().is_some()) {
                return Err(Error::Divergence { epoch, batch, what: "gradient" });
            }
            opt_g.step(generator.params_mut().tensors_mut(), &gg)?;
        }

        let n = train.len() as f64;
        let mse_train = sum_mse / n;
        let mse_val = if val.is_empty() { mse_train } else { reconstruction_mse(&generator, val, config.batch_size)? };
        finite(mse_val, epoch, 0, "validation loss")?;
        let record = EpochRecord {
            epoch,
            loss_g: sum_g / n,
            loss_d: adversarial.then_some(sum_d / n),
            mse_train,
            mse_val,
            seconds: started.elapsed().as_secs_f64(),
        };
        observer(&record);
        history.records.push(record);

        if best.as_ref().is_none_or(|b| mse_val < b.0) {
            best = Some((mse_val, epoch, generator.clone(), discriminator.clone()));
        } else if let (Some(p), Some(b)) = (config.patience, best.as_ref()) {
            if epoch - b.1 >= p {
                break;
            }
        }
    }

    Ok(match best {
        Some((_, best_epoch, generator, discriminator)) => FitResult { generator, discriminator, history, best_epoch },
        None => FitResult { generator, discriminator, history, best_epoch: 0 },
    })
}
