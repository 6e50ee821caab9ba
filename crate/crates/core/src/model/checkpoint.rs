//! Checkpoint directories: `checkpoint.json` plus one tensor file per
//! parameter and per batch-norm statistic.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Discriminator, DiscriminatorSpec, Generator, GeneratorSpec, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor, write_tensor, Tensor};
use crate::trainer::EpochRecord;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: GeneratorSpec,
    pub seed: u64,
    /// Epoch whose parameters were kept (1-based; 0 for an untrained model).
    pub epoch: usize,
    pub lambda: f64,
    pub history: Vec<EpochRecord>,
    pub generator_params: Vec<String>,
    pub batchnorm_layers: usize,
    pub discriminator: Option<DiscriminatorSpec>,
    pub discriminator_params: Vec<String>,
}

/// A generator, its optional adversary and the training metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub generator: Generator<S>,
    pub discriminator: Option<Discriminator<S>>,
    pub epoch: usize,
    pub lambda: f64,
    pub history: Vec<EpochRecord>,
}

fn blob(name: &str) -> String {
    format!("{name}.eft")
}

fn write_store<S: Scalar>(dir: &Path, store: &ParamStore<S>) -> Result<Vec<String>> {
    store
        .iter()
        .map(|(name, t)| {
            write_tensor(&dir.join(blob(name)), t)?;
            Ok(name.to_string())
        })
        .collect()
}

fn read_store<S: Scalar>(dir: &Path, names: &[String], store: &mut ParamStore<S>) -> Result<()> {
    if names.len() != store.len() || names.iter().zip(store.names()).any(|(a, b)| a != b) {
        return Err(Error::Integrity("checkpoint parameter list does not match the architecture".into()));
    }
    for name in names {
        store.assign(name, read_tensor(&dir.join(blob(name)))?)?;
    }
    Ok(())
}

impl<S: Scalar> Checkpoint<S> {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let generator_params = write_store(dir, self.generator.params())?;
        for (i, st) in self.generator.bn_stats().iter().enumerate() {
            write_tensor(&dir.join(blob(&format!("bn{i}.mean"))), &Tensor::from_vec(st.mean.clone()))?;
            write_tensor(&dir.join(blob(&format!("bn{i}.var"))), &Tensor::from_vec(st.var.clone()))?;
        }
        let discriminator_params = match &self.discriminator {
            Some(d) => write_store(dir, d.params())?,
            None => Vec::new(),
        };
        let meta = CheckpointMeta {
            spec: *self.generator.spec(),
            seed: self.generator.seed(),
            epoch: self.epoch,
            lambda: self.lambda,
            history: self.history.clone(),
            generator_params,
            batchnorm_layers: self.generator.bn_stats().len(),
            discriminator: self.discriminator.as_ref().map(|d| *d.spec()),
            discriminator_params,
        };
        let path = dir.join(CHECKPOINT_FILE);
        let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CHECKPOINT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        let mut generator = Generator::build(meta.spec, meta.seed)?;
        read_store(dir, &meta.generator_params, generator.params_mut())?;
        if meta.batchnorm_layers != generator.bn_stats().len() {
            return Err(Error::Integrity("checkpoint batch-norm layer count does not match".into()));
        }
        for (i, st) in generator.bn_stats_mut().iter_mut().enumerate() {
            let mean: Tensor<S> = read_tensor(&dir.join(blob(&format!("bn{i}.mean"))))?;
            let var: Tensor<S> = read_tensor(&dir.join(blob(&format!("bn{i}.var"))))?;
            if mean.len() != st.channels() || var.len() != st.channels() {
                return Err(Error::Integrity(format!("batch-norm layer {i} has the wrong width")));
            }
            st.mean = mean.into_data();
            st.var = var.into_data();
        }
        let discriminator = match meta.discriminator {
            Some(spec) => {
                let mut d = Discriminator::build(spec, meta.seed)?;
                read_store(dir, &meta.discriminator_params, d.params_mut())?;
                Some(d)
            }
            None => None,
        };
        Ok(Self { generator, discriminator, epoch: meta.epoch, lambda: meta.lambda, history: meta.history })
    }
}
