use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four ablation variants: with or without recurrent layers, with or
/// without the adversarial loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Cnn,
    CnnGan,
    CnnRnn,
    CnnRnnGan,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cnn, Variant::CnnGan, Variant::CnnRnn, Variant::CnnRnnGan];

    pub fn is_recurrent(self) -> bool {
        matches!(self, Variant::CnnRnn | Variant::CnnRnnGan)
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, Variant::CnnGan | Variant::CnnRnnGan)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::CnnGan => "cnn_gan",
            Variant::CnnRnn => "cnn_rnn",
            Variant::CnnRnnGan => "cnn_rnn_gan",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}; expected cnn, cnn_gan, cnn_rnn or cnn_rnn_gan")))
    }
}

pub const POOL1: usize = 4;
pub const POOL2: usize = 8;
pub const SEPARABLE_KERNEL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub variant: Variant,
    pub channels: usize,
    pub timepoints: usize,
    pub f1: usize,
    pub depth_multiplier: usize,
    pub gru_hidden: usize,
    pub latent: usize,
}

impl GeneratorSpec {
    /// Full-width network: 16 temporal filters, depth 2, 64 latent features.
    pub fn new(variant: Variant, channels: usize, timepoints: usize) -> Self {
        Self { variant, channels, timepoints, f1: 16, depth_multiplier: 2, gru_hidden: 32, latent: 64 }
    }

    pub fn with_width(mut self, f1: usize, depth_multiplier: usize) -> Self {
        self.f1 = f1;
        self.depth_multiplier = depth_multiplier;
        self
    }

    pub fn with_latent(mut self, latent: usize) -> Self {
        self.latent = latent;
        self.gru_hidden = latent / 2;
        self
    }

    pub fn f2(&self) -> usize {
        self.f1 * self.depth_multiplier
    }

    pub fn temporal_kernel(&self) -> usize {
        self.timepoints / 2
    }

    /// Time extent after both pooling stages.
    pub fn pooled_len(&self) -> usize {
        self.timepoints / (POOL1 * POOL2)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.timepoints;
        if self.channels == 0 || self.f1 == 0 || self.depth_multiplier == 0 {
            return Err(Error::Config("channels, f1 and depth multiplier must be positive".into()));
        }
        if t < 2 || t % 2 != 0 {
            return Err(Error::Config(format!("temporal conv: T={t} must be even so the kernel T/2 is integral")));
        }
        if t % POOL1 != 0 {
            return Err(Error::Config(format!("avg-pool 1x{POOL1}: T={t} is not divisible by {POOL1}")));
        }
        if (t / POOL1) % POOL2 != 0 {
            return Err(Error::Config(format!(
                "avg-pool 1x{POOL2}: pooled length {} is not divisible by {POOL2}",
                t / POOL1
            )));
        }
        if self.latent == 0 {
            return Err(Error::Config("latent size must be positive".into()));
        }
        if self.variant.is_recurrent() && self.latent != 2 * self.gru_hidden {
            return Err(Error::Config(format!(
                "recurrent variants need latent = 2·gru_hidden, got {} and {}",
                self.latent, self.gru_hidden
            )));
        }
        Ok(())
    }
}

/// Discriminator geometry, independent of the generator variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub channels: usize,
    pub timepoints: usize,
    pub f1: usize,
    pub depth_multiplier: usize,
}

impl From<&GeneratorSpec> for DiscriminatorSpec {
    fn from(g: &GeneratorSpec) -> Self {
        Self { channels: g.channels, timepoints: g.timepoints, f1: g.f1, depth_multiplier: g.depth_multiplier }
    }
}

/// Identity of one segment: subject, trial and position within the trial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentId {
    pub subject: String,
    pub trial: String,
    pub index: usize,
}

/// Latent representation of one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFeature<S> {
    pub values: Vec<S>,
    pub segment: SegmentId,
}

/// One `[C, T]` window of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<S> {
    pub id: SegmentId,
    pub data: crate::tensor::Tensor<S>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        assert_eq!("cnn-rnn-gan".parse::<Variant>().unwrap(), Variant::CnnRnnGan);
        assert_eq!("cnn_gan".parse::<Variant>().unwrap(), Variant::CnnGan);
        assert!("lstm".parse::<Variant>().is_err());
        assert_eq!(serde_json::to_string(&Variant::CnnRnn).unwrap(), "\"cnn_rnn\"");
    }

    #[test]
    fn validation_names_the_stage() {
        let ok = GeneratorSpec::new(Variant::CnnRnn, 32, 384);
        ok.validate().unwrap();
        assert_eq!(ok.pooled_len(), 12);
        let odd = GeneratorSpec { timepoints: 63, ..ok };
        assert!(odd.validate().unwrap_err().to_string().contains("temporal"));
        let p1 = GeneratorSpec { timepoints: 66, ..ok };
        assert!(p1.validate().unwrap_err().to_string().contains("1x4"));
        let p2 = GeneratorSpec { timepoints: 72, ..ok };
        assert!(p2.validate().unwrap_err().to_string().contains("1x8"));
        let lat = GeneratorSpec { latent: 50, ..ok };
        assert!(matches!(lat.validate(), Err(Error::Config(_))));
        GeneratorSpec { latent: 50, variant: Variant::Cnn, ..ok }.validate().unwrap();
    }
}
