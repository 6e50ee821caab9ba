//! Generator (encoder-decoder) and discriminator networks.

mod checkpoint;
mod discriminator;
mod generator;
mod gru;
mod params;
mod spec;

pub use checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_FILE};
pub use discriminator::Discriminator;
pub use generator::{GenOutput, Generator};
pub use gru::{bigru, bigru_vars, gru_cell, BiGruOutput, GruCellParams, GruVars};
pub use params::{ParamId, ParamStore};
pub use spec::{DiscriminatorSpec, GeneratorSpec, LatentFeature, Segment, SegmentId, Variant};
