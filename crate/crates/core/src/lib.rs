//! Unsupervised EEG feature fusion and hypergraph decoding.
//!
//! A hybrid CNN / bidirectional-GRU / GAN encoder-decoder learns a fixed-size
//! latent vector per EEG segment without labels. A kNN hypergraph over those
//! vectors is partitioned through the bottom eigenspace of its normalized
//! Laplacian, and clusters are mapped to emotion classes with the labels of a
//! small training subsample. Evaluation runs leave-one-subject-out.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! pin the common choices.

pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod hypergraph;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod signal;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tensor::{Tape, Tensor, Var};

/// Single-precision tensor, used for training runs and on-disk segment blobs.
pub type Tensor32 = Tensor<f32>;
/// Double-precision tensor, used for gradient checks and oracles.
pub type Tensor64 = Tensor<f64>;
