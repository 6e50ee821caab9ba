mod conv;
mod elementwise;
mod linear;
pub(crate) use linear::matmul_raw;
mod norm;
mod shape;

pub use conv::{conv_extent, conv_transpose_extent, Conv2dConfig};
pub use elementwise::Activation;
pub use norm::{BatchNormStats, Mode};

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) fn same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub(crate) fn expect_rank<S: Scalar>(op: &'static str, t: &Tensor<S>, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::dim(op, format!("expected rank {rank}, got shape {:?}", t.shape())));
    }
    Ok(())
}
