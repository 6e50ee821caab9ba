use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::Scalar;

pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Bottom-`k` eigenpairs of a Laplacian and the row-normalized embedding.
#[derive(Debug, Clone)]
pub struct Embedding<S> {
    /// The `k` smallest eigenvalues, ascending.
    pub values: Vec<S>,
    /// `|V|×k`, orthonormal columns.
    pub vectors: Matrix<S>,
    /// Rows of `vectors` scaled to unit length; all-zero rows stay zero.
    pub rows: Vec<Vec<S>>,
}

pub fn spectral_embed<S: Scalar>(delta: &Matrix<S>, k: usize) -> Result<Embedding<S>> {
    let n = delta.rows();
    if n != delta.cols() {
        return Err(Error::dim("spectral_embed", format!("{}x{} is not square", n, delta.cols())));
    }
    if k == 0 || k > n {
        return Err(Error::contract(format!("cannot embed {n} vertices into {k} dimensions")));
    }
    let asym = delta.asymmetry();
    if !(asym <= S::of(SYMMETRY_TOLERANCE)) {
        return Err(Error::contract(format!("Laplacian is not symmetric (max deviation {asym})")));
    }
    let eig = symmetric_eigen(delta)?;
    let vectors = eig.vectors.leading_columns(k);
    let rows = vectors
        .to_rows()
        .into_iter()
        .map(|r| {
            let norm = r.iter().map(|&v| v * v).sum::<S>().sqrt();
            if norm > S::zero() {
                r.into_iter().map(|v| v / norm).collect()
            } else {
                r
            }
        })
        .collect();
    Ok(Embedding { values: eig.values[..k].to_vec(), vectors, rows })
}
