use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::scalar::Scalar;

/// Principal axes fitted on a training portion; projections are zero-padded
/// to `dim` when fewer components exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca<S> {
    pub mean: Vec<S>,
    /// One unit-length axis per row, by decreasing variance.
    pub components: Vec<Vec<S>>,
    /// Variance along every axis of the raw space, descending.
    pub variances: Vec<S>,
    pub dim: usize,
}

impl<S: Scalar> Pca<S> {
    pub fn fit(fit_set: &[Vec<S>], dim: usize) -> Result<Self> {
        let Some(first) = fit_set.first() else {
            return Err(Error::contract("PCA needs a nonempty fit set"));
        };
        let d = first.len();
        if fit_set.iter().any(|r| r.len() != d) {
            return Err(Error::dim("pca", "rows differ in length"));
        }
        if dim == 0 {
            return Err(Error::config("projection dimension must be positive"));
        }
        let n = S::of(fit_set.len() as f64);
        let mut mean = vec![S::zero(); d];
        for r in fit_set {
            mean.iter_mut().zip(r).for_each(|(m, &v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = Matrix::zeros(d, d);
        for r in fit_set {
            let c: Vec<S> = r.iter().zip(&mean).map(|(&v, &m)| v - m).collect();
            for i in 0..d {
                for j in 0..=i {
                    cov[(i, j)] += c[i] * c[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..=i {
                let v: S = cov[(i, j)] / n;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let eig = symmetric_eigen(&cov)?;
        let keep = dim.min(d);
        let components = (0..keep).map(|k| eig.vectors.column(d - 1 - k)).collect();
        let variances = eig.values.iter().rev().map(|&v| v.max(S::zero())).collect();
        Ok(Self { mean, components, variances, dim })
    }

    pub fn transform(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.mean.len() {
            return Err(Error::dim("pca", format!("fitted on {} features, got {}", self.mean.len(), x.len())));
        }
        let mut out: Vec<S> = self
            .components
            .iter()
            .map(|axis| axis.iter().zip(x).zip(&self.mean).map(|((&a, &v), &m)| a * (v - m)).sum())
            .collect();
        out.resize(self.dim, S::zero());
        Ok(out)
    }

    pub fn transform_all(&self, rows: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

/// Fits PCA on `fit_set` and projects every row of `features` to `dim`.
pub fn map_to_dim<S: Scalar>(features: &[Vec<S>], dim: usize, fit_set: &[Vec<S>]) -> Result<Vec<Vec<S>>> {
    Pca::fit(fit_set, dim)?.transform_all(features)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;

    fn data(seed: u64, n: usize, d: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|j| (j as f64 + 1.0) * rng.sample::<f64, _>(StandardNormal) + j as f64).collect()).collect()
    }

    #[test]
    fn full_rank_projection_preserves_norms() {
        let x = data(0, 40, 5);
        let pca = Pca::fit(&x, 5).unwrap();
        for r in &x {
            let c: f64 = r.iter().zip(&pca.mean).map(|(v, m)| (v - m).powi(2)).sum();
            let p: f64 = pca.transform(r).unwrap().iter().map(|v| v * v).sum();
            assert!((c - p).abs() < 1e-9 * c.max(1.0));
        }
    }

    #[test]
    fn component_variances_descend() {
        let x = data(1, 200, 6);
        let proj = map_to_dim(&x, 6, &x).unwrap();
        let var = |k: usize| proj.iter().map(|r| r[k] * r[k]).sum::<f64>() / proj.len() as f64;
        for k in 1..6 {
            assert!(var(k - 1) >= var(k) - 1e-12);
        }
    }

    #[test]
    fn reconstruction_error_is_tail_sum() {
        let x = data(2, 100, 6);
        let pca = Pca::fit(&x, 3).unwrap();
        let mut err = 0.0;
        for r in &x {
            let p = pca.transform(r).unwrap();
            let recon: Vec<f64> = (0..6).map(|j| pca.mean[j] + (0..3).map(|k| p[k] * pca.components[k][j]).sum::<f64>()).collect();
            err += r.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        err /= x.len() as f64;
        let tail: f64 = pca.variances[3..].iter().sum();
        assert!((err - tail).abs() < 1e-9 * tail, "{err} {tail}");
    }

    #[test]
    fn pads_small_inputs() {
        let x = data(3, 10, 2);
        let p = map_to_dim(&x, 5, &x).unwrap();
        assert!(p.iter().all(|r| r.len() == 5 && r[2..].iter().all(|&v| v == 0.0)));
        assert!(matches!(map_to_dim::<f64>(&x, 5, &[]), Err(Error::Contract(_))));
    }
}
