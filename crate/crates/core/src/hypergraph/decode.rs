use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{knn_hyperedges_with, laplacian, Bandwidth};
use super::kmeans::kmeans;
use super::spectral::spectral_embed;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Neighbours per hyperedge.
    pub kappa: usize,
    /// Percent of training candidates kept for the joint graph.
    pub eta: f64,
    pub n_classes: usize,
    pub latent: usize,
    pub bandwidth: Bandwidth,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { kappa: 5, eta: 10.0, n_classes: 2, latent: 64, bandwidth: Bandwidth::MeanDistance, seed: 0 }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kappa == 0 {
            return Err(Error::config("kappa must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta <= 100.0) {
            return Err(Error::config(format!("eta must lie in (0, 100], got {}", self.eta)));
        }
        if self.n_classes < 2 {
            return Err(Error::config("decoding needs at least 2 classes"));
        }
        if self.latent == 0 {
            return Err(Error::config("latent size must be positive"));
        }
        Ok(())
    }
}

/// Indices of a uniform sample without replacement of `round(eta/100·n)`
/// candidates, sorted ascending.
pub fn subsample_training(n: usize, eta: f64, seed: u64) -> Result<Vec<usize>> {
    if !(eta > 0.0 && eta <= 100.0) {
        return Err(Error::config(format!("eta must lie in (0, 100], got {eta}")));
    }
    let size = (eta / 100.0 * n as f64).round() as usize;
    if size == 0 {
        return Err(Error::contract(format!("{eta}% of {n} candidates selects nothing")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, size.min(n)).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Labelled training vertices for one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures<S> {
    pub features: Vec<Vec<S>>,
    pub labels: Vec<usize>,
}

impl<S: Scalar> LabeledFeatures<S> {
    pub fn new(features: Vec<Vec<S>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::contract(format!("{} features but {} labels", features.len(), labels.len())));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster per vertex: training vertices first, then test vertices.
    pub clusters: Vec<usize>,
    pub cluster_class: Vec<usize>,
    /// Predicted class per test vertex.
    pub predictions: Vec<usize>,
}

/// Majority training label per cluster. Ties go to the smaller class; a
/// cluster without training vertices takes the global majority class.
pub fn map_clusters(train_clusters: &[usize], labels: &[usize], n_clusters: usize, n_classes: usize) -> Result<Vec<usize>> {
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::contract(format!("label {l} is outside {n_classes} classes")));
    }
    let mut votes = vec![vec![0usize; n_classes]; n_clusters];
    let mut global = vec![0usize; n_classes];
    for (&c, &l) in train_clusters.iter().zip(labels) {
        votes[c][l] += 1;
        global[l] += 1;
    }
    let argmax = |v: &[usize]| (0..v.len()).max_by_key(|&i| (v[i], std::cmp::Reverse(i))).unwrap();
    let fallback = argmax(&global);
    Ok(votes.iter().map(|v| if v.iter().all(|&x| x == 0) { fallback } else { argmax(v) }).collect())
}

/// Embeds with the `n_classes` smallest eigenvectors of `delta`, clusters
/// into `n_classes` groups and maps clusters through the first
/// `train_labels.len()` vertices.
pub fn partition_and_map<S: Scalar>(delta: &Matrix<S>, train_labels: &[usize], n_classes: usize, seed: u64) -> Result<ClusterResult> {
    let n = delta.rows();
    let n_train = train_labels.len();
    if n_train == 0 {
        return Err(Error::contract("decoding needs at least one training vertex"));
    }
    if n_train >= n {
        return Err(Error::contract("decoding needs at least one test vertex"));
    }
    let emb = spectral_embed(delta, n_classes)?;
    let km = kmeans(&emb.rows, n_classes, seed)?;
    let cluster_class = map_clusters(&km.assignments[..n_train], train_labels, n_classes, n_classes)?;
    let predictions = km.assignments[n_train..].iter().map(|&c| cluster_class[c]).collect();
    Ok(ClusterResult { clusters: km.assignments, cluster_class, predictions })
}

/// One joint kNN hypergraph over training and test vertices. Test vertices
/// carry no labels.
pub fn decode_fold<S: Scalar>(train: &LabeledFeatures<S>, test: &[Vec<S>], config: &DecodeConfig) -> Result<ClusterResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::contract("training subsample is empty"));
    }
    if test.is_empty() {
        return Err(Error::contract("test set is empty"));
    }
    let joint: Vec<Vec<S>> = train.features.iter().chain(test).cloned().collect();
    let hg = knn_hyperedges_with(&joint, config.kappa, config.bandwidth)?;
    let delta = laplacian(&hg)?;
    partition_and_map(&delta, &train.labels, config.n_classes, config.seed)
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand_distr::StandardNormal;

    use super::*;

    #[test]
    fn subsample_sizes() {
        assert_eq!(subsample_training(74400, 10.0, 0).unwrap().len(), 7440);
        assert_eq!(subsample_training(74400, 1.0, 0).unwrap().len(), 744);
        assert_eq!(subsample_training(50, 100.0, 3).unwrap(), (0..50).collect::<Vec<_>>());
        assert!(matches!(subsample_training(4, 10.0, 0), Err(Error::Contract(_))));
        assert!(matches!(subsample_training(4, 0.0, 0), Err(Error::Config(_))));
        let a = subsample_training(1000, 5.0, 9).unwrap();
        assert_eq!(a, subsample_training(1000, 5.0, 9).unwrap());
        assert_ne!(a, subsample_training(1000, 5.0, 10).unwrap());
    }

    #[test]
    fn mapping_rules() {
        assert_eq!(map_clusters(&[0, 0, 1, 1], &[1, 1, 0, 1], 3, 2).unwrap(), vec![1, 0, 1]);
        assert!(map_clusters(&[0], &[2], 1, 2).is_err());
    }

    fn blobs(rng: &mut ChaCha8Rng, per: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut f = Vec::new();
        let mut l = Vec::new();
        for i in 0..2 * per {
            let c = i % 2;
            f.push((0..dim).map(|_| if c == 0 { -8.0 } else { 8.0 } + rng.sample::<f64, _>(StandardNormal)).collect());
            l.push(c);
        }
        (f, l)
    }

    #[test]
    fn planted_blobs_decode_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (tf, tl) = blobs(&mut rng, 10, 6);
        let (xf, xl) = blobs(&mut rng, 20, 6);
        let train = LabeledFeatures::new(tf, tl).unwrap();
        let res = decode_fold(&train, &xf, &DecodeConfig::default()).unwrap();
        assert_eq!(res.predictions, xl);
        assert!(res.clusters.iter().all(|&c| c < 2));
    }

    #[test]
    fn duplicated_training_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (tf, tl) = blobs(&mut rng, 8, 4);
        let train = LabeledFeatures::new(tf.clone(), tl.clone()).unwrap();
        let res = decode_fold(&train, &tf, &DecodeConfig::default()).unwrap();
        assert_eq!(res.predictions, tl);
    }

    #[test]
    fn three_way_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut f = Vec::new();
        let mut l = Vec::new();
        for i in 0..60 {
            let c = i % 3;
            f.push((0..5).map(|d| if d == c { 10.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>());
            l.push(c);
        }
        let train = LabeledFeatures::new(f[..15].to_vec(), l[..15].to_vec()).unwrap();
        let cfg = DecodeConfig { n_classes: 3, ..DecodeConfig::default() };
        let res = decode_fold(&train, &f[15..], &cfg).unwrap();
        assert_eq!(res.predictions, l[15..].to_vec());
    }

    #[test]
    fn empty_inputs() {
        let train = LabeledFeatures::<f64>::new(vec![], vec![]).unwrap();
        assert!(matches!(decode_fold(&train, &[vec![0.0]], &DecodeConfig::default()), Err(Error::Contract(_))));
        assert!(LabeledFeatures::new(vec![vec![0.0]], vec![]).is_err());
    }
}
