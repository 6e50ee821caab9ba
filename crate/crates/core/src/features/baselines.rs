use super::pca::Pca;
use crate::error::{Error, Result};
use crate::hypergraph::{gaussian_affinity, graph_laplacian, kmeans, map_clusters, partition_and_map, ClusterResult, DecodeConfig, LabeledFeatures};
use crate::scalar::Scalar;

fn check<S>(train: &LabeledFeatures<S>, test: &[Vec<S>], config: &DecodeConfig) -> Result<()> {
    config.validate()?;
    if train.labels.is_empty() {
        return Err(Error::contract("training subsample is empty"));
    }
    if test.is_empty() {
        return Err(Error::contract("test set is empty"));
    }
    Ok(())
}

/// PCA (fitted on the training vertices) to `config.latent` dimensions,
/// then k-means over training and test vertices together.
pub fn pca_kmeans_baseline<S: Scalar>(train: &LabeledFeatures<S>, test: &[Vec<S>], config: &DecodeConfig) -> Result<ClusterResult> {
    check(train, test, config)?;
    let pca = Pca::fit(&train.features, config.latent)?;
    let joint = pca.transform_all(&train.features.iter().chain(test).cloned().collect::<Vec<_>>())?;
    let km = kmeans(&joint, config.n_classes, config.seed)?;
    let n_train = train.labels.len();
    let cluster_class = map_clusters(&km.assignments[..n_train], &train.labels, config.n_classes, config.n_classes)?;
    let predictions = km.assignments[n_train..].iter().map(|&c| cluster_class[c]).collect();
    Ok(ClusterResult { clusters: km.assignments, cluster_class, predictions })
}

/// Fully connected Gaussian-affinity graph with the normalized graph
/// Laplacian, partitioned like the hypergraph decoder.
pub fn simple_graph_baseline<S: Scalar>(train: &LabeledFeatures<S>, test: &[Vec<S>], config: &DecodeConfig) -> Result<ClusterResult> {
    check(train, test, config)?;
    let joint: Vec<Vec<S>> = train.features.iter().chain(test).cloned().collect();
    let lap = graph_laplacian(&gaussian_affinity(&joint, config.bandwidth)?)?;
    partition_and_map(&lap, &train.labels, config.n_classes, config.seed)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    use super::*;
    use crate::hypergraph::{laplacian, Hypergraph};
    use crate::linalg::Matrix;

    fn blobs(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let f = labels.iter().map(|&c| (0..4).map(|_| if c == 0 { -6.0 } else { 6.0 } + rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        (f, labels)
    }

    #[test]
    fn planted_blobs() {
        let (f, l) = blobs(0, 60);
        let train = LabeledFeatures::new(f[..12].to_vec(), l[..12].to_vec()).unwrap();
        let cfg = DecodeConfig { latent: 4, ..DecodeConfig::default() };
        for run in [pca_kmeans_baseline::<f64>, simple_graph_baseline::<f64>] {
            let res = run(&train, &f[12..], &cfg).unwrap();
            assert_eq!(res.predictions, l[12..].to_vec());
            assert_eq!(res, run(&train, &f[12..], &cfg).unwrap());
        }
    }

    #[test]
    fn triangle_is_clique_expansion() {
        let hg = Hypergraph::new(3, vec![vec![0, 1, 2]], vec![1.0f64]).unwrap();
        let delta = laplacian(&hg).unwrap();
        let mut a = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    a[(i, j)] = 1.0;
                }
            }
        }
        let l = graph_laplacian(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((delta[(i, j)] - 2.0 / 3.0 * l[(i, j)]).abs() < 1e-15);
            }
        }
    }
}
