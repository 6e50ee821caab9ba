//! Transductive decoding: a kNN hypergraph over training and test features,
//! the bottom eigenspace of its normalized Laplacian, k-means on the
//! embedding, and a majority-vote map from clusters to classes.

mod decode;
mod graph;
mod kmeans;
mod spectral;

pub use decode::{decode_fold, map_clusters, partition_and_map, subsample_training, ClusterResult, DecodeConfig, LabeledFeatures};
pub use graph::{
    gaussian_affinity, graph_laplacian, knn_hyperedges, knn_hyperedges_with, laplacian, mean_pairwise_distance,
    pairwise_sq_distances, Bandwidth, Hypergraph,
};
pub use kmeans::{kmeans, KMeans, RESTARTS};
pub use spectral::{spectral_embed, Embedding, SYMMETRY_TOLERANCE};
