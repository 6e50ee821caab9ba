//! Hand-crafted comparison features and the two simple decoders.

mod baselines;
mod extract;
mod pca;
mod table;

pub use baselines::{pca_kmeans_baseline, simple_graph_baseline};
pub use extract::{
    band_power, bands_below_nyquist, differential_entropy, extract_all, time_domain_features, Band, FeatureFamily, DE_EDGE_ORDER,
    DE_VARIANCE_FLOOR, STANDARD_BANDS, TIME_STATS_PER_CHANNEL,
};
pub use pca::{map_to_dim, Pca};
pub use table::FeatureTable;
