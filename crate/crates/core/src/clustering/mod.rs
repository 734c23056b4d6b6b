//! k-means (k = 2) and the hierarchical cluster tree built from it.

mod kmeans;
mod tree;

pub use kmeans::{kmeans_fit, partition_inertia, KMeansConfig, KMeansModel};
pub use tree::{
    extract_features, hierarchical_fit, hierarchical_fit_with, hierarchical_predict, ClusterTree, Split,
    TreeConfig,
};
