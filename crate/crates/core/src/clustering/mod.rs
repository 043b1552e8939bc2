//! Anchor-constrained KMeans, eigen-sample selection and BCubed precision.

pub mod bcubed;
pub mod eigen;
pub mod kmeans;

pub use bcubed::bcubed_precision;
pub use eigen::{select_eigen_samples, EigenPick, EigenSelection, SkipReason, SkippedCluster};
pub use kmeans::{
    ackmeans, ackmeans_from, inertia, initial_centers, kmeans, kmeans_best_of, kmeans_pp_init,
    AnchorSet,
    ClusterState, EmptyPolicy, InitMethod, KMeansConfig,
};
