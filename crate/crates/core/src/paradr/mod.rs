//! Parametric neighbor-embedding projector.

mod embedding;
mod neighbors;
mod projector;
pub mod quality;

pub use embedding::{centroid, distance, BBox, Embedding, Point};
pub use neighbors::{build_graph, exact_knn, fuzzy_union, NeighborGraph};
pub use projector::{
    default_spec, train_projector, FnOracle, ProjectionOracle, Projector, ProjectorConfig, ProjectorMeta, Role,
    TrainedProjector, CURVE_A, CURVE_B, DEFAULT_K, NEGATIVE_RATE,
};
