//! Training-free place embeddings from point-of-interest graphs.
//!
//! The pipeline fuses two POI catalogs by a distance-bounded spatial join,
//! links POIs into a symmetric k-NN graph, smooths one-hot category features
//! over that graph (`F = Σ_k α_k Â^k X`), and condenses each class of a chosen
//! granularity (zip, city, state, ...) into cluster centroids. Each centroid
//! is the embedding of a *place*: a non-empty set of POIs.

pub mod condense;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geo;
pub mod graph;
pub mod ingest;
pub mod matrix;
pub mod pipeline;
pub mod propagation;
pub mod synth;

pub use condense::{
    allocate_clusters, condense, kmeans, kmedoids, Algorithm, Clustering, CondensePlan, CondensedGraph, PlaceEmbedding,
};
pub use error::{Error, Result};
pub use evaluation::{run_sweep, total_wcss, wcss, SweepConfig, SweepResult};
pub use fusion::{merge_attributes, name_similarity, spatial_join, FusedRecord, JoinConfig};
pub use geo::{haversine_m, GeoPoint, SpatialIndex};
pub use graph::{build_knn_graph, normalize, KnnGraph, NormalizedAdjacency};
pub use ingest::{
    build_vocabulary, concat_aux_features, encode_features, labeling_for, load_pois, CategoryVocabulary,
    GranularityLabeling, PoiFormat, PoiRecord,
};
pub use matrix::FeatureMatrix;
pub use pipeline::PipelineConfig;
pub use propagation::{fuse, propagate, propagate_hops, HopWeights};
