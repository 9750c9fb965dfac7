//! Prior coordinate generation: attention between consecutive scans and
//! propagation of the previous scan's world coordinates onto the current one.

pub mod attention;
pub mod correspondence;
pub mod features;

pub use attention::{
    contextualize, cross_attention, cross_attention_with_temperature, global_attention, self_attention,
    self_attention_with_temperature, AttentionMatrix, RowSemantics,
};
pub use correspondence::{
    inverse_distance_weights, pcg_losses, propagate_coordinates, soft_correspondences, PropagationNeighbors,
    PropagationParams, SoftCorrespondences, DEFAULT_GAMMA, ROW_EPSILON,
};
pub use features::{embed_features, extract_features, EmbeddingConfig, FeatureMatrix, GEOMETRIC_DIM};
