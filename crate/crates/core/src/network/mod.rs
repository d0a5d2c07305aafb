//! Pillar and position encoders, attention layers and final projection.

mod config;
mod features;
mod model;
mod params;

pub use config::{AttentionScale, HyperParams, ModelConfig, ModelOptions};
pub use features::{build_feature_stack, feature_row, PillarFeatureStack, FEATURES_PER_POINT};
pub use model::{
    attention, encode_pillars, encode_positions, final_projection, gnn_layer, init_nodes, ForwardOutput, NormUsage,
    PairInput, PairOutput,
};
pub use params::ModelParameters;
