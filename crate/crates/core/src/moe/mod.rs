//! A small mixture-of-experts model that routes tokens by combining a gate
//! with a conflict classifier, weighted by how much a patch's visual and
//! OCR representations disagree.

mod config;
mod features;
mod graph;
mod ops;
mod params;
mod trace;

pub use config::{ModelConfig, N_EXPERTS};
pub use features::{conflict_direction, synth_features, synth_input, ConflictSpec, ModelInput};
pub(crate) use features::{draw_features, draw_query_tokens};
pub use graph::{build_graph, forward, ForwardOutput, Graph};
pub use ops::{
    backbone_forward, build_three_token, classifier_weight, condition_patch, consistency, moe_layer,
    relevance_scores, route_token, route_top1, routing_logits, topk_select, PatchTriplet,
};
pub use params::{is_bias, is_frozen, Affine, Checkpoint, Conditioner, Expert, MoeParams, Weights};
pub use trace::{RoutingTrace, TokenRoute, TokenSlot};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum MoeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MoeError> = std::result::Result<T, E>;
