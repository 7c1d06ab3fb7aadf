//! A small encoder-decoder transformer over character tokens.

mod checkpoint;
mod config;
mod forward;
mod params;
mod registry;

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes};
pub use config::ModelConfig;
pub use forward::{
    argmax, forward, forward_with, greedy_decode, greedy_decode_with, positional_encoding, registry_of,
    target_columns, ForwardOutput, ForwardTrace, Session,
};
pub use params::{
    head_offsets, Attention, DecoderLayer, EncoderLayer, FeedForward, ModelParams, Parameters, Weight,
};
pub use registry::{
    probe_name, prunable_matrix_count, prunable_registry, LayerGroup, PrunableLayerId, Stack, TargetKind,
};
