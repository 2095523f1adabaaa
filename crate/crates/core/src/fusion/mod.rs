//! The two-stage fusion network: a patch-level VAE (stage 1) and the attention
//! fusion model that turns latents, genes and clinical variables into a risk score
//! (stage 2).

pub mod attention;
mod checkpoint;
mod config;
pub mod encoder;
pub mod head;
mod model;
mod params;
pub mod vae;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CheckpointKind,
};
pub use config::{FusionConfig, Modalities};
pub use model::{
    encode_patches, forward, forward_flops, predict, predict_traced, prepare_input, risk_graph, ForwardTrace,
    PatientInput, PatientVars, RiskOutput,
};
pub use params::{glorot, Bound, ModelParams, ParamStore, VaeParams};
