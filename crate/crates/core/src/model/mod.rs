//! The network: speech adaptor, causal backbone, group model and heads.

mod backward;
mod checkpoint;
mod config;
mod forward;
mod inference;
pub mod layers;
mod params;

pub(crate) use backward::backward;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Manifest, TensorEntry};
pub use config::ModelConfig;
pub(crate) use forward::forward_with_cache;
pub use forward::{
    assemble_input, backbone_forward, embed_groups, full_forward, group_model_batch, group_model_forward, ForwardOutput,
};
pub use inference::{InputRow, Session};
pub use params::{decays, Block, Linear, Norm, Parameters};

#[cfg(test)]
mod tests;
