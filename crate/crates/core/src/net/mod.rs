//! The conditional 1D-convolutional denoiser that maps a noised displacement
//! sequence, a diffusion step and a speech/style condition to a clean
//! sequence estimate.

pub(crate) mod checkpoint;
mod config;
mod denoiser;
mod embedding;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::NetworkConfig;
pub use denoiser::{
    condition_block, forward_graph, predict, project_audio, AudioCondition, Condition, ParamVars,
};
pub use embedding::sinusoidal_embedding;
pub use params::DenoiserParams;
