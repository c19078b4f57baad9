//! Audio-conditioned denoising diffusion over 3D facial vertex-displacement
//! sequences: a small 1D-convolutional denoiser that predicts clean motion,
//! classifier-free guided sampling, keyframe inpainting, person-specific
//! fine-tuning, and the lip-sync / diversity evaluation metrics.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod tensor;
pub mod train;

pub use data::{AudioFeatureSequence, DatasetManifest, MotionSequence, TemplateMesh};
pub use diffusion::{DiffusionSchedule, KeyframeConstraint, SamplerConfig, ScheduleKind};
pub use error::{Error, ErrorKind, Result};
pub use net::{AudioCondition, Condition, DenoiserParams, NetworkConfig};
pub use tensor::{Graph, Tensor, Var};
