//! Noise schedule, forward noising, guided reverse sampling and keyframe
//! inpainting.

mod keyframes;
mod sampler;
mod schedule;

pub use keyframes::{KeyframeConstraint, KeyframeFile, KeyframeRef};
pub use sampler::{guide, reverse_step, ReverseProcess, Sampler, SamplerConfig};
pub use schedule::{q_sample, DiffusionSchedule, ScheduleKind};
