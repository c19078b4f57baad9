//! Sequence containers, their binary file formats, feature resampling, crop
//! augmentation, and the synthetic speech/motion dataset.

mod audio;
pub(crate) mod binio;
mod crop;
mod manifest;
mod mesh;
mod motion;
pub mod synth;

pub use audio::{read_afea, resample_features, write_afea, AudioFeatureSequence};
pub use crop::{random_crop, random_crop_start};
pub use manifest::{base_dir, Clip, DatasetManifest, ManifestEntry, Split};
pub use mesh::{lip_vertex_count, TemplateMesh};
pub use motion::{read_mseq, write_mseq, MotionSequence};
