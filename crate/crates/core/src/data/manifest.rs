use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_afea, read_mseq, resample_features, AudioFeatureSequence, MotionSequence, TemplateMesh};
use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub identity: u32,
    pub split: Split,
    /// Paths are relative to the manifest's directory.
    pub motion: String,
    pub features: String,
}

/// Index of a dataset on disk: which motion/feature file pairs belong to
/// which identity and split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub fps: f64,
    pub n_vertices: usize,
    pub n_features: usize,
    pub feature_rate: f64,
    pub lip_indices: Vec<usize>,
    pub entries: Vec<ManifestEntry>,
}

/// One training/evaluation pair with features already on the motion frame grid.
#[derive(Debug, Clone)]
pub struct Clip {
    pub identity: u32,
    pub motion: MotionSequence,
    pub features: AudioFeatureSequence,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        super::binio::write_file(path, text.as_bytes())
    }

    pub fn mesh(&self) -> Result<TemplateMesh> {
        TemplateMesh::with_lips(self.n_vertices, self.lip_indices.clone())
    }

    /// Sorted identities of one split.
    pub fn identities(&self, split: Split) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.identity)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn entries_of(&self, identity: u32) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.identity == identity)
    }

    pub fn load_entry(&self, base: &Path, entry: &ManifestEntry) -> Result<Clip> {
        let motion = read_mseq(&base.join(&entry.motion))?;
        if motion.n_vertices() != self.n_vertices {
            return Err(dim_err!(
                "{}: {} vertices, manifest says {}",
                entry.motion,
                motion.n_vertices(),
                self.n_vertices
            ));
        }
        let raw = read_afea(&base.join(&entry.features))?;
        let features = resample_features(&raw, motion.fps())?;
        if features.n_frames() != motion.n_frames() {
            return Err(dim_err!(
                "{} resamples to {} frames but {} has {}",
                entry.features,
                features.n_frames(),
                entry.motion,
                motion.n_frames()
            ));
        }
        Ok(Clip {
            identity: entry.identity,
            motion,
            features,
        })
    }

    pub fn load_split(&self, base: &Path, split: Split) -> Result<Vec<Clip>> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| self.load_entry(base, e))
            .collect()
    }

    pub fn load_identity(&self, base: &Path, identity: u32) -> Result<Vec<Clip>> {
        self.entries_of(identity)
            .map(|e| self.load_entry(base, e))
            .collect()
    }
}

/// Directory that manifest-relative paths resolve against.
pub fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}
