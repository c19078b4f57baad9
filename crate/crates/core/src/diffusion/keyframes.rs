use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_mseq, MotionSequence};
use crate::error::{dim_err, Error, Result};

/// Frames pinned to given displacement rows during sampling.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyframeConstraint {
    indices: Vec<usize>,
    /// `indices.len() x dim`, row-major.
    values: Vec<f64>,
    dim: usize,
}

impl KeyframeConstraint {
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("keyframe indices must be strictly increasing".into()));
        }
        if values.len() != indices.len() * dim {
            return Err(dim_err!(
                "{} keyframes need {} values, got {}",
                indices.len(),
                indices.len() * dim,
                values.len()
            ));
        }
        Ok(Self {
            indices,
            values,
            dim,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Pin the given frames of `source`.
    pub fn from_frames(source: &MotionSequence, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= source.n_frames()) {
            return Err(Error::Contract(format!(
                "keyframe {bad} outside a {}-frame sequence",
                source.n_frames()
            )));
        }
        let values = indices.iter().flat_map(|&i| source.frame(i).to_vec()).collect();
        Self::new(indices, values, source.dim())
    }

    /// Keep `round(fraction * N)` frames split between the start and the end
    /// of `source` (the start gets the odd one).
    pub fn boundary(source: &MotionSequence, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("fraction {fraction} outside [0, 1]")));
        }
        let n = source.n_frames();
        let keep = ((fraction * n as f64).round() as usize).min(n);
        let head = keep.div_ceil(2);
        let tail = keep / 2;
        let indices = (0..head).chain(n - tail..n).collect();
        Self::from_frames(source, indices)
    }

    /// Randomly placed keyframes at `per_second` on average.
    pub fn random_rate(source: &MotionSequence, per_second: f64, rng: &mut impl Rng) -> Result<Self> {
        let n = source.n_frames();
        let count = ((per_second * n as f64 / source.fps()).round() as usize).min(n);
        let mut indices = sample_indices(rng, n, count).into_vec();
        indices.sort_unstable();
        Self::from_frames(source, indices)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn validate_for(&self, n_frames: usize, dim: usize) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        if self.dim != dim {
            return Err(dim_err!("keyframes have {} values per frame, expected {dim}", self.dim));
        }
        if let Some(&last) = self.indices.last() {
            if last >= n_frames {
                return Err(Error::Contract(format!(
                    "keyframe {last} outside a {n_frames}-frame sequence"
                )));
            }
        }
        Ok(())
    }

    /// Overwrite the pinned rows of `m`.
    pub fn apply(&self, m: &mut MotionSequence) {
        for (k, &i) in self.indices.iter().enumerate() {
            m.frame_mut(i).copy_from_slice(self.row(k));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeRef {
    pub index: usize,
    /// Motion file holding the values; relative paths resolve against the
    /// keyframe file's directory.
    pub values_file: String,
    pub row: usize,
}

/// On-disk keyframe specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeFile {
    pub n_frames: usize,
    pub keyframes: Vec<KeyframeRef>,
}

impl KeyframeFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("keyframes serialize");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Resolve every reference into a constraint. `base` is the directory
    /// relative `values_file` paths are joined to.
    pub fn resolve(&self, base: &Path) -> Result<KeyframeConstraint> {
        let mut refs = self.keyframes.clone();
        refs.sort_by_key(|r| r.index);
        let mut cache: BTreeMap<&str, MotionSequence> = BTreeMap::new();
        for r in &self.keyframes {
            if !cache.contains_key(r.values_file.as_str()) {
                cache.insert(&r.values_file, read_mseq(&base.join(&r.values_file))?);
            }
        }
        let dim = match cache.values().next() {
            Some(m) => m.dim(),
            None => return Ok(KeyframeConstraint::empty()),
        };
        let mut indices = Vec::with_capacity(refs.len());
        let mut values = Vec::with_capacity(refs.len() * dim);
        for r in &refs {
            if r.index >= self.n_frames {
                return Err(Error::Contract(format!(
                    "keyframe {} outside a {}-frame sequence",
                    r.index, self.n_frames
                )));
            }
            let m = &cache[r.values_file.as_str()];
            if m.dim() != dim {
                return Err(dim_err!("{} has {} values per frame, expected {dim}", r.values_file, m.dim()));
            }
            if r.row >= m.n_frames() {
                return Err(Error::Contract(format!(
                    "row {} outside {} ({} frames)",
                    r.row,
                    r.values_file,
                    m.n_frames()
                )));
            }
            indices.push(r.index);
            values.extend_from_slice(m.frame(r.row));
        }
        KeyframeConstraint::new(indices, values, dim)
    }
}
