//! Synthetic stand-in for a speech/3D-scan corpus with a known generating
//! process.
//!
//! Every identity `i` owns a per-coordinate gain `g_i`. A sequence's features
//! `a_n` are sums of a few low-frequency sinusoids per channel, and its
//! displacements are
//!
//! ```text
//! x_n = g_i ⊙ (W · (a_{n-1} + a_n + a_{n+1}) / 3) + noise
//! ```
//!
//! with `W` a fixed seeded `(D*3) x F` map whose rows for lip vertices carry
//! four times the weight of the rest. The moving average replicates the edge
//! frames. Features are stored at `feature_rate` (the audio encoder's
//! native rate) and sampled from the same continuous signal the motion uses.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    lip_vertex_count, write_afea, write_mseq, AudioFeatureSequence, DatasetManifest, ManifestEntry,
    MotionSequence, Split,
};
use crate::error::{Error, Result};
use crate::rng;

const SINUSOIDS_PER_CHANNEL: usize = 3;
const NON_LIP_WEIGHT: f64 = 0.25;
const GAIN_SPREAD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub seqs_per_identity: usize,
    pub n_vertices: usize,
    pub n_features: usize,
    pub fps: f64,
    pub feature_rate: f64,
    pub min_frames: usize,
    pub max_frames: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Identity counts for train/val/test. Required unless it can be derived
    /// from the 8/2/2 proportions with every split non-empty.
    pub split: Option<[usize; 3]>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_identities: 12,
            seqs_per_identity: 40,
            n_vertices: 40,
            n_features: 8,
            fps: 30.0,
            feature_rate: 50.0,
            min_frames: 90,
            max_frames: 150,
            noise_std: 1e-3,
            seed: 0,
            split: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_vertices < 8 {
            return Err(Error::Config(format!("need D >= 8, got {}", self.n_vertices)));
        }
        if self.n_features < 4 {
            return Err(Error::Config(format!("need F >= 4, got {}", self.n_features)));
        }
        if self.n_identities == 0 || self.seqs_per_identity == 0 {
            return Err(Error::Config("need at least one identity and sequence".into()));
        }
        if self.min_frames < 2 || self.min_frames > self.max_frames {
            return Err(Error::Config(format!(
                "bad frame range [{}, {}]",
                self.min_frames, self.max_frames
            )));
        }
        if !(self.fps > 0.0 && self.feature_rate > 0.0) {
            return Err(Error::Config("rates must be positive".into()));
        }
        self.split_counts().map(|_| ())
    }

    /// Train/val/test identity counts.
    pub fn split_counts(&self) -> Result<[usize; 3]> {
        let n = self.n_identities;
        if let Some(s) = self.split {
            if s.iter().sum::<usize>() != n {
                return Err(Error::Config(format!(
                    "split {s:?} does not add up to {n} identities"
                )));
            }
            return Ok(s);
        }
        let val = (n as f64 * 2.0 / 12.0).round() as usize;
        let test = val;
        let train = n.saturating_sub(val + test);
        if train == 0 || val == 0 {
            return Err(Error::Config(format!(
                "cannot derive a train/val/test split for {n} identities; pass one explicitly"
            )));
        }
        Ok([train, val, test])
    }
}

/// The generating process, retained so tests can compute expected outputs.
#[derive(Debug, Clone)]
pub struct SynthOracle {
    pub n_vertices: usize,
    pub n_features: usize,
    /// Row-major `(D*3) x F`.
    pub mixing: Vec<f64>,
    /// One `D*3` gain vector per identity.
    pub gains: Vec<Vec<f64>>,
}

impl SynthOracle {
    pub fn new(cfg: &SynthConfig) -> Self {
        let (d3, f) = (cfg.n_vertices * 3, cfg.n_features);
        let lips = lip_vertex_count(cfg.n_vertices);
        let mut g = rng::stream(cfg.seed, &[0xA11]);
        let scale = 1.0 / (f as f64).sqrt();
        let mut mixing = rng::normal_vec(&mut g, d3 * f);
        for (row, w) in mixing.chunks_exact_mut(f).enumerate() {
            let weight = if row / 3 < lips { 1.0 } else { NON_LIP_WEIGHT };
            for v in w {
                *v *= scale * weight;
            }
        }
        let gains = (0..cfg.n_identities)
            .map(|i| {
                let mut g = rng::stream(cfg.seed, &[0x6A1, i as u64]);
                (0..d3)
                    .map(|_| 1.0 + GAIN_SPREAD * g.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        Self {
            n_vertices: cfg.n_vertices,
            n_features: f,
            mixing,
            gains,
        }
    }

    /// Noise-free displacements for features already on the motion grid
    /// (`N x F` row-major). Returns `N x (D*3)`.
    pub fn displacements(&self, identity: usize, features: &[f64]) -> Vec<f64> {
        let f = self.n_features;
        let d3 = self.n_vertices * 3;
        let n = features.len() / f;
        let gain = &self.gains[identity];
        let mut out = vec![0.0; n * d3];
        for t in 0..n {
            let prev = &features[t.saturating_sub(1) * f..][..f];
            let cur = &features[t * f..][..f];
            let next = &features[(t + 1).min(n - 1) * f..][..f];
            let avg: Vec<f64> = (0..f).map(|c| (prev[c] + cur[c] + next[c]) / 3.0).collect();
            for (r, o) in out[t * d3..(t + 1) * d3].iter_mut().enumerate() {
                let w = &self.mixing[r * f..(r + 1) * f];
                let mixed: f64 = w.iter().zip(&avg).map(|(a, b)| a * b).sum();
                *o = gain[r] * mixed;
            }
        }
        out
    }
}

/// Low-frequency multi-channel signal, evaluated at arbitrary times.
struct FeatureSignal {
    /// Per channel: (amplitude, angular frequency, phase).
    terms: Vec<[(f64, f64, f64); SINUSOIDS_PER_CHANNEL]>,
}

impl FeatureSignal {
    fn random(channels: usize, g: &mut impl Rng) -> Self {
        let terms = (0..channels)
            .map(|_| {
                std::array::from_fn(|_| {
                    (
                        g.random_range(0.3..1.0),
                        2.0 * PI * g.random_range(0.5..4.0),
                        g.random_range(0.0..2.0 * PI),
                    )
                })
            })
            .collect();
        Self { terms }
    }

    fn sample(&self, frames: usize, rate: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(frames * self.terms.len());
        for m in 0..frames {
            let tau = m as f64 / rate;
            out.extend(
                self.terms
                    .iter()
                    .map(|ch| ch.iter().map(|&(a, w, p)| a * (w * tau + p).sin()).sum::<f64>()),
            );
        }
        out
    }
}

pub struct GeneratedSequence {
    pub identity: u32,
    pub motion: MotionSequence,
    /// At `feature_rate`.
    pub features: AudioFeatureSequence,
}

/// Generate every sequence in memory, in manifest order.
pub fn generate_sequences(cfg: &SynthConfig, oracle: &SynthOracle) -> Result<Vec<GeneratedSequence>> {
    cfg.validate()?;
    let d3 = cfg.n_vertices * 3;
    let mut out = Vec::with_capacity(cfg.n_identities * cfg.seqs_per_identity);
    for id in 0..cfg.n_identities {
        for s in 0..cfg.seqs_per_identity {
            let mut g = rng::stream(cfg.seed, &[0x5E0, id as u64, s as u64]);
            let n = g.random_range(cfg.min_frames..=cfg.max_frames);
            let signal = FeatureSignal::random(cfg.n_features, &mut g);
            let at_motion_rate = signal.sample(n, cfg.fps);
            let mut x = oracle.displacements(id, &at_motion_rate);
            for v in &mut x {
                *v += cfg.noise_std * g.sample::<f64, _>(rand_distr::StandardNormal);
            }
            debug_assert_eq!(x.len(), n * d3);
            let m = (n as f64 * cfg.feature_rate / cfg.fps).round() as usize;
            let features = AudioFeatureSequence::new(
                cfg.n_features,
                cfg.feature_rate,
                signal.sample(m, cfg.feature_rate),
            )?;
            out.push(GeneratedSequence {
                identity: id as u32,
                motion: MotionSequence::new(cfg.n_vertices, cfg.fps, x)?,
                features,
            });
        }
    }
    Ok(out)
}

/// Write the dataset under `out_dir` and return its manifest (also written
/// to `out_dir/manifest.json`).
pub fn synth_generate(cfg: &SynthConfig, out_dir: &Path) -> Result<(DatasetManifest, SynthOracle)> {
    cfg.validate()?;
    let [train, val, _] = cfg.split_counts()?;
    let oracle = SynthOracle::new(cfg);
    let mut entries = Vec::new();
    for seq in generate_sequences(cfg, &oracle)? {
        let id = seq.identity as usize;
        let split = if id < train {
            Split::Train
        } else if id < train + val {
            Split::Val
        } else {
            Split::Test
        };
        let k = entries.iter().filter(|e: &&ManifestEntry| e.identity == seq.identity).count();
        let stem = format!("id{:02}/seq{:03}", seq.identity, k);
        write_mseq(&out_dir.join(format!("{stem}.mseq")), &seq.motion)?;
        write_afea(&out_dir.join(format!("{stem}.afea")), &seq.features)?;
        entries.push(ManifestEntry {
            identity: seq.identity,
            split,
            motion: format!("{stem}.mseq"),
            features: format!("{stem}.afea"),
        });
    }
    let manifest = DatasetManifest {
        fps: cfg.fps,
        n_vertices: cfg.n_vertices,
        n_features: cfg.n_features,
        feature_rate: cfg.feature_rate,
        lip_indices: (0..lip_vertex_count(cfg.n_vertices)).collect(),
        entries,
    };
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok((manifest, oracle))
}
