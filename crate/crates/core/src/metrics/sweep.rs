use std::path::Path;

use rayon::prelude::*;

use super::{div_e, lip_sync};
use crate::data::{Clip, MotionSequence, TemplateMesh};
use crate::diffusion::{Sampler, SamplerConfig};
use crate::error::{Error, Result};
use crate::net::{AudioCondition, Condition, DenoiserParams};
use crate::rng;

/// `0.0, 0.1, ..., 1.0`, built from integers so every value is the nearest
/// double to its decimal.
pub fn guidance_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub scales: Vec<f64>,
    pub samples_per_sequence: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scales: guidance_grid(),
            samples_per_sequence: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub s: f64,
    pub lip_sync: f64,
    pub div_e: f64,
}

/// For every guidance scale, draw `K` samples per clip and report mean
/// Lip-Sync (over clips and samples) and mean Div^E (over clips). Sample `k`
/// of clip `c` uses the same seed at every scale.
pub fn guidance_sweep(
    params: &DenoiserParams,
    clips: &[Clip],
    mesh: &TemplateMesh,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    if clips.is_empty() {
        return Err(Error::Config("guidance sweep needs at least one clip".into()));
    }
    let k = cfg.samples_per_sequence;
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 samples per sequence, got {k}")));
    }
    let sampler = Sampler::new(params)?;
    let jobs: Vec<(usize, usize)> = (0..clips.len())
        .flat_map(|c| (0..k).map(move |j| (c, j)))
        .collect();
    let mut rows = Vec::with_capacity(cfg.scales.len());
    for &s in &cfg.scales {
        let samples: Vec<MotionSequence> = jobs
            .par_iter()
            .map(|&(c, j)| {
                let clip = &clips[c];
                let cond = Condition::new(AudioCondition::Features(clip.features.clone()), Some(clip.identity));
                let scfg = SamplerConfig {
                    guidance: s,
                    seed: rng::derive_seed(cfg.seed, &[c as u64, j as u64]),
                    ..SamplerConfig::default()
                };
                sampler.sample(&cond, clip.motion.n_frames(), &scfg)
            })
            .collect::<Result<_>>()?;
        let mut lip = 0.0;
        let mut div = 0.0;
        for (c, group) in samples.chunks(k).enumerate() {
            for p in group {
                lip += lip_sync(p, &clips[c].motion, mesh)?;
            }
            div += div_e(group)?;
        }
        rows.push(SweepRow {
            s,
            lip_sync: lip / samples.len() as f64,
            div_e: div / clips.len() as f64,
        });
        log::info!("guidance {s:.1}: lip_sync {:.5} div_e {:.5}", rows.last().unwrap().lip_sync, rows.last().unwrap().div_e);
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["s", "lip_sync", "div_e"]).map_err(io)?;
    for r in rows {
        w.write_record([format!("{:.1}", r.s), r.lip_sync.to_string(), r.div_e.to_string()])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    crate::data::binio::write_file(path, &bytes)
}
