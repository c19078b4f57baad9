use std::borrow::Cow;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;

use super::{adam_step, loss_graph, AdamState, TrainConfig};
use crate::data::{base_dir, random_crop, AudioFeatureSequence, Clip, DatasetManifest, MotionSequence, Split, TemplateMesh};
use crate::diffusion::{q_sample, DiffusionSchedule, Sampler, SamplerConfig};
use crate::error::{Error, Result};
use crate::metrics::lip_sync;
use crate::net::{forward_graph, read_checkpoint, write_checkpoint, AudioCondition, Condition, DenoiserParams, ParamVars};
use crate::rng;
use crate::tensor::{Graph, Tensor};

/// One cropped training example.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub identity: u32,
    pub motion: MotionSequence,
    pub features: AudioFeatureSequence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub l_simple: f64,
    pub l_vel: f64,
    pub l_total: f64,
    /// Items whose speech condition was zeroed.
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: u64,
    pub l_simple: f64,
    pub l_vel: f64,
    pub l_total: f64,
}

/// Crops for iteration `iteration`: item `b` picks a clip uniformly and a
/// uniform window of `crop_len` frames.
pub fn draw_batch(clips: &[Clip], cfg: &TrainConfig, iteration: u64) -> Result<Vec<TrainItem>> {
    if clips.is_empty() {
        return Err(Error::Config("no training clips".into()));
    }
    (0..cfg.batch_size as u64)
        .map(|b| {
            let mut g = rng::stream(cfg.seed, &[iteration, b, 0]);
            let clip = &clips[g.random_range(0..clips.len())];
            let (motion, features) = random_crop(&clip.motion, &clip.features, cfg.crop_len, &mut g)?;
            Ok(TrainItem {
                identity: clip.identity,
                motion,
                features,
            })
        })
        .collect()
}

struct ItemResult {
    grads: Vec<Tensor>,
    l_simple: f64,
    l_vel: f64,
    l_total: f64,
    dropped: bool,
}

fn item_gradients(
    params: &DenoiserParams,
    item: &TrainItem,
    cfg: &TrainConfig,
    schedule: &DiffusionSchedule,
    iteration: u64,
    b: u64,
) -> Result<ItemResult> {
    let mut g = rng::stream(cfg.seed, &[iteration, b, 1]);
    let t = g.random_range(1..=schedule.steps());
    let dropped = g.random_bool(cfg.cond_dropout_p);
    let eps = rng::normal_vec(&mut g, item.motion.values().len());
    let x_t = q_sample(schedule, &item.motion, t, &eps)?;
    let audio = if dropped {
        AudioCondition::Zero
    } else {
        AudioCondition::Features(item.features.clone())
    };
    let cond = Condition::new(audio, Some(item.identity));

    let mut graph = Graph::new();
    let pv = ParamVars::register(&mut graph, params, true);
    let pred = forward_graph(&mut graph, params, &pv, &x_t, t, &cond)?;
    let loss = loss_graph(&mut graph, pred, &item.motion, cfg.lambda_vel)?;
    let mut grads = graph.backward(loss.total)?;
    let grads = pv
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, (_, p))| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    let scalar = |v| graph.value(v).data()[0];
    Ok(ItemResult {
        grads,
        l_simple: scalar(loss.simple),
        l_vel: loss.vel.map_or(0.0, scalar),
        l_total: scalar(loss.total),
        dropped,
    })
}

/// Noise each item at a uniform step, optionally zero its speech, average
/// the objective over the batch and take one Adam step. Items are processed
/// in parallel and reduced in batch order.
pub fn train_step(
    params: &mut DenoiserParams,
    state: &mut AdamState,
    batch: &[TrainItem],
    cfg: &TrainConfig,
    schedule: &DiffusionSchedule,
    iteration: u64,
) -> Result<StepStats> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let shared: &DenoiserParams = params;
    let items: Vec<ItemResult> = batch
        .par_iter()
        .enumerate()
        .map(|(b, item)| item_gradients(shared, item, cfg, schedule, iteration, b as u64))
        .collect::<Result<_>>()?;
    let inv = 1.0 / batch.len() as f64;
    let mut grads: Vec<Tensor> = shared.tensors().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
    let mut stats = StepStats {
        l_simple: 0.0,
        l_vel: 0.0,
        l_total: 0.0,
        dropped: 0,
    };
    for item in &items {
        for (acc, g) in grads.iter_mut().zip(&item.grads) {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v * inv;
            }
        }
        stats.l_simple += item.l_simple * inv;
        stats.l_vel += item.l_vel * inv;
        stats.l_total += item.l_total * inv;
        stats.dropped += usize::from(item.dropped);
    }
    adam_step(params, &grads, state, cfg.lr)?;
    Ok(stats)
}

/// Result of a training or fine-tuning run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: DenoiserParams,
    pub state: AdamState,
    pub log: Vec<LossRecord>,
}

/// Continue from `state.step()` up to `cfg.iterations`, calling `on_step`
/// after every update.
/// Drop clips shorter than the crop window, warning once per clip.
fn long_enough(clips: &[Clip], crop_len: usize) -> Result<Cow<'_, [Clip]>> {
    let short = clips.iter().filter(|c| c.motion.n_frames() < crop_len).count();
    let kept: Cow<'_, [Clip]> = if short == 0 {
        Cow::Borrowed(clips)
    } else {
        for c in clips.iter().filter(|c| c.motion.n_frames() < crop_len) {
            log::warn!(
                "skipping a {}-frame clip of identity {}: shorter than the {crop_len}-frame crop",
                c.motion.n_frames(),
                c.identity
            );
        }
        Cow::Owned(clips.iter().filter(|c| c.motion.n_frames() >= crop_len).cloned().collect())
    };
    if kept.is_empty() {
        return Err(Error::Config(format!("no training clip has at least {crop_len} frames")));
    }
    Ok(kept)
}

pub fn train_iterations(
    mut params: DenoiserParams,
    mut state: AdamState,
    clips: &[Clip],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&LossRecord, &DenoiserParams, &AdamState) -> Result<()>,
) -> Result<TrainRun> {
    cfg.validate()?;
    let clips = long_enough(clips, cfg.crop_len)?;
    let schedule = DiffusionSchedule::new(params.config().diffusion_steps, params.config().schedule)?;
    let mut log = Vec::new();
    while state.step() < cfg.iterations {
        let iteration = state.step();
        let batch = draw_batch(&clips, cfg, iteration)?;
        let s = train_step(&mut params, &mut state, &batch, cfg, &schedule, iteration)?;
        let rec = LossRecord {
            iteration: state.step(),
            l_simple: s.l_simple,
            l_vel: s.l_vel,
            l_total: s.l_total,
        };
        if rec.iteration % 100 == 0 {
            log::info!("iteration {} l_simple {:.6} l_total {:.6}", rec.iteration, rec.l_simple, rec.l_total);
        }
        on_step(&rec, &params, &state)?;
        log.push(rec);
    }
    Ok(TrainRun { params, state, log })
}

pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("ckpt_{iteration:06}.3dfp"))
}

/// Optimizer state stored next to a checkpoint.
pub fn state_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("3dfa")
}

pub fn write_loss_csv(path: &Path, log: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["iteration", "l_simple", "l_vel", "l_total"]).map_err(io)?;
    for r in log {
        w.write_record([
            r.iteration.to_string(),
            r.l_simple.to_string(),
            r.l_vel.to_string(),
            r.l_total.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    crate::data::binio::write_file(path, &bytes)
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let bad = |line: u64, msg: String| Error::Format {
        path: path.to_path_buf(),
        offset: line,
        msg,
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(bad(line, format!("expected 4 columns, got {}", rec.len())));
        }
        let f = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(line, e.to_string()));
        out.push(LossRecord {
            iteration: rec[0].parse().map_err(|e: std::num::ParseIntError| bad(line, e.to_string()))?,
            l_simple: f(1)?,
            l_vel: f(2)?,
            l_total: f(3)?,
        });
    }
    Ok(out)
}

/// Load the training split of a manifest and check it against the network.
pub fn load_training_clips(manifest_path: &Path, cfg: &TrainConfig, split: Split) -> Result<(DatasetManifest, Vec<Clip>)> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let net = &cfg.network;
    if manifest.n_vertices != net.num_vertices || manifest.n_features != net.audio_channels_in || manifest.fps != net.fps {
        return Err(Error::Config(format!(
            "dataset has {} vertices, {} features at {} fps; network expects {}, {} at {}",
            manifest.n_vertices, manifest.n_features, manifest.fps, net.num_vertices, net.audio_channels_in, net.fps
        )));
    }
    let clips = manifest.load_split(&base_dir(manifest_path), split)?;
    if clips.is_empty() {
        return Err(Error::Config(format!("the {split:?} split is empty")));
    }
    Ok((manifest, clips))
}

/// Train on the manifest's training split, writing `ckpt_NNNNNN.3dfp`
/// (with its `.3dfa` optimizer state) and `loss.csv` into `out_dir` at the
/// start, every `checkpoint_every` iterations and at the end. With `resume`
/// set, continues from that checkpoint and keeps the earlier log rows.
pub fn train_loop(manifest_path: &Path, cfg: &TrainConfig, out_dir: &Path, resume: Option<&Path>) -> Result<TrainRun> {
    cfg.validate()?;
    let (manifest, clips) = load_training_clips(manifest_path, cfg, Split::Train)?;
    let loss_path = out_dir.join("loss.csv");
    let (params, state, mut history) = match resume {
        Some(ckpt) => {
            let params = read_checkpoint(ckpt)?;
            if params.config() != &cfg.network {
                return Err(Error::Config("checkpoint network differs from the configuration".into()));
            }
            let state = AdamState::read(&state_path(ckpt))?;
            let history = if loss_path.exists() {
                read_loss_csv(&loss_path)?
                    .into_iter()
                    .filter(|r| r.iteration <= state.step())
                    .collect()
            } else {
                Vec::new()
            };
            (params, state, history)
        }
        None => {
            let params = DenoiserParams::init(cfg.network.clone(), manifest.identities(Split::Train), rng::derive_seed(cfg.seed, &[u64::MAX]))?;
            let state = AdamState::new(&params);
            let ckpt = checkpoint_path(out_dir, 0);
            write_checkpoint(&ckpt, &params)?;
            state.write(&state_path(&ckpt))?;
            write_loss_csv(&loss_path, &[])?;
            (params, state, Vec::new())
        }
    };
    let mut pending = Vec::new();
    let run = train_iterations(params, state, &clips, cfg, |rec, p, s| {
        pending.push(*rec);
        let due = cfg.checkpoint_every > 0 && rec.iteration % cfg.checkpoint_every == 0;
        if due || rec.iteration == cfg.iterations {
            let ckpt = checkpoint_path(out_dir, rec.iteration);
            write_checkpoint(&ckpt, p)?;
            s.write(&state_path(&ckpt))?;
            history.append(&mut pending);
            write_loss_csv(&loss_path, &history)?;
        }
        Ok(())
    })?;
    Ok(TrainRun { log: history, ..run })
}

/// Personalize a trained model: give `identity` a zero style vector and
/// continue optimizing every parameter on the target clips with a fresh
/// optimizer for `cfg.iterations` steps.
pub fn finetune_personal(base: &DenoiserParams, identity: u32, clips: &[Clip], cfg: &TrainConfig) -> Result<TrainRun> {
    if clips.is_empty() {
        return Err(Error::Config("fine-tuning needs target sequences".into()));
    }
    if &cfg.network != base.config() {
        return Err(Error::Config("fine-tuning configuration differs from the base network".into()));
    }
    let mut params = base.clone();
    let row = params.add_style(identity);
    let c = params.config().latent_channels;
    params.get_mut("style").data_mut()[row * c..(row + 1) * c].fill(0.0);
    let clips: Vec<Clip> = clips.iter().map(|clip| Clip { identity, ..clip.clone() }).collect();
    let state = AdamState::new(&params);
    train_iterations(params, state, &clips, cfg, |_, _, _| Ok(()))
}

/// Rank checkpoints by mean validation Lip-Sync at a fixed guidance scale
/// and return the index of the best one (earliest on ties).
pub fn select_checkpoint(
    candidates: &[DenoiserParams],
    clips: &[Clip],
    mesh: &TemplateMesh,
    guidance: f64,
    seed: u64,
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() || clips.is_empty() {
        return Err(Error::Config("checkpoint selection needs candidates and validation clips".into()));
    }
    let scores = candidates
        .iter()
        .map(|p| {
            let sampler = Sampler::new(p)?;
            let per_clip: Vec<f64> = clips
                .par_iter()
                .enumerate()
                .map(|(c, clip)| {
                    let cond = Condition::new(AudioCondition::Features(clip.features.clone()), Some(clip.identity));
                    let scfg = SamplerConfig {
                        guidance,
                        seed: rng::derive_seed(seed, &[c as u64]),
                        ..SamplerConfig::default()
                    };
                    let x = sampler.sample(&cond, clip.motion.n_frames(), &scfg)?;
                    lip_sync(&x, &clip.motion, mesh)
                })
                .collect::<Result<_>>()?;
            Ok(per_clip.iter().sum::<f64>() / per_clip.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if *s < scores[best] { i } else { best });
    Ok((best, scores))
}
