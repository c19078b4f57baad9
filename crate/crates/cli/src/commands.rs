use std::path::{Path, PathBuf};

use facediff::data::synth::{synth_generate, SynthConfig};
use facediff::data::{base_dir, read_afea, read_mseq, resample_features, write_mseq, Clip, DatasetManifest, Split};
use facediff::diffusion::{KeyframeFile, ReverseProcess, Sampler, SamplerConfig};
use facediff::metrics::{evaluate_pair, guidance_grid, guidance_sweep, write_sweep_csv, MetricReport, SweepConfig};
use facediff::net::{read_checkpoint, write_checkpoint};
use facediff::rng::derive_seed;
use facediff::train::{finetune_personal, select_checkpoint, train_loop, write_loss_csv, TrainConfig};
use facediff::{AudioCondition, Condition, DenoiserParams, MotionSequence};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{config_err, CliError, CliResult};
use crate::overrides::{defaults, resolve};
use crate::runlog::RunManifest;
use crate::{Command, Common, SampleArgs, Subset};

const FINETUNE_ITERATIONS: u64 = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SamplingConfig {
    guidance: f64,
    n_samples: usize,
    process: ReverseProcess,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            guidance: 0.5,
            n_samples: 1,
            process: ReverseProcess::Renoise,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSettings {
    n_samples: usize,
    select_guidance: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            n_samples: 8,
            select_guidance: 0.99,
        }
    }
}

fn create_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// Put `value` at `key` of a resolved configuration tree and parse it back.
fn set_field<T: serde::de::DeserializeOwned>(tree: &mut Value, key: &str, value: Value) -> CliResult<T> {
    tree[key] = value;
    serde_json::from_value(tree.clone()).map_err(|e| config_err(format!("configuration: {e}")))
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::SynthData { common } => synth_data(&common),
        Command::Train {
            common,
            data,
            iterations,
            resume,
        } => train(&common, &data, iterations, resume.as_deref()),
        Command::Finetune {
            common,
            base,
            data,
            identity,
            clips,
            iterations,
        } => finetune(&common, &base, &data, identity, clips, iterations),
        Command::Sample(args) => sample(&args, None),
        Command::Edit { sample: args, keyframes } => {
            let kf = keyframes.ok_or_else(|| config_err("edit needs --keyframes"))?;
            sample(&args, Some(&kf))
        }
        Command::Eval {
            common,
            data,
            pred,
            ckpt,
            n_samples,
            guidance,
            scale,
            subset,
        } => eval(&common, &data, pred.as_deref(), ckpt.as_deref(), n_samples, guidance, scale, &subset),
        Command::SweepGuidance {
            common,
            data,
            ckpt,
            n_samples,
            select_guidance,
            subset,
        } => sweep(&common, &data, &ckpt, n_samples, select_guidance, &subset),
    }
}

fn synth_data(common: &Common) -> CliResult<()> {
    let (mut cfg, mut tree): (SynthConfig, Value) =
        resolve(defaults(&SynthConfig::default()), common.config.as_deref(), &common.sets)?;
    if let Some(seed) = common.seed {
        cfg = set_field(&mut tree, "seed", json!(seed))?;
    }
    cfg.validate()?;
    create_out(&common.out)?;
    let (manifest, _) = synth_generate(&cfg, &common.out)?;
    log::info!(
        "wrote {} sequences of {} identities to {}",
        manifest.entries.len(),
        cfg.n_identities,
        common.out.display()
    );
    RunManifest::new("synth-data", cfg.seed, tree).finish(&common.out)
}

fn train(common: &Common, data: &Path, iterations: Option<u64>, resume: Option<&Path>) -> CliResult<()> {
    let manifest = DatasetManifest::read(data)?;
    // The network adopts the dataset's dimensions unless configured otherwise.
    let mut base = TrainConfig::default();
    base.network.num_vertices = manifest.n_vertices;
    base.network.audio_channels_in = manifest.n_features;
    base.network.fps = manifest.fps;
    let (mut cfg, mut tree): (TrainConfig, Value) = resolve(defaults(&base), common.config.as_deref(), &common.sets)?;
    if let Some(seed) = common.seed {
        cfg = set_field(&mut tree, "seed", json!(seed))?;
    }
    if let Some(it) = iterations {
        cfg = set_field(&mut tree, "iterations", json!(it))?;
    }
    cfg.validate()?;
    let mut run = RunManifest::new("train", cfg.seed, tree);
    run.input_dataset(data)?;
    if let Some(ckpt) = resume {
        run.input_file(ckpt)?;
        run.input_file(&facediff::train::state_path(ckpt))?;
    }
    create_out(&common.out)?;
    let result = train_loop(data, &cfg, &common.out, resume)?;
    if let Some(last) = result.log.last() {
        log::info!("finished at iteration {} with l_simple {:.6}", last.iteration, last.l_simple);
    }
    run.finish(&common.out)
}

fn finetune(
    common: &Common,
    base_path: &Path,
    data: &Path,
    identity: u32,
    budget: Option<usize>,
    iterations: Option<u64>,
) -> CliResult<()> {
    let base = read_checkpoint(base_path)?;
    let defaults_cfg = TrainConfig {
        network: base.config().clone(),
        iterations: FINETUNE_ITERATIONS,
        ..TrainConfig::default()
    };
    let (mut cfg, mut tree): (TrainConfig, Value) = resolve(defaults(&defaults_cfg), common.config.as_deref(), &common.sets)?;
    if let Some(seed) = common.seed {
        cfg = set_field(&mut tree, "seed", json!(seed))?;
    }
    if let Some(it) = iterations {
        cfg = set_field(&mut tree, "iterations", json!(it))?;
    }
    tree["identity"] = json!(identity);
    tree["clips"] = json!(budget);
    let manifest = DatasetManifest::read(data)?;
    let entries: Vec<_> = manifest.entries_of(identity).take(budget.unwrap_or(usize::MAX)).collect();
    if entries.is_empty() {
        return Err(config_err(format!("identity {identity} has no sequences in {}", data.display())));
    }
    let dir = base_dir(data);
    let clips = entries
        .iter()
        .map(|e| manifest.load_entry(&dir, e))
        .collect::<facediff::Result<Vec<_>>>()?;
    let mut run = RunManifest::new("finetune", cfg.seed, tree);
    run.input_file(base_path)?;
    run.input_dataset(data)?;
    create_out(&common.out)?;
    let result = finetune_personal(&base, identity, &clips, &cfg)?;
    write_checkpoint(&common.out.join("finetuned.3dfp"), &result.params)?;
    write_loss_csv(&common.out.join("loss.csv"), &result.log)?;
    run.finish(&common.out)
}

fn sampling_config(args: &SampleArgs) -> CliResult<(SamplingConfig, Value)> {
    let c = &args.common;
    let (mut cfg, mut tree): (SamplingConfig, Value) =
        resolve(defaults(&SamplingConfig::default()), c.config.as_deref(), &c.sets)?;
    if let Some(g) = args.guidance {
        cfg = set_field(&mut tree, "guidance", json!(g))?;
    }
    if let Some(k) = args.n_samples {
        cfg = set_field(&mut tree, "n_samples", json!(k))?;
    }
    if let Some(p) = args.process {
        cfg = set_field(&mut tree, "process", serde_json::to_value(ReverseProcess::from(p)).unwrap())?;
    }
    if cfg.n_samples == 0 {
        return Err(config_err("--n-samples must be at least 1"));
    }
    Ok((cfg, tree))
}

fn sample(args: &SampleArgs, keyframes: Option<&Path>) -> CliResult<()> {
    let (cfg, mut tree) = sampling_config(args)?;
    let seed = args.common.seed.unwrap_or(0);
    let params = read_checkpoint(&args.ckpt)?;
    let net = params.config();
    let mut run_inputs = vec![args.ckpt.clone()];

    let features = match (&args.features, args.unconditional) {
        (Some(path), false) => {
            run_inputs.push(path.clone());
            let raw = read_afea(path)?;
            if raw.n_channels() != net.audio_channels_in {
                return Err(CliError::Data(format!(
                    "{}: {} feature channels, model expects {}",
                    path.display(),
                    raw.n_channels(),
                    net.audio_channels_in
                )));
            }
            Some(resample_features(&raw, net.fps)?)
        }
        _ => None,
    };
    let constraint = match keyframes {
        Some(path) => {
            run_inputs.push(path.to_path_buf());
            let file = KeyframeFile::read(path)?;
            let kf_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            for r in &file.keyframes {
                let p = kf_dir.join(&r.values_file);
                if !run_inputs.contains(&p) {
                    run_inputs.push(p);
                }
            }
            Some((file.n_frames, file.resolve(&kf_dir)?))
        }
        None => None,
    };

    let n_frames = args
        .frames
        .or(constraint.as_ref().map(|(n, _)| *n))
        .or(features.as_ref().map(|f| f.n_frames()))
        .ok_or_else(|| config_err("without a feature file the output length needs --frames"))?;
    if let Some((n, _)) = &constraint {
        if *n != n_frames {
            return Err(config_err(format!("keyframe file describes {n} frames, sampling {n_frames}")));
        }
    }
    let cond = match features {
        Some(f) => {
            let f = if f.n_frames() == n_frames {
                f
            } else if f.n_frames() > n_frames {
                f.window(0, n_frames)?
            } else {
                return Err(CliError::Data(format!(
                    "features cover {} frames, {n_frames} requested",
                    f.n_frames()
                )));
            };
            Condition::new(AudioCondition::Features(f), args.style)
        }
        None if args.unconditional => Condition::unconditional(),
        None => Condition::new(AudioCondition::Zero, args.style),
    };

    tree["unconditional"] = json!(args.unconditional);
    tree["style"] = json!(args.style);
    tree["frames"] = json!(n_frames);
    let mut run = RunManifest::new(if keyframes.is_some() { "edit" } else { "sample" }, seed, tree);
    for p in &run_inputs {
        run.input_file(p)?;
    }

    create_out(&args.common.out)?;
    let sampler = Sampler::new(&params)?;
    for k in 0..cfg.n_samples {
        let scfg = SamplerConfig {
            guidance: cfg.guidance,
            seed: derive_seed(seed, &[k as u64]),
            keyframes: constraint.as_ref().map(|(_, c)| c.clone()),
            process: cfg.process,
        };
        let out = sampler.sample(&cond, n_frames, &scfg)?;
        write_mseq(&args.common.out.join(format!("sample_{k:03}.mseq")), &out)?;
    }
    run.finish(&args.common.out)
}

/// Evenly spread clip subset, each optionally truncated, with its name
/// (the manifest path of the motion file without extension).
fn load_subset(manifest_path: &Path, subset: &Subset) -> CliResult<(DatasetManifest, Vec<(String, Clip)>)> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let split = Split::from(subset.split);
    let entries: Vec<_> = manifest.entries.iter().filter(|e| e.split == split).collect();
    if entries.is_empty() {
        return Err(config_err(format!("the {split:?} split of {} is empty", manifest_path.display())));
    }
    let take = subset.max_clips.unwrap_or(entries.len()).min(entries.len());
    if take == 0 {
        return Err(config_err("--max-clips must be at least 1"));
    }
    let dir = base_dir(manifest_path);
    let mut out = Vec::with_capacity(take);
    for i in 0..take {
        let e = entries[i * entries.len() / take];
        let mut clip = manifest.load_entry(&dir, e)?;
        if let Some(m) = subset.max_frames {
            let n = clip.motion.n_frames().min(m);
            if n == 0 {
                return Err(config_err("--max-frames must be at least 1"));
            }
            clip.motion = clip.motion.window(0, n)?;
            clip.features = clip.features.window(0, n)?;
        }
        let name = e.motion.strip_suffix(".mseq").unwrap_or(&e.motion).to_string();
        out.push((name, clip));
    }
    Ok((manifest, out))
}

fn subset_json(subset: &Subset) -> Value {
    json!({
        "split": format!("{:?}", Split::from(subset.split)).to_lowercase(),
        "max_clips": subset.max_clips,
        "max_frames": subset.max_frames,
    })
}

/// Prediction files for one clip: `<name>.mseq`, or every `.mseq` in the
/// directory `<name>/`, sorted.
fn prediction_files(dir: &Path, name: &str) -> CliResult<Vec<PathBuf>> {
    let single = dir.join(format!("{name}.mseq"));
    if single.is_file() {
        return Ok(vec![single]);
    }
    let sub = dir.join(name);
    let listing = std::fs::read_dir(&sub)
        .map_err(|e| CliError::Data(format!("no prediction for {name}: {}: {e}", sub.display())))?;
    let mut files: Vec<PathBuf> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mseq"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no prediction for {name} in {}", dir.display())));
    }
    Ok(files)
}

/// Predictions longer than the (possibly truncated) reference are cut to it.
fn read_predictions(files: &[PathBuf], n_frames: usize) -> CliResult<Vec<MotionSequence>> {
    files
        .iter()
        .map(|f| {
            let m = read_mseq(f)?;
            let m = if m.n_frames() > n_frames { m.window(0, n_frames)? } else { m };
            Ok(m)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn eval(
    common: &Common,
    data: &Path,
    pred: Option<&Path>,
    ckpt: Option<&Path>,
    n_samples: Option<usize>,
    guidance: Option<f64>,
    scale: f64,
    subset: &Subset,
) -> CliResult<()> {
    let (mut cfg, mut tree): (SamplingConfig, Value) =
        resolve(defaults(&SamplingConfig::default()), common.config.as_deref(), &common.sets)?;
    if let Some(g) = guidance {
        cfg = set_field(&mut tree, "guidance", json!(g))?;
    }
    if let Some(k) = n_samples {
        cfg = set_field(&mut tree, "n_samples", json!(k))?;
    }
    if cfg.n_samples == 0 {
        return Err(config_err("--n-samples must be at least 1"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(config_err(format!("--scale must be positive, got {scale}")));
    }
    tree["scale"] = json!(scale);
    tree["subset"] = subset_json(subset);
    let seed = common.seed.unwrap_or(0);
    let (manifest, clips) = load_subset(data, subset)?;
    let mesh = manifest.mesh()?;
    let mut run = RunManifest::new("eval", seed, tree);
    run.input_dataset(data)?;
    create_out(&common.out)?;

    let mut rows = Vec::with_capacity(clips.len());
    match (pred, ckpt) {
        (Some(dir), None) => {
            let mut read = Vec::new();
            for (name, clip) in &clips {
                let files = prediction_files(dir, name)?;
                let preds = read_predictions(&files, clip.motion.n_frames())?;
                rows.push(evaluate_pair(name, &preds, &clip.motion, &mesh)?);
                read.extend(files);
            }
            run.input_tree(dir, &read)?;
        }
        (None, Some(ckpt)) => {
            run.input_file(ckpt)?;
            let params = read_checkpoint(ckpt)?;
            let sampler = Sampler::new(&params)?;
            for (c, (name, clip)) in clips.iter().enumerate() {
                let cond = Condition::new(AudioCondition::Features(clip.features.clone()), Some(clip.identity));
                let mut preds = Vec::with_capacity(cfg.n_samples);
                for k in 0..cfg.n_samples {
                    let scfg = SamplerConfig {
                        guidance: cfg.guidance,
                        seed: derive_seed(seed, &[c as u64, k as u64]),
                        keyframes: None,
                        process: cfg.process,
                    };
                    let x = sampler.sample(&cond, clip.motion.n_frames(), &scfg)?;
                    write_mseq(&common.out.join("pred").join(name).join(format!("sample_{k:03}.mseq")), &x)?;
                    preds.push(x);
                }
                rows.push(evaluate_pair(name, &preds, &clip.motion, &mesh)?);
            }
        }
        _ => return Err(config_err("eval needs exactly one of --pred or --ckpt")),
    }
    let report = MetricReport::new(rows).with_scale(scale);
    report.write_csv(&common.out.join("metrics.csv"))?;
    let m = report.mean();
    log::info!(
        "mean lip_sync {:.6} lip_max {:.6} l2_lip {:.6} l2_face {:.6}",
        m.lip_sync * scale,
        m.lip_max * scale,
        m.l2_lip * scale,
        m.l2_face * scale
    );
    run.finish(&common.out)
}

fn sweep(
    common: &Common,
    data: &Path,
    ckpts: &[PathBuf],
    n_samples: Option<usize>,
    select_guidance: Option<f64>,
    subset: &Subset,
) -> CliResult<()> {
    let (mut cfg, mut tree): (SweepSettings, Value) =
        resolve(defaults(&SweepSettings::default()), common.config.as_deref(), &common.sets)?;
    if let Some(k) = n_samples {
        cfg = set_field(&mut tree, "n_samples", json!(k))?;
    }
    if let Some(g) = select_guidance {
        cfg = set_field(&mut tree, "select_guidance", json!(g))?;
    }
    tree["subset"] = subset_json(subset);
    let seed = common.seed.unwrap_or(0);
    let mut run = RunManifest::new("sweep-guidance", seed, tree);
    run.input_dataset(data)?;
    for c in ckpts {
        run.input_file(c)?;
    }
    let candidates = ckpts
        .iter()
        .map(|c| read_checkpoint(c))
        .collect::<facediff::Result<Vec<DenoiserParams>>>()?;
    let (manifest, clips) = load_subset(data, subset)?;
    let mesh = manifest.mesh()?;
    create_out(&common.out)?;

    let best = if candidates.len() > 1 {
        let val = Subset {
            split: crate::SplitArg::Val,
            max_clips: subset.max_clips,
            max_frames: subset.max_frames,
        };
        let (_, val_clips) = load_subset(data, &val)?;
        let val_clips: Vec<Clip> = val_clips.into_iter().map(|(_, c)| c).collect();
        let (best, scores) = select_checkpoint(&candidates, &val_clips, &mesh, cfg.select_guidance, seed)?;
        let mut text = String::from("checkpoint,lip_sync,selected\n");
        for (i, (c, s)) in ckpts.iter().zip(&scores).enumerate() {
            text.push_str(&format!("{},{s},{}\n", c.display(), i == best));
        }
        let path = common.out.join("selection.csv");
        std::fs::write(&path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        log::info!("selected {} (validation lip_sync {:.6})", ckpts[best].display(), scores[best]);
        best
    } else {
        0
    };
    let clips: Vec<Clip> = clips.into_iter().map(|(_, c)| c).collect();
    let scfg = SweepConfig {
        scales: guidance_grid(),
        samples_per_sequence: cfg.n_samples,
        seed,
    };
    let rows = guidance_sweep(&candidates[best], &clips, &mesh, &scfg)?;
    write_sweep_csv(&common.out.join("sweep.csv"), &rows)?;
    run.finish(&common.out)
}
