//! Acceptance suite: criteria 1 to 11, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in
//! order on one shared dataset and one trained model. Exits non-zero if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use facediff::data::synth::{synth_generate, SynthConfig};
use facediff::data::{base_dir, Clip, Split};
use facediff::diffusion::{q_sample, KeyframeConstraint, Sampler, SamplerConfig};
use facediff::metrics::{dtw_distance, guidance_grid, guidance_sweep, l2_region, lip_sync, spearman, SweepConfig};
use facediff::net::{forward_graph, predict, read_checkpoint, ParamVars};
use facediff::rng::{derive_seed, normal_vec};
use facediff::train::{checkpoint_path, finetune_personal, l_vel, loss_graph, train_loop, TrainConfig};
use facediff::{
    AudioCondition, AudioFeatureSequence, Condition, DatasetManifest, DenoiserParams, DiffusionSchedule, Graph,
    MotionSequence, NetworkConfig, Result, ScheduleKind, TemplateMesh, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Guidance used wherever a criterion scores samples against ground truth
/// without prescribing a scale: the plain conditional model.
const EVAL_GUIDANCE: f64 = 1.0;

type Outcome = std::result::Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bits(m: &MotionSequence) -> Vec<u64> {
    m.values().iter().map(|v| v.to_bits()).collect()
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1: gradients against central differences.

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// `||a - b|| / max(||a||, ||b||)`; the absolute gap when both vanish.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Largest relative error over all inputs of the scalar built by `f`.
fn fd_error<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph<'_>, &[Var]) -> Result<Var>,
{
    let eval = |ts: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.constant(t.clone())).collect();
        let y = f(&mut g, &vars).unwrap();
        g.value(y).data()[0]
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let y = f(&mut g, &vars).unwrap();
    let grads = g.backward(y).unwrap();
    let mut worst: f64 = 0.0;
    for (i, (v, t)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get(*v).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]);
        let numeric: Vec<f64> = (0..t.numel())
            .map(|j| {
                let mut plus = inputs.to_vec();
                plus[i].data_mut()[j] += FD_STEP;
                let mut minus = inputs.to_vec();
                minus[i].data_mut()[j] -= FD_STEP;
                (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

fn project(g: &mut Graph<'_>, y: Var, seed: u64) -> Result<Var> {
    let shape = g.value(y).shape().to_vec();
    let target = g.constant(uniform(&mut ChaCha8Rng::seed_from_u64(seed), &shape));
    let d = g.sub(y, target)?;
    g.mean_square(d)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let mut results: Vec<(&str, f64)> = Vec::new();
    let u = |r: &mut ChaCha8Rng, s: &[usize]| uniform(r, s);

    results.push(("linear", fd_error(&[u(&mut r, &[5, 4]), u(&mut r, &[4, 3]), u(&mut r, &[3])], |g, v| {
        let y = g.linear(v[0], v[1], Some(v[2]))?;
        project(g, y, 10)
    })));
    for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (1, 2, 5), (2, 0, 1)] {
        let e = fd_error(&[u(&mut r, &[3, 9]), u(&mut r, &[2, 3, k]), u(&mut r, &[2])], |g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), stride, pad)?;
            project(g, y, 11)
        });
        results.push(("conv1d", e));
    }
    results.push(("upsample_linear", fd_error(&[u(&mut r, &[2, 4])], |g, v| {
        let y = g.upsample_linear(v[0], 4)?;
        project(g, y, 12)
    })));
    results.push(("avg_pool", fd_error(&[u(&mut r, &[2, 8])], |g, v| {
        let y = g.avg_pool(v[0], 2)?;
        project(g, y, 13)
    })));
    results.push(("concat_channels", fd_error(&[u(&mut r, &[2, 5]), u(&mut r, &[3, 5])], |g, v| {
        let y = g.concat_channels(v[0], v[1])?;
        project(g, y, 14)
    })));
    results.push(("silu", fd_error(&[u(&mut r, &[3, 5])], |g, v| {
        let y = g.silu(v[0])?;
        project(g, y, 15)
    })));
    results.push(("transpose", fd_error(&[u(&mut r, &[3, 4])], |g, v| {
        let y = g.transpose(v[0])?;
        project(g, y, 16)
    })));
    results.push(("add_channel_bias", fd_error(&[u(&mut r, &[3, 4]), u(&mut r, &[3])], |g, v| {
        let y = g.add_channel_bias(v[0], v[1])?;
        project(g, y, 17)
    })));
    results.push(("select_row", fd_error(&[u(&mut r, &[4, 3])], |g, v| {
        let y = g.select_row(v[0], 2)?;
        project(g, y, 18)
    })));
    results.push(("crop_rows", fd_error(&[u(&mut r, &[6, 3])], |g, v| {
        let y = g.crop_rows(v[0], 4)?;
        project(g, y, 19)
    })));
    results.push(("frame_diff", fd_error(&[u(&mut r, &[6, 3])], |g, v| {
        let y = g.frame_diff(v[0])?;
        project(g, y, 20)
    })));
    results.push(("add/sub/scale", fd_error(&[u(&mut r, &[3, 4]), u(&mut r, &[3, 4])], |g, v| {
        let a = g.add(v[0], v[1])?;
        let b = g.sub(a, v[0])?;
        let c = g.scale(b, -2.5)?;
        let d = g.add(c, v[0])?;
        project(g, d, 21)
    })));
    results.push(("sum", fd_error(&[u(&mut r, &[3, 4])], |g, v| {
        let y = g.silu(v[0])?;
        g.sum(y)
    })));
    results.push(("mean_square", fd_error(&[u(&mut r, &[3, 4])], |g, v| g.mean_square(v[0]))));

    // Full training loss through the complete denoiser.
    let cfg = NetworkConfig {
        latent_channels: 8,
        audio_channels_in: 6,
        num_vertices: 4,
        time_embed_dim: 8,
        diffusion_steps: 50,
        ..Default::default()
    };
    let mut p = DenoiserParams::init(cfg.clone(), vec![0, 1], 2).unwrap();
    for v in p.get_mut("style").data_mut() {
        *v = r.random_range(-1.0..1.0);
    }
    let n = 8;
    let x0 = MotionSequence::new(4, 30.0, (0..n * 12).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let xt = MotionSequence::new(4, 30.0, (0..n * 12).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let audio = AudioFeatureSequence::new(6, 30.0, (0..n * 6).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
    let cond = Condition::new(AudioCondition::Features(audio), Some(1));
    let loss_of = |q: &DenoiserParams| -> f64 {
        let mut g = Graph::new();
        let pv = ParamVars::register(&mut g, q, false);
        let pred = forward_graph(&mut g, q, &pv, &xt, 17, &cond).unwrap();
        let l = loss_graph(&mut g, pred, &x0, 10.0).unwrap();
        g.value(l.total).data()[0]
    };
    let mut g = Graph::new();
    let pv = ParamVars::register(&mut g, &p, true);
    let pred = forward_graph(&mut g, &p, &pv, &xt, 17, &cond).unwrap();
    let l = loss_graph(&mut g, pred, &x0, 10.0).unwrap();
    let grads = g.backward(l.total).unwrap();
    let analytic: Vec<Vec<f64>> = pv
        .vars()
        .iter()
        .zip(p.tensors())
        .map(|(v, (_, t))| grads.get(*v).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    drop(g);
    let mut full_worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; a.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.tensors_mut().nth(i).unwrap().1.data_mut()[j] += FD_STEP;
            minus.tensors_mut().nth(i).unwrap().1.data_mut()[j] -= FD_STEP;
            *slot = (loss_of(&plus) - loss_of(&minus)) / (2.0 * FD_STEP);
        }
        full_worst = full_worst.max(rel_err(a, &numeric));
    }
    results.push(("full loss", full_worst));

    let worst = results.iter().cloned().fold(("", 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    let elapsed = start.elapsed();
    check(
        results.iter().all(|(_, e)| *e < FD_TOL) && elapsed < Duration::from_secs(60),
        format!(
            "{} checks, worst relative error {:.2e} ({}), full-loss {:.2e}, {:.1}s",
            results.len(),
            worst.1,
            worst.0,
            full_worst,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 2: terminal forward-process statistics.

fn criterion_2(clips: &[Clip]) -> Outcome {
    let start = Instant::now();
    let schedule = DiffusionSchedule::new(500, ScheduleKind::Cosine).unwrap();
    let d3 = clips[0].motion.dim();
    let (batches, per_batch) = (100, 1000);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut sum = vec![0.0; d3];
    let mut sum_sq = vec![0.0; d3];
    for b in 0..batches {
        let mut frames = Vec::with_capacity(per_batch * d3);
        for _ in 0..per_batch {
            let c = &clips[r.random_range(0..clips.len())];
            frames.extend_from_slice(c.motion.frame(r.random_range(0..c.motion.n_frames())));
        }
        let x0 = MotionSequence::new(d3 / 3, 30.0, frames).unwrap();
        let eps = normal_vec(&mut facediff::rng::stream(2, &[b]), per_batch * d3);
        let xt = q_sample(&schedule, &x0, 500, &eps).unwrap();
        for row in xt.values().chunks(d3) {
            for (j, v) in row.iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
        }
    }
    let n = (batches as usize * per_batch) as f64;
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for j in 0..d3 {
        let mean = sum[j] / n;
        let var = (sum_sq[j] - n * mean * mean) / (n - 1.0);
        worst_mean = worst_mean.max(mean.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst_mean < 0.05 && worst_var < 0.05 && elapsed < Duration::from_secs(60),
        format!(
            "{} draws x {d3} coordinates, max |mean| {worst_mean:.4}, max |var - 1| {worst_var:.4}, {:.1}s",
            n as usize,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criteria 3 and 4 use a random-weight network of the toy size.

fn random_network(seed: u64) -> DenoiserParams {
    let cfg = NetworkConfig {
        audio_channels_in: 8,
        ..Default::default()
    };
    let mut p = DenoiserParams::init(cfg, vec![0, 1, 2], seed).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for v in p.get_mut("style").data_mut() {
        *v = r.random_range(-0.5..0.5);
    }
    p
}

fn random_motion(r: &mut ChaCha8Rng, n: usize, d: usize) -> MotionSequence {
    MotionSequence::new(d, 30.0, (0..n * d * 3).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_features(r: &mut ChaCha8Rng, n: usize, f: usize) -> AudioFeatureSequence {
    AudioFeatureSequence::new(f, 30.0, (0..n * f).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn criterion_3() -> Outcome {
    let p = random_network(3);
    let sampler = Sampler::new(&p).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=40);
        let t = r.random_range(1..=500);
        let x = random_motion(&mut r, n, 40);
        let style = [None, Some(0), Some(2), Some(7)][r.random_range(0..4)];
        let cond = Condition::new(AudioCondition::Features(random_features(&mut r, n, 8)), style);
        let c = predict(&p, &x, t, &cond).unwrap();
        let u = predict(&p, &x, t, &cond.without_audio()).unwrap();
        let s1 = sampler.cfg_predict(&x, t, &cond, 1.0).unwrap();
        let s0 = sampler.cfg_predict(&x, t, &cond, 0.0).unwrap();
        if bits(&s1) != bits(&c) || bits(&s0) != bits(&u) {
            failures += 1;
        }
    }
    check(failures == 0, format!("100 random (x_t, t, cond) triples, {failures} mismatches"))
}

fn criterion_4() -> Outcome {
    let p = random_network(4);
    let sampler = Sampler::new(&p).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let n = 30;
    let gt = random_motion(&mut r, n, 40);
    let cond = Condition::new(AudioCondition::Features(random_features(&mut r, n, 8)), Some(1));
    let mut idx: Vec<usize> = (0..n).filter(|_| r.random_bool(0.3)).collect();
    idx.dedup();
    let kf = KeyframeConstraint::from_frames(&gt, idx.clone()).unwrap();
    let cfg = SamplerConfig::with_seed(11);
    let out = sampler.inpaint_sample(&cond, n, &kf, &cfg).unwrap();
    let exact = idx.iter().all(|&i| out.frame(i) == gt.frame(i));
    let full = KeyframeConstraint::from_frames(&gt, (0..n).collect()).unwrap();
    let full_exact = sampler.inpaint_sample(&cond, n, &full, &cfg).unwrap() == gt;
    let plain = sampler.sample(&cond, n, &cfg).unwrap();
    let empty = sampler.inpaint_sample(&cond, n, &KeyframeConstraint::empty(), &cfg).unwrap();
    let identical = bits(&plain) == bits(&empty);
    check(
        exact && full_exact && identical,
        format!(
            "{} keyframes exact: {exact}, full coverage exact: {full_exact}, empty set bit-identical: {identical}",
            idx.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 5: DTW against exhaustive enumeration.

/// Lexicographic minimum of (summed frame cost, path length) over every
/// monotone alignment, returned as cost / length.
fn dtw_exhaustive(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    fn dist(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    }
    fn walk(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize, cost: f64, len: usize, best: &mut (f64, usize)) {
        let cost = cost + dist(&a[i], &b[j]);
        let len = len + 1;
        if i + 1 == a.len() && j + 1 == b.len() {
            if cost < best.0 || (cost == best.0 && len < best.1) {
                *best = (cost, len);
            }
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, cost, len, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, cost, len, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, cost, len, best);
        }
    }
    let mut best = (f64::INFINITY, usize::MAX);
    walk(a, b, 0, 0, 0.0, 0, &mut best);
    best.0 / best.1 as f64
}

fn criterion_5() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = r.random_range(1..=3);
        let traj = |r: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            let n = r.random_range(1..=8);
            (0..n).map(|_| (0..k).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
        };
        let (a, b) = (traj(&mut r), traj(&mut r));
        let flat = |t: &[Vec<f64>]| t.iter().flatten().copied().collect::<Vec<f64>>();
        if dtw_distance(&flat(&a), &flat(&b), k).unwrap() != dtw_exhaustive(&a, &b) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("1000 random pairs (lengths 1..=8), {mismatches} inexact"))
}

// ---------------------------------------------------------------------------
// Criterion 6: end-to-end training.

struct Trained {
    model: DenoiserParams,
}

fn train_config() -> TrainConfig {
    TrainConfig {
        lr: 1e-4,
        batch_size: 16,
        iterations: 5000,
        lambda_vel: 10.0,
        cond_dropout_p: 0.1,
        crop_len: 30,
        seed: 0,
        checkpoint_every: 0,
        network: NetworkConfig {
            audio_channels_in: 8,
            ..Default::default()
        },
    }
}

/// Mean Lip-Sync and L2-face of one sample per clip.
fn score(p: &DenoiserParams, clips: &[Clip], mesh: &TemplateMesh, style: Option<u32>) -> (f64, f64) {
    let sampler = Sampler::new(p).unwrap();
    let all = mesh.all_indices();
    let (mut ls, mut l2) = (0.0, 0.0);
    for (i, c) in clips.iter().enumerate() {
        let cond = Condition::new(AudioCondition::Features(c.features.clone()), style.or(Some(c.identity)));
        let cfg = SamplerConfig {
            guidance: EVAL_GUIDANCE,
            ..SamplerConfig::with_seed(derive_seed(6, &[i as u64]))
        };
        let x = sampler.sample(&cond, c.motion.n_frames(), &cfg).unwrap();
        ls += lip_sync(&x, &c.motion, mesh).unwrap();
        l2 += l2_region(&x, &c.motion, &all).unwrap();
    }
    (ls / clips.len() as f64, l2 / clips.len() as f64)
}

fn criterion_6(manifest_path: &Path, work: &Path, test: &[Clip], mesh: &TemplateMesh, slot: &mut Option<Trained>) -> Outcome {
    let start = Instant::now();
    let cfg = train_config();
    let out = work.join("train");
    let run = train_loop(manifest_path, &cfg, &out, None).unwrap();
    let train_time = start.elapsed();
    let initial = read_checkpoint(&checkpoint_path(&out, 0)).unwrap();
    let first = run.log[..100].iter().map(|r| r.l_simple).sum::<f64>() / 100.0;
    let last = run.log[run.log.len() - 100..].iter().map(|r| r.l_simple).sum::<f64>() / 100.0;

    let subset: Vec<Clip> = test.iter().step_by(10).cloned().collect();
    let (untrained, _) = score(&initial, &subset, mesh, None);
    let (trained, _) = score(&run.params, &subset, mesh, None);
    let elapsed = start.elapsed();
    *slot = Some(Trained { model: run.params });
    let loss_ratio = last / first;
    let lip_ratio = trained / untrained;
    check(
        loss_ratio <= 0.1 && lip_ratio <= 1.0 / 3.0 && elapsed < Duration::from_secs(15 * 60),
        format!(
            "L_simple {first:.4} -> {last:.4} (ratio {loss_ratio:.3} <= 0.1), test Lip-Sync {trained:.4} vs untrained {untrained:.4} \
             (ratio {lip_ratio:.3} <= 0.333, {} clips, s={EVAL_GUIDANCE}), train {:.0}s, total {:.0}s",
            subset.len(),
            train_time.as_secs_f64(),
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: guidance against diversity.

const SWEEP_CLIPS: usize = 4;
const SWEEP_FRAMES: usize = 30;

fn criterion_7(model: &DenoiserParams, test: &[Clip], mesh: &TemplateMesh) -> Outcome {
    let start = Instant::now();
    let clips: Vec<Clip> = (0..SWEEP_CLIPS)
        .map(|i| {
            let c = &test[i * test.len() / SWEEP_CLIPS];
            Clip {
                identity: c.identity,
                motion: c.motion.window(0, SWEEP_FRAMES).unwrap(),
                features: c.features.window(0, SWEEP_FRAMES).unwrap(),
            }
        })
        .collect();
    let cfg = SweepConfig {
        scales: guidance_grid(),
        samples_per_sequence: 8,
        seed: 7,
    };
    let rows = guidance_sweep(model, &clips, mesh, &cfg).unwrap();
    let s: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let div: Vec<f64> = rows.iter().map(|r| r.div_e).collect();
    let rho = spearman(&s, &div).unwrap();
    let lip: Vec<f64> = rows.iter().filter(|r| r.s >= 0.3 - 1e-9).map(|r| r.lip_sync).collect();
    let inversions = lip.windows(2).filter(|w| w[1] > w[0]).count();
    let elapsed = start.elapsed();
    check(
        rho <= -0.8 && inversions <= 1 && elapsed < Duration::from_secs(10 * 60),
        format!(
            "Spearman(s, Div^E) {rho:.3} <= -0.8, Lip-Sync inversions on [0.3, 1.0]: {inversions} <= 1 \
             (Div^E {:.4} -> {:.4}, Lip-Sync {:.4} -> {:.4}; {SWEEP_CLIPS} clips x {SWEEP_FRAMES} frames, K=8), {:.0}s",
            div[0],
            div[div.len() - 1],
            lip[0],
            lip[lip.len() - 1],
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: inbetweening.

fn criterion_8(model: &DenoiserParams, test: &[Clip], mesh: &TemplateMesh) -> Outcome {
    let start = Instant::now();
    let id = test[0].identity;
    let clips: Vec<&Clip> = test.iter().filter(|c| c.identity == id).step_by(5).collect();
    let sampler = Sampler::new(model).unwrap();
    let all = mesh.all_indices();
    let fractions = [0.05, 0.1, 0.2, 0.5];
    let errors: Vec<f64> = fractions
        .iter()
        .map(|&f| {
            let mut e = 0.0;
            for (i, c) in clips.iter().enumerate() {
                let kf = KeyframeConstraint::boundary(&c.motion, f).unwrap();
                let cond = Condition::new(AudioCondition::Features(c.features.clone()), Some(c.identity));
                let cfg = SamplerConfig {
                    guidance: EVAL_GUIDANCE,
                    ..SamplerConfig::with_seed(derive_seed(8, &[i as u64]))
                };
                let x = sampler.inpaint_sample(&cond, c.motion.n_frames(), &kf, &cfg).unwrap();
                e += l2_region(&x, &c.motion, &all).unwrap();
            }
            e / clips.len() as f64
        })
        .collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing,
        format!(
            "L2-face at 5/10/20/50% keyframes: {} (identity {id}, {} clips), {:.0}s",
            errors.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>().join(" > "),
            clips.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 9: personalization across data budgets.

const BUDGETS: [usize; 3] = [1, 2, 8];
const FINETUNE_ITERATIONS: u64 = 1500;
const FINETUNE_LR: f64 = 3e-5;
const HELD_OUT_EVAL: usize = 8;

fn criterion_9(model: &DenoiserParams, test: &[Clip], mesh: &TemplateMesh) -> Outcome {
    let start = Instant::now();
    let id = test.last().unwrap().identity;
    let own: Vec<Clip> = test.iter().filter(|c| c.identity == id).cloned().collect();
    let (pool, eval) = own.split_at(own.len() - HELD_OUT_EVAL);
    let base = score(model, eval, mesh, Some(id));
    let cfg = TrainConfig {
        iterations: FINETUNE_ITERATIONS,
        lr: FINETUNE_LR,
        ..train_config()
    };
    let tuned: Vec<(f64, f64)> = BUDGETS
        .iter()
        .map(|&b| {
            let run = finetune_personal(model, id, &pool[..b], &cfg).unwrap();
            score(&run.params, eval, mesh, Some(id))
        })
        .collect();
    let better = tuned.iter().all(|t| t.0 < base.0 && t.1 < base.1);
    let monotone = tuned.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1);
    check(
        better && monotone,
        format!(
            "identity {id}, Lip-Sync base {:.4} -> {} and L2-face base {:.4} -> {} for {:?} clips ({FINETUNE_ITERATIONS} iterations at lr {FINETUNE_LR:e}), {:.0}s",
            base.0,
            tuned.iter().map(|t| format!("{:.4}", t.0)).collect::<Vec<_>>().join("/"),
            base.1,
            tuned.iter().map(|t| format!("{:.4}", t.1)).collect::<Vec<_>>().join("/"),
            BUDGETS,
            start.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 10: velocity loss under constant offsets.

fn criterion_10() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    // Dyadic values: x0 + c is exact, so the loss must be exactly zero.
    let mut nonzero = 0;
    for _ in 0..100 {
        let (n, d) = (r.random_range(2..=40), r.random_range(1..=8));
        let dyadic = |r: &mut ChaCha8Rng| r.random_range(-4096i32..=4096) as f64 / 1024.0;
        let x0: Vec<f64> = (0..n * d * 3).map(|_| dyadic(&mut r)).collect();
        let c: Vec<f64> = (0..d * 3).map(|_| dyadic(&mut r)).collect();
        let shifted: Vec<f64> = x0.iter().enumerate().map(|(i, v)| v + c[i % (d * 3)]).collect();
        let a = MotionSequence::new(d, 30.0, x0).unwrap();
        let b = MotionSequence::new(d, 30.0, shifted).unwrap();
        if l_vel(&a, &b).unwrap() != 0.0 {
            nonzero += 1;
        }
    }
    // Arbitrary reals: the only residue is the rounding of x0 + c.
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n, d) = (r.random_range(2..=40), r.random_range(1..=8));
        let a = random_motion(&mut r, n, d);
        let c: Vec<f64> = (0..d * 3).map(|_| r.random_range(-10.0..10.0)).collect();
        let shifted: Vec<f64> = a.values().iter().enumerate().map(|(i, v)| v + c[i % (d * 3)]).collect();
        let b = MotionSequence::new(d, 30.0, shifted).unwrap();
        worst = worst.max(l_vel(&a, &b).unwrap());
    }
    check(
        nonzero == 0 && worst <= 1e-24,
        format!("100 exact-arithmetic cases: {nonzero} non-zero; 100 real-valued cases: max l_vel {worst:.1e} <= 1e-24"),
    )
}

// ---------------------------------------------------------------------------
// Criterion 11: byte-identical CLI runs.

fn facediff(dir: &Path, args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_facediff"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_11(work: &Path) -> Outcome {
    let d = work.join("cli");
    std::fs::create_dir_all(&d).unwrap();
    std::fs::write(
        d.join("small.json"),
        r#"{"batch_size": 4, "checkpoint_every": 5, "network": {"latent_channels": 16, "diffusion_steps": 20, "time_embed_dim": 16}}"#,
    )
    .unwrap();

    let steps: Vec<(&str, Vec<String>)> = vec![
        ("synth-data", vec!["synth-data".into(), "--seed".into(), "3".into()]),
        ("train", "train --data a_synth-data/manifest.json --config small.json --iterations 10 --seed 5".split(' ').map(String::from).collect()),
        ("finetune", "finetune --base a_train/ckpt_000010.3dfp --data a_synth-data/manifest.json --identity 11 --clips 2 --iterations 5 --set batch_size=4".split(' ').map(String::from).collect()),
        ("sample", "sample --ckpt a_train/ckpt_000010.3dfp --features a_synth-data/id10/seq000.afea --style 10 --n-samples 2 --seed 9".split(' ').map(String::from).collect()),
        ("edit", "edit --ckpt a_train/ckpt_000010.3dfp --features a_synth-data/id10/seq000.afea --keyframes kf.json --seed 9".split(' ').map(String::from).collect()),
        ("eval-pred", "eval --data a_synth-data/manifest.json --pred a_sample --max-clips 1".split(' ').map(String::from).collect()),
        ("eval-ckpt", "eval --data a_synth-data/manifest.json --ckpt a_train/ckpt_000010.3dfp --n-samples 2 --max-clips 2 --max-frames 16".split(' ').map(String::from).collect()),
        ("sweep-guidance", "sweep-guidance --data a_synth-data/manifest.json --ckpt a_train/ckpt_000005.3dfp --ckpt a_train/ckpt_000010.3dfp --n-samples 2 --max-clips 1 --max-frames 8".split(' ').map(String::from).collect()),
    ];

    let mut compared = Vec::new();
    for (name, args) in &steps {
        if *name == "edit" {
            std::fs::write(
                d.join("kf.json"),
                r#"{"n_frames": 20, "keyframes": [{"index": 0, "values_file": "a_synth-data/id10/seq000.mseq", "row": 0},
                    {"index": 19, "values_file": "a_synth-data/id10/seq000.mseq", "row": 19}]}"#,
            )
            .unwrap();
        }
        let mut args = args.clone();
        if *name == "eval-pred" {
            // Lay the sample out under the name of the first test clip.
            let pred = d.join("a_sample_as_pred/id10");
            std::fs::create_dir_all(&pred).unwrap();
            std::fs::copy(d.join("a_sample/sample_000.mseq"), pred.join("seq000.mseq")).unwrap();
            args = args.iter().map(|a| if a == "a_sample" { "a_sample_as_pred".to_string() } else { a.clone() }).collect();
        }
        for copy in ["a", "b"] {
            let out = format!("{copy}_{name}");
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.extend(["--out", out.as_str()]);
            facediff(&d, &full)?;
        }
        let (a, b) = (tree(&d.join(format!("a_{name}"))), tree(&d.join(format!("b_{name}"))));
        if a.is_empty() || a != b {
            let diff: Vec<_> = a
                .iter()
                .zip(&b)
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.0.display().to_string())
                .take(3)
                .collect();
            return Err(format!("{name}: outputs differ ({} vs {} files; first differing: {diff:?})", a.len(), b.len()));
        }
        compared.push(format!("{name} ({} files)", a.len()));
    }
    Ok(format!("identical outputs for {}", compared.join(", ")))
}

// ---------------------------------------------------------------------------

fn main() {
    let total = Instant::now();
    let work = tempfile::tempdir().unwrap();
    let data_dir = work.path().join("data");
    let (manifest, _) = synth_generate(&SynthConfig::default(), &data_dir).unwrap();
    let manifest_path = data_dir.join("manifest.json");
    let base = base_dir(&manifest_path);
    let train_clips = manifest.load_split(&base, Split::Train).unwrap();
    let test_clips = manifest.load_split(&base, Split::Test).unwrap();
    let mesh = manifest.mesh().unwrap();
    summarize_dataset(&manifest);

    let mut trained: Option<Trained> = None;
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, title: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(o) => o,
            Err(e) => Err(format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
            )),
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n:>2} [{title}]: {tag} - {detail}");
        results.push((n, title, outcome));
    };

    record(1, "gradient correctness", &mut criterion_1);
    record(2, "forward-process statistics", &mut || criterion_2(&train_clips));
    record(3, "CFG identities", &mut criterion_3);
    record(4, "keyframe hard constraint", &mut criterion_4);
    record(5, "DTW oracle equivalence", &mut criterion_5);
    record(6, "end-to-end toy training", &mut || criterion_6(&manifest_path, work.path(), &test_clips, &mesh, &mut trained));
    let model = trained.as_ref().map(|t| t.model.clone());
    let need = |m: &Option<DenoiserParams>| m.clone().ok_or_else(|| "no trained model (criterion 6 did not finish)".to_string());
    record(7, "guidance-diversity trade-off", &mut || criterion_7(&need(&model)?, &test_clips, &mesh));
    record(8, "inbetweening trend", &mut || criterion_8(&need(&model)?, &test_clips, &mesh));
    record(9, "personalization benefit", &mut || criterion_9(&need(&model)?, &test_clips, &mesh));
    record(10, "velocity-loss invariance", &mut criterion_10);
    record(11, "reproducibility", &mut || criterion_11(work.path()));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        total.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn summarize_dataset(m: &DatasetManifest) {
    let count = |s: Split| m.identities(s).len();
    println!(
        "toy dataset: {} sequences, identities train/val/test {}/{}/{}, D={}, F={}",
        m.entries.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        m.n_vertices,
        m.n_features
    );
}
