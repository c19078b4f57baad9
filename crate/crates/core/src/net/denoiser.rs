use super::{sinusoidal_embedding, DenoiserParams};
use crate::data::{AudioFeatureSequence, MotionSequence};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Speech part of the condition.
#[derive(Debug, Clone, PartialEq)]
pub enum AudioCondition {
    /// Unconditional: the projected speech representation is all zeros.
    Zero,
    /// Raw features on the motion frame grid, `N x audio_channels_in`; the
    /// network projects them.
    Features(AudioFeatureSequence),
    /// Already-projected features, `[N, latent_channels]`.
    Projected(Tensor),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub audio: AudioCondition,
    /// Identity whose style vector is added before decoding. `None`, or an id
    /// without a style row, adds nothing.
    pub style: Option<u32>,
}

impl Condition {
    pub fn new(audio: AudioCondition, style: Option<u32>) -> Self {
        Self { audio, style }
    }

    pub fn unconditional() -> Self {
        Self::new(AudioCondition::Zero, None)
    }

    /// Same style, speech zeroed.
    pub fn without_audio(&self) -> Self {
        Self::new(AudioCondition::Zero, self.style)
    }

    pub fn has_audio(&self) -> bool {
        !matches!(self.audio, AudioCondition::Zero)
    }
}

/// Graph handles of every parameter, parallel to
/// [`DenoiserParams::tensors`].
pub struct ParamVars {
    vars: Vec<Var>,
}

impl ParamVars {
    pub fn register<'a>(g: &mut Graph<'a>, p: &'a DenoiserParams, trainable: bool) -> Self {
        let vars = p
            .tensors()
            .iter()
            .map(|(_, t)| if trainable { g.param(t) } else { g.constant_ref(t) })
            .collect();
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn get(&self, p: &DenoiserParams, name: &str) -> Var {
        self.vars[p.index_of(name).expect("parameter exists")]
    }
}

/// Append `pad_to - rows` copies of the last row.
fn replicate_pad(values: &[f64], width: usize, pad_to: usize) -> Vec<f64> {
    let rows = values.len() / width;
    let mut out = Vec::with_capacity(pad_to * width);
    out.extend_from_slice(values);
    let last = &values[(rows - 1) * width..];
    for _ in rows..pad_to {
        out.extend_from_slice(last);
    }
    out
}

/// Per-frame linear projection of raw features to the latent width, returned
/// channels-first `[C, N]`.
pub fn project_audio(
    g: &mut Graph<'_>,
    p: &DenoiserParams,
    pv: &ParamVars,
    raw: Var,
) -> Result<Var> {
    let cfg = p.config();
    let shape = g.value(raw).shape();
    if shape.len() != 2 || shape[1] != cfg.audio_channels_in {
        return Err(dim_err!(
            "audio features {:?}, expected [N, {}]",
            shape,
            cfg.audio_channels_in
        ));
    }
    let w = pv.get(p, "audio_proj.w");
    let b = pv.get(p, "audio_proj.b");
    let projected = g.linear(raw, w, Some(b))?;
    g.transpose(projected)
}

/// Concatenate features with the aligned audio and apply a
/// length-preserving convolution plus activation.
pub fn condition_block(
    g: &mut Graph<'_>,
    features: Var,
    audio: Var,
    kernel: Var,
    bias: Var,
    pad: usize,
) -> Result<Var> {
    let joined = g.concat_channels(features, audio)?;
    let y = g.conv1d(joined, kernel, Some(bias), 1, pad)?;
    g.silu(y)
}

/// Record the full denoiser on `g` and return the `[N, D*3]` clean estimate.
pub fn forward_graph<'a>(
    g: &mut Graph<'a>,
    p: &'a DenoiserParams,
    pv: &ParamVars,
    x_t: &MotionSequence,
    t: usize,
    cond: &Condition,
) -> Result<Var> {
    let cfg = p.config();
    let n = x_t.n_frames();
    if n == 0 {
        return Err(Error::EmptySequence("denoiser input has no frames".into()));
    }
    if x_t.dim() != cfg.motion_dim() {
        return Err(dim_err!(
            "motion has {} values per frame, network expects {}",
            x_t.dim(),
            cfg.motion_dim()
        ));
    }
    if t > cfg.diffusion_steps {
        return Err(Error::Contract(format!(
            "diffusion step {t} outside 0..={}",
            cfg.diffusion_steps
        )));
    }
    let (c, d3, pad) = (cfg.latent_channels, cfg.motion_dim(), cfg.pad());
    let np = cfg.padded_len(n);

    // Speech at full resolution, then average-pooled once per down block.
    let audio0 = match &cond.audio {
        AudioCondition::Zero => g.constant(Tensor::zeros(&[c, np])),
        AudioCondition::Features(a) => {
            if a.n_frames() != n || a.n_channels() != cfg.audio_channels_in {
                return Err(dim_err!(
                    "audio features are {}x{}, expected {}x{}",
                    a.n_frames(),
                    a.n_channels(),
                    n,
                    cfg.audio_channels_in
                ));
            }
            if a.rate() != cfg.fps {
                return Err(dim_err!(
                    "audio features at {} fps, model runs at {}",
                    a.rate(),
                    cfg.fps
                ));
            }
            let raw = Tensor::new(
                vec![np, cfg.audio_channels_in],
                replicate_pad(a.values(), cfg.audio_channels_in, np),
            )?;
            let raw = g.constant(raw);
            project_audio(g, p, pv, raw)?
        }
        AudioCondition::Projected(a) => {
            if a.shape() != [n, c] {
                return Err(dim_err!("projected audio {:?}, expected [{n}, {c}]", a.shape()));
            }
            let padded = g.constant(Tensor::new(vec![np, c], replicate_pad(a.data(), c, np))?);
            g.transpose(padded)?
        }
    };
    let mut audio_levels = vec![audio0];
    for _ in 0..cfg.num_down_blocks {
        let prev = *audio_levels.last().unwrap();
        audio_levels.push(g.avg_pool(prev, cfg.temporal_stride)?);
    }

    // Motion encoder plus step embedding.
    let x = g.constant(Tensor::new(vec![np, d3], replicate_pad(x_t.values(), d3, np))?);
    let h = g.linear(x, pv.get(p, "motion_enc.w"), Some(pv.get(p, "motion_enc.b")))?;
    let mut h = g.transpose(h)?;
    let temb = g.constant(Tensor::from_vec(sinusoidal_embedding(t, cfg.time_embed_dim)?));
    let temb = g.linear(temb, pv.get(p, "time_proj.w"), Some(pv.get(p, "time_proj.b")))?;
    h = g.add_channel_bias(h, temb)?;

    for (i, &audio) in audio_levels.iter().skip(1).enumerate() {
        let k = pv.get(p, &format!("down{i}.k"));
        let b = pv.get(p, &format!("down{i}.b"));
        h = g.conv1d(h, k, Some(b), cfg.temporal_stride, pad)?;
        h = g.silu(h)?;
        let ck = pv.get(p, &format!("down{i}.cond.k"));
        let cb = pv.get(p, &format!("down{i}.cond.b"));
        h = condition_block(g, h, audio, ck, cb, pad)?;
    }

    h = g.upsample_linear(h, cfg.reduction())?;
    h = g.conv1d(h, pv.get(p, "up.k"), Some(pv.get(p, "up.b")), 1, pad)?;
    h = g.silu(h)?;
    h = condition_block(
        g,
        h,
        audio_levels[0],
        pv.get(p, "up.cond.k"),
        pv.get(p, "up.cond.b"),
        pad,
    )?;

    if let Some(row) = cond.style.and_then(|id| p.style_row(id)) {
        let s = g.select_row(pv.get(p, "style"), row)?;
        h = g.add_channel_bias(h, s)?;
    }

    let h = g.transpose(h)?;
    let y = g.linear(h, pv.get(p, "motion_dec.w"), Some(pv.get(p, "motion_dec.b")))?;
    g.crop_rows(y, n)
}

/// Inference-only forward pass.
pub fn predict(
    p: &DenoiserParams,
    x_t: &MotionSequence,
    t: usize,
    cond: &Condition,
) -> Result<MotionSequence> {
    let mut g = Graph::new();
    let pv = ParamVars::register(&mut g, p, false);
    let y = forward_graph(&mut g, p, &pv, x_t, t, cond)?;
    let values = g.value(y).data().to_vec();
    MotionSequence::new(x_t.n_vertices(), x_t.fps(), values)
}
