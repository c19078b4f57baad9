use serde::{Deserialize, Serialize};

use crate::diffusion::ScheduleKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Width of the latent space, the projected audio and the style vectors.
    pub latent_channels: usize,
    /// Raw speech feature channels before projection.
    pub audio_channels_in: usize,
    pub num_down_blocks: usize,
    pub temporal_stride: usize,
    pub kernel_size: usize,
    pub num_vertices: usize,
    pub fps: f64,
    /// Width of the sinusoidal step encoding before its projection.
    pub time_embed_dim: usize,
    pub diffusion_steps: usize,
    pub schedule: ScheduleKind,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latent_channels: 64,
            audio_channels_in: 768,
            num_down_blocks: 2,
            temporal_stride: 2,
            kernel_size: 3,
            num_vertices: 40,
            fps: 30.0,
            time_embed_dim: 64,
            diffusion_steps: 500,
            schedule: ScheduleKind::Cosine,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.latent_channels == 0 || self.audio_channels_in == 0 || self.num_vertices == 0 {
            return fail("channel and vertex counts must be positive".into());
        }
        if self.kernel_size % 2 == 0 {
            return fail(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.temporal_stride == 0 {
            return fail("temporal stride must be positive".into());
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return fail(format!(
                "time embedding width must be even, got {}",
                self.time_embed_dim
            ));
        }
        if self.diffusion_steps == 0 {
            return fail("need at least one diffusion step".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        Ok(())
    }

    pub fn motion_dim(&self) -> usize {
        self.num_vertices * 3
    }

    pub fn pad(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    /// Total temporal reduction of the hourglass.
    pub fn reduction(&self) -> usize {
        self.temporal_stride.pow(self.num_down_blocks as u32)
    }

    /// Sequence length after replicate padding to a multiple of the reduction.
    pub fn padded_len(&self, n: usize) -> usize {
        n.div_ceil(self.reduction()).max(1) * self.reduction()
    }

    /// Names and shapes of every parameter, in storage order.
    pub fn parameter_shapes(&self, n_styles: usize) -> Vec<(String, Vec<usize>)> {
        let (c, k, d3) = (self.latent_channels, self.kernel_size, self.motion_dim());
        let mut shapes = vec![
            ("motion_enc.w".to_string(), vec![d3, c]),
            ("motion_enc.b".to_string(), vec![c]),
            ("time_proj.w".to_string(), vec![self.time_embed_dim, c]),
            ("time_proj.b".to_string(), vec![c]),
            ("audio_proj.w".to_string(), vec![self.audio_channels_in, c]),
            ("audio_proj.b".to_string(), vec![c]),
        ];
        for i in 0..self.num_down_blocks {
            shapes.push((format!("down{i}.k"), vec![c, c, k]));
            shapes.push((format!("down{i}.b"), vec![c]));
            shapes.push((format!("down{i}.cond.k"), vec![c, 2 * c, k]));
            shapes.push((format!("down{i}.cond.b"), vec![c]));
        }
        shapes.extend([
            ("up.k".to_string(), vec![c, c, k]),
            ("up.b".to_string(), vec![c]),
            ("up.cond.k".to_string(), vec![c, 2 * c, k]),
            ("up.cond.b".to_string(), vec![c]),
            ("style".to_string(), vec![n_styles, c]),
            ("motion_dec.w".to_string(), vec![c, d3]),
            ("motion_dec.b".to_string(), vec![d3]),
        ]);
        shapes
    }

    pub fn parameter_count(&self, n_styles: usize) -> usize {
        self.parameter_shapes(n_styles)
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}
