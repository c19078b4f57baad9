use rand::Rng;

use super::NetworkConfig;
use crate::error::{dim_err, Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Every trainable weight of the denoiser, including the per-identity style
/// table. Tensors are kept in the order given by
/// [`NetworkConfig::parameter_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    config: NetworkConfig,
    style_ids: Vec<u32>,
    tensors: Vec<(String, Tensor)>,
}

impl DenoiserParams {
    /// Uniform `±1/sqrt(fan_in)` initialization; style vectors start at zero.
    pub fn init(config: NetworkConfig, style_ids: Vec<u32>, seed: u64) -> Result<Self> {
        config.validate()?;
        check_unique(&style_ids)?;
        let mut g = rng::stream(seed, &[0x1417]);
        let tensors = config
            .parameter_shapes(style_ids.len())
            .into_iter()
            .map(|(name, shape)| {
                let t = if name == "style" {
                    Tensor::zeros(&shape)
                } else {
                    let fan_in = fan_in(&name, &shape, &config);
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    let n = shape.iter().product();
                    let data = (0..n).map(|_| g.random_range(-bound..bound)).collect();
                    Tensor::new(shape, data).expect("shape matches data")
                };
                (name, t)
            })
            .collect();
        Ok(Self {
            config,
            style_ids,
            tensors,
        })
    }

    /// Assemble from stored tensors, checking names and shapes against the
    /// configuration.
    pub fn from_parts(
        config: NetworkConfig,
        style_ids: Vec<u32>,
        tensors: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        config.validate()?;
        check_unique(&style_ids)?;
        let expected = config.parameter_shapes(style_ids.len());
        if expected.len() != tensors.len() {
            return Err(dim_err!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                tensors.len()
            ));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(&tensors) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(dim_err!(
                    "parameter {got_name} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                ));
            }
        }
        Ok(Self {
            config,
            style_ids,
            tensors,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn style_ids(&self) -> &[u32] {
        &self.style_ids
    }

    pub fn style_row(&self, id: u32) -> Option<usize> {
        self.style_ids.iter().position(|&s| s == id)
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let i = self
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        &self.tensors[i].1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = self
            .index_of(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"));
        &mut self.tensors[i].1
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Append a zero style vector for `id`. Returns its row; an existing id
    /// keeps its current vector.
    pub fn add_style(&mut self, id: u32) -> usize {
        if let Some(row) = self.style_row(id) {
            return row;
        }
        let c = self.config.latent_channels;
        let style = self.get_mut("style");
        let rows = style.shape()[0];
        let mut data = std::mem::replace(style, Tensor::zeros(&[0, c])).into_data();
        data.extend(std::iter::repeat_n(0.0, c));
        *style = Tensor::new(vec![rows + 1, c], data).expect("style table shape");
        self.style_ids.push(id);
        rows
    }
}

fn fan_in(name: &str, shape: &[usize], cfg: &NetworkConfig) -> usize {
    match shape {
        [cin, _] if name.ends_with(".w") => *cin,
        [_, cin, k] => cin * k,
        // Biases share the fan-in of the weight they belong to.
        _ => match name {
            "motion_enc.b" => cfg.motion_dim(),
            "time_proj.b" => cfg.time_embed_dim,
            "audio_proj.b" => cfg.audio_channels_in,
            "motion_dec.b" => cfg.latent_channels,
            n if n.ends_with("cond.b") => 2 * cfg.latent_channels * cfg.kernel_size,
            _ => cfg.latent_channels * cfg.kernel_size,
        },
    }
}

fn check_unique(ids: &[u32]) -> Result<()> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate style ids in {ids:?}")));
    }
    Ok(())
}
