use std::path::Path;

use super::binio::{read_file, to_u32, write_file, Reader, Writer};
use crate::error::{dim_err, Error, Result};

const MAGIC: &[u8; 4] = b"AFEA";
const VERSION: u32 = 1;

/// Per-frame speech features, `M x F` row-major, sampled at `rate` frames/s.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioFeatureSequence {
    n_channels: usize,
    rate: f64,
    values: Vec<f64>,
}

impl AudioFeatureSequence {
    pub fn new(n_channels: usize, rate: f64, values: Vec<f64>) -> Result<Self> {
        if n_channels == 0 {
            return Err(Error::Config("features need at least one channel".into()));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Config(format!("feature rate must be positive, got {rate}")));
        }
        if values.len() % n_channels != 0 {
            return Err(dim_err!(
                "{} values do not form whole frames of {n_channels}",
                values.len()
            ));
        }
        if values.is_empty() {
            return Err(Error::EmptySequence("feature sequence has no frames".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("feature sequence contains non-finite values".into()));
        }
        Ok(Self {
            n_channels,
            rate,
            values,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.values.len() / self.n_channels
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_channels..(m + 1) * self.n_channels]
    }

    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_frames() || len == 0 {
            return Err(Error::SequenceTooShort {
                needed: start + len.max(1),
                got: self.n_frames(),
            });
        }
        let f = self.n_channels;
        Self::new(f, self.rate, self.values[start * f..(start + len) * f].to_vec())
    }
}

/// Linear interpolation of every channel onto the frame grid of `target_fps`.
///
/// Output frame `j` sits at time `j / target_fps`; positions past the last
/// input frame are clamped to it. The output has
/// `round(M * target_fps / rate)` frames.
pub fn resample_features(a: &AudioFeatureSequence, target_fps: f64) -> Result<AudioFeatureSequence> {
    if !(target_fps > 0.0 && target_fps.is_finite()) {
        return Err(Error::Config(format!("target fps must be positive, got {target_fps}")));
    }
    if a.rate == target_fps {
        return Ok(a.clone());
    }
    let m = a.n_frames();
    if m < 2 {
        return Err(Error::InsufficientFrames(m));
    }
    let out_len = ((m as f64) * target_fps / a.rate).round() as usize;
    if out_len == 0 {
        return Err(Error::InsufficientFrames(m));
    }
    let f = a.n_channels;
    let step = a.rate / target_fps;
    let mut values = Vec::with_capacity(out_len * f);
    for j in 0..out_len {
        let pos = j as f64 * step;
        let lo = pos.floor() as usize;
        if lo + 1 >= m {
            values.extend_from_slice(a.frame(m - 1));
        } else {
            let frac = pos - lo as f64;
            let (x0, x1) = (a.frame(lo), a.frame(lo + 1));
            values.extend(x0.iter().zip(x1).map(|(&u, &v)| (1.0 - frac) * u + frac * v));
        }
    }
    AudioFeatureSequence::new(f, target_fps, values)
}

pub fn write_afea(path: &Path, a: &AudioFeatureSequence) -> Result<()> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(to_u32(a.n_frames(), "frame count")?);
    w.u32(to_u32(a.n_channels(), "channel count")?);
    w.f64(a.rate());
    w.f64s(a.values());
    write_file(path, &w.buf)
}

pub fn read_afea(path: &Path) -> Result<AudioFeatureSequence> {
    let bytes = read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(MAGIC)?;
    let at = r.pos();
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(at, format!("unsupported version {version}")));
    }
    let m = r.u32()? as usize;
    let at = r.pos();
    let f = r.u32()? as usize;
    if f == 0 {
        return Err(r.error(at, "channel count is zero"));
    }
    let at = r.pos();
    let rate = r.f64()?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(r.error(at, format!("rate must be positive, got {rate}")));
    }
    if m == 0 {
        return Err(Error::EmptySequence(format!("{} has zero frames", path.display())));
    }
    let values = r.f64s(m * f)?;
    r.finish()?;
    AudioFeatureSequence::new(f, rate, values)
}
