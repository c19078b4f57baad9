//! `3DFP` parameter container.
//!
//! Layout (little endian): magic `3DFP`, `u32` version, the network
//! configuration (`u32` latent channels, audio channels, down blocks, stride,
//! kernel size, vertices; `f64` fps; `u32` time-embedding width, diffusion
//! steps, schedule code), `u32` style count and ids, then `u32` tensor count
//! and per tensor: `u32`-prefixed UTF-8 name, `u32` rank, `u32` dims, and the
//! `f64` values.

use std::path::Path;

use super::{DenoiserParams, NetworkConfig};
use crate::data::binio::{read_file, to_u32, write_file, Reader, Writer};
use crate::diffusion::ScheduleKind;
use crate::error::Result;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"3DFP";
const VERSION: u32 = 1;

pub(crate) fn write_tensor(w: &mut Writer, name: &str, t: &Tensor) -> Result<()> {
    w.string(name);
    w.u32(to_u32(t.shape().len(), "rank")?);
    for &d in t.shape() {
        w.u32(to_u32(d, "dimension")?);
    }
    w.f64s(t.data());
    Ok(())
}

pub(crate) fn read_tensor(r: &mut Reader) -> Result<(String, Tensor)> {
    let name = r.string()?;
    let rank = r.u32()? as usize;
    let mut shape = Vec::with_capacity(rank.min(8));
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    let numel = shape.iter().product();
    let at = r.pos();
    let data = r.f64s(numel)?;
    let t = Tensor::new(shape, data).map_err(|e| r.error(at, e.to_string()))?;
    Ok((name, t))
}

pub(crate) fn write_config(w: &mut Writer, c: &NetworkConfig) -> Result<()> {
    w.u32(to_u32(c.latent_channels, "latent_channels")?);
    w.u32(to_u32(c.audio_channels_in, "audio_channels_in")?);
    w.u32(to_u32(c.num_down_blocks, "num_down_blocks")?);
    w.u32(to_u32(c.temporal_stride, "temporal_stride")?);
    w.u32(to_u32(c.kernel_size, "kernel_size")?);
    w.u32(to_u32(c.num_vertices, "num_vertices")?);
    w.f64(c.fps);
    w.u32(to_u32(c.time_embed_dim, "time_embed_dim")?);
    w.u32(to_u32(c.diffusion_steps, "diffusion_steps")?);
    w.u32(c.schedule.code());
    Ok(())
}

pub(crate) fn read_config(r: &mut Reader) -> Result<NetworkConfig> {
    let latent_channels = r.u32()? as usize;
    let audio_channels_in = r.u32()? as usize;
    let num_down_blocks = r.u32()? as usize;
    let temporal_stride = r.u32()? as usize;
    let kernel_size = r.u32()? as usize;
    let num_vertices = r.u32()? as usize;
    let fps = r.f64()?;
    let time_embed_dim = r.u32()? as usize;
    let diffusion_steps = r.u32()? as usize;
    let at = r.pos();
    let code = r.u32()?;
    let schedule =
        ScheduleKind::from_code(code).ok_or_else(|| r.error(at, format!("unknown schedule {code}")))?;
    Ok(NetworkConfig {
        latent_channels,
        audio_channels_in,
        num_down_blocks,
        temporal_stride,
        kernel_size,
        num_vertices,
        fps,
        time_embed_dim,
        diffusion_steps,
        schedule,
    })
}

pub(crate) fn encode_checkpoint(p: &DenoiserParams) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(VERSION);
    write_config(&mut w, p.config())?;
    w.u32(to_u32(p.style_ids().len(), "style count")?);
    for &id in p.style_ids() {
        w.u32(id);
    }
    w.u32(to_u32(p.tensors().len(), "tensor count")?);
    for (name, t) in p.tensors() {
        write_tensor(&mut w, name, t)?;
    }
    Ok(w.buf)
}

pub fn write_checkpoint(path: &Path, p: &DenoiserParams) -> Result<()> {
    write_file(path, &encode_checkpoint(p)?)
}

pub fn read_checkpoint(path: &Path) -> Result<DenoiserParams> {
    let bytes = read_file(path)?;
    decode_checkpoint(path, &bytes)
}

pub(crate) fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<DenoiserParams> {
    let mut r = Reader::new(path, bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let at = r.pos();
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(at, format!("unsupported version {version}")));
    }
    let config = read_config(&mut r)?;
    let n_styles = r.u32()? as usize;
    let mut style_ids = Vec::with_capacity(n_styles.min(1 << 16));
    for _ in 0..n_styles {
        style_ids.push(r.u32()?);
    }
    let n_tensors = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors.min(1 << 10));
    for _ in 0..n_tensors {
        tensors.push(read_tensor(&mut r)?);
    }
    r.finish()?;
    let end = r.pos();
    DenoiserParams::from_parts(config, style_ids, tensors).map_err(|e| r.error(end, e.to_string()))
}
