use std::path::Path;

use super::binio::{read_file, to_u32, write_file, Reader, Writer};
use crate::error::{dim_err, Error, Result};

const MAGIC: &[u8; 4] = b"MSEQ";
const VERSION: u32 = 1;

/// `N` frames of per-vertex 3D displacements, stored row-major as
/// `N x (D * 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    n_vertices: usize,
    fps: f64,
    values: Vec<f64>,
}

impl MotionSequence {
    pub fn new(n_vertices: usize, fps: f64, values: Vec<f64>) -> Result<Self> {
        if n_vertices == 0 {
            return Err(Error::Config("motion needs at least one vertex".into()));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {fps}")));
        }
        let dim = n_vertices * 3;
        if values.len() % dim != 0 {
            return Err(dim_err!(
                "{} values do not form whole frames of {dim}",
                values.len()
            ));
        }
        if values.is_empty() {
            return Err(Error::EmptySequence("motion sequence has no frames".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("motion sequence contains non-finite values".into()));
        }
        Ok(Self {
            n_vertices,
            fps,
            values,
        })
    }

    pub fn zeros(n_frames: usize, n_vertices: usize, fps: f64) -> Result<Self> {
        Self::new(n_vertices, fps, vec![0.0; n_frames * n_vertices * 3])
    }

    pub fn n_frames(&self) -> usize {
        self.values.len() / self.dim()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// Values per frame, `D * 3`.
    pub fn dim(&self) -> usize {
        self.n_vertices * 3
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        let d = self.dim();
        &self.values[n * d..(n + 1) * d]
    }

    pub fn frame_mut(&mut self, n: usize) -> &mut [f64] {
        let d = self.dim();
        &mut self.values[n * d..(n + 1) * d]
    }

    /// Displacement of vertex `v` in frame `n`.
    pub fn vertex(&self, n: usize, v: usize) -> [f64; 3] {
        let f = self.frame(n);
        [f[3 * v], f[3 * v + 1], f[3 * v + 2]]
    }

    /// Frames `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_frames() || len == 0 {
            return Err(Error::SequenceTooShort {
                needed: start + len.max(1),
                got: self.n_frames(),
            });
        }
        let d = self.dim();
        Self::new(
            self.n_vertices,
            self.fps,
            self.values[start * d..(start + len) * d].to_vec(),
        )
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_vertices == other.n_vertices && self.values.len() == other.values.len()
    }
}

pub fn write_mseq(path: &Path, m: &MotionSequence) -> Result<()> {
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(to_u32(m.n_frames(), "frame count")?);
    w.u32(to_u32(m.n_vertices(), "vertex count")?);
    w.f64(m.fps());
    w.f64s(m.values());
    write_file(path, &w.buf)
}

pub fn read_mseq(path: &Path) -> Result<MotionSequence> {
    let bytes = read_file(path)?;
    parse_mseq(path, &bytes)
}

pub(crate) fn parse_mseq(path: &Path, bytes: &[u8]) -> Result<MotionSequence> {
    let mut r = Reader::new(path, bytes);
    r.magic(MAGIC)?;
    let at = r.pos();
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(at, format!("unsupported version {version}")));
    }
    let n = r.u32()? as usize;
    let at = r.pos();
    let d = r.u32()? as usize;
    if d == 0 {
        return Err(r.error(at, "vertex count is zero"));
    }
    let at = r.pos();
    let fps = r.f64()?;
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(r.error(at, format!("fps must be positive, got {fps}")));
    }
    if n == 0 {
        return Err(Error::EmptySequence(format!("{} has zero frames", path.display())));
    }
    let values = r.f64s(n * d * 3)?;
    r.finish()?;
    MotionSequence::new(d, fps, values)
}
