//! Adam with bias correction, plus the `3DFA` optimizer-state container
//! that makes resumed training bit-identical to an uninterrupted run.
//!
//! State layout (little endian): magic `3DFA`, `u32` version, `u64` step,
//! `u32` tensor count, then per parameter tensor its name followed by the
//! first- and second-moment tensors.

use std::path::Path;

use crate::data::binio::{read_file, to_u32, write_file, Reader, Writer};
use crate::error::{dim_err, Error, Result};
use crate::net::checkpoint::{read_tensor, write_tensor};
use crate::net::DenoiserParams;
use crate::tensor::Tensor;

pub const STATE_MAGIC: &[u8; 4] = b"3DFA";
const VERSION: u32 = 1;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// One bias-corrected Adam update of `w` in place; `step` is 1-based.
pub fn adam_update(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], step: u64, lr: f64) {
    let c1 = 1.0 - BETA1.powf(step as f64);
    let c2 = 1.0 - BETA2.powf(step as f64);
    for i in 0..w.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        w[i] -= lr * mh / (vh.sqrt() + EPSILON);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    names: Vec<String>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &DenoiserParams) -> Self {
        let zeros = || {
            params
                .tensors()
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape()))
                .collect()
        };
        Self {
            names: params.tensors().iter().map(|(n, _)| n.clone()).collect(),
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    fn check_matches(&self, params: &DenoiserParams) -> Result<()> {
        let ok = self.names.len() == params.tensors().len()
            && self
                .names
                .iter()
                .zip(&self.m)
                .zip(params.tensors())
                .all(|((n, m), (pn, pt))| n == pn && m.shape() == pt.shape());
        if !ok {
            return Err(dim_err!("optimizer state does not match the parameter layout"));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = Writer::default();
        w.bytes(STATE_MAGIC);
        w.u32(VERSION);
        w.u64(self.step);
        w.u32(to_u32(self.names.len(), "tensor count")?);
        for ((name, m), v) in self.names.iter().zip(&self.m).zip(&self.v) {
            w.string(name);
            write_tensor(&mut w, "m", m)?;
            write_tensor(&mut w, "v", v)?;
        }
        write_file(path, &w.buf)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let mut r = Reader::new(path, &bytes);
        r.magic(STATE_MAGIC)?;
        let at = r.pos();
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(at, format!("unsupported version {version}")));
        }
        let step = r.u64()?;
        let n = r.u32()? as usize;
        let (mut names, mut m, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            names.push(r.string()?);
            let at = r.pos();
            let (_, mt) = read_tensor(&mut r)?;
            let (_, vt) = read_tensor(&mut r)?;
            if mt.shape() != vt.shape() {
                return Err(r.error(at, "moment shapes differ"));
            }
            m.push(mt);
            v.push(vt);
        }
        r.finish()?;
        Ok(Self { names, m, v, step })
    }
}

/// Apply one Adam step with gradients parallel to `params.tensors()`.
/// Non-finite gradients abort before anything is modified.
pub fn adam_step(params: &mut DenoiserParams, grads: &[Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    state.check_matches(params)?;
    if grads.len() != params.tensors().len() {
        return Err(dim_err!(
            "{} gradients for {} parameters",
            grads.len(),
            params.tensors().len()
        ));
    }
    for ((name, p), g) in params.tensors().iter().zip(grads) {
        if g.shape() != p.shape() {
            return Err(dim_err!("gradient of {name} is {:?}, parameter {:?}", g.shape(), p.shape()));
        }
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient {} at {name}[{i}] (optimizer step {})",
                g.data()[i],
                state.step + 1
            )));
        }
    }
    state.step += 1;
    for (i, ((_, p), g)) in params.tensors_mut().zip(grads).enumerate() {
        adam_update(
            p.data_mut(),
            g.data(),
            state.m[i].data_mut(),
            state.v[i].data_mut(),
            state.step,
            lr,
        );
    }
    Ok(())
}
