use crate::error::{Error, Result};

/// Sinusoidal encoding of diffusion step `t`: interleaved `sin`/`cos` pairs
/// over geometric frequencies `10000^(-i / (dim/2))`.
pub fn sinusoidal_embedding(t: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!("embedding width must be even, got {dim}")));
    }
    let half = dim / 2;
    let mut e = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let arg = t as f64 * freq;
        e.push(arg.sin());
        e.push(arg.cos());
    }
    Ok(e)
}
