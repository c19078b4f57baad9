//! Slice-level forward and adjoint kernels. Shapes are validated by the
//! caller; everything here assumes consistent sizes.

const MR: usize = 4;
const NR: usize = 8;

/// `C = A B (+ bias per column)` for row-major `A: m x k`, `B: k x n`.
/// Every entry is accumulated over `p = 0..k` in order and the bias added
/// last, so the result does not depend on the blocking.
pub(crate) fn gemm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize, bias: Option<&[f64]>) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in (0..m).step_by(MR) {
        let mr = MR.min(m - i);
        for j in (0..n).step_by(NR) {
            let nr = NR.min(n - j);
            let acc = if mr == MR && nr == NR {
                let rows = std::array::from_fn(|r| &a[(i + r) * k..(i + r + 1) * k]);
                block_full(rows, &b[j..], n, k)
            } else {
                let mut acc = [[0.0f64; NR]; MR];
                for p in 0..k {
                    let brow = &b[p * n + j..p * n + j + nr];
                    for (r, accr) in acc.iter_mut().enumerate().take(mr) {
                        let av = a[(i + r) * k + p];
                        for l in 0..nr {
                            accr[l] += av * brow[l];
                        }
                    }
                }
                acc
            };
            for (r, accr) in acc.iter().enumerate().take(mr) {
                let row = &mut c[(i + r) * n + j..(i + r) * n + j + nr];
                for l in 0..nr {
                    row[l] = accr[l] + bias.map_or(0.0, |b| b[j + l]);
                }
            }
        }
    }
    c
}

/// Full `MR x NR` tile; `b` starts at the tile's first column.
#[inline(always)]
fn block_full(a: [&[f64]; MR], b: &[f64], n: usize, k: usize) -> [[f64; NR]; MR] {
    for row in &a {
        assert_eq!(row.len(), k);
    }
    let mut acc = [[0.0f64; NR]; MR];
    for p in 0..k {
        let brow: &[f64; NR] = b[p * n..p * n + NR].try_into().expect("block width");
        for r in 0..MR {
            let av = a[r][p];
            for l in 0..NR {
                acc[r][l] += av * brow[l];
            }
        }
    }
    acc
}

/// `y = x W + b` for `x: rows x cin`, `W: cin x cout`.
pub(crate) fn linear_fwd(
    x: &[f64],
    rows: usize,
    cin: usize,
    w: &[f64],
    cout: usize,
    b: Option<&[f64]>,
) -> Vec<f64> {
    gemm(x, rows, cin, w, cout, b)
}

/// Returns `(dx, dw, db)` for `y = x W + b`.
pub(crate) fn linear_bwd(
    dy: &[f64],
    x: &[f64],
    rows: usize,
    cin: usize,
    w: &[f64],
    cout: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dx = gemm(dy, rows, cout, &transpose(w, cin, cout), cin, None);
    let dw = gemm(&transpose(x, rows, cin), cin, rows, dy, cout, None);
    let mut db = vec![0.0; cout];
    for dyr in dy.chunks_exact(cout) {
        for (o, &g) in db.iter_mut().zip(dyr) {
            *o += g;
        }
    }
    (dx, dw, db)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub width: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Output positions `n` for which tap `kk` reads an in-bounds input.
    fn valid_range(&self, kk: usize) -> (usize, usize) {
        let (s, p, n_in) = (self.stride as isize, self.pad as isize, self.len_in as isize);
        let off = kk as isize - p;
        // n*s + off >= 0  and  n*s + off <= n_in - 1
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi_incl = (n_in - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, self.len_out as isize);
        (lo as usize, (hi as usize).max(lo as usize))
    }
}

/// Unrolled input windows, `[len_out, cin * width]`: row `n` holds
/// `x[ci, n * stride + kk - pad]` (zero outside) at column `ci * width + kk`.
fn im2col(x: &[f64], g: ConvGeom) -> Vec<f64> {
    let cols = g.cin * g.width;
    let mut out = vec![0.0; g.len_out * cols];
    for ci in 0..g.cin {
        let xr = &x[ci * g.len_in..(ci + 1) * g.len_in];
        for kk in 0..g.width {
            let (lo, hi) = g.valid_range(kk);
            let col = ci * g.width + kk;
            for n in lo..hi {
                out[n * cols + col] = xr[n * g.stride + kk - g.pad];
            }
        }
    }
    out
}

/// Adjoint of [`im2col`].
fn col2im(cols_grad: &[f64], g: ConvGeom) -> Vec<f64> {
    let cols = g.cin * g.width;
    let mut dx = vec![0.0; g.cin * g.len_in];
    for ci in 0..g.cin {
        let dxr = &mut dx[ci * g.len_in..(ci + 1) * g.len_in];
        for kk in 0..g.width {
            let (lo, hi) = g.valid_range(kk);
            let col = ci * g.width + kk;
            for n in lo..hi {
                dxr[n * g.stride + kk - g.pad] += cols_grad[n * cols + col];
            }
        }
    }
    dx
}

/// Cross-correlation `y[co, n] = b[co] + sum k[co, ci, kk] x[ci, n*s + kk - p]`,
/// computed as a matrix product over unrolled windows.
pub(crate) fn conv1d_fwd(x: &[f64], k: &[f64], b: Option<&[f64]>, g: ConvGeom) -> Vec<f64> {
    let cols = g.cin * g.width;
    let kt = transpose(k, g.cout, cols);
    let y = linear_fwd(&im2col(x, g), g.len_out, cols, &kt, g.cout, b);
    transpose(&y, g.len_out, g.cout)
}

/// Returns `(dx, dk, db)`.
pub(crate) fn conv1d_bwd(dy: &[f64], x: &[f64], k: &[f64], g: ConvGeom) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let cols = g.cin * g.width;
    let kt = transpose(k, g.cout, cols);
    let dy_t = transpose(dy, g.cout, g.len_out);
    let (dcols, dkt, db) = linear_bwd(&dy_t, &im2col(x, g), g.len_out, cols, &kt, g.cout);
    (col2im(&dcols, g), transpose(&dkt, cols, g.cout), db)
}

/// Source taps for linear upsampling: output frame `j` reads
/// `(1 - frac) * x[lo] + frac * x[lo + 1]`, or `x[n - 1]` past the end.
fn upsample_taps(len_in: usize, factor: usize) -> impl Iterator<Item = (usize, f64)> {
    (0..len_in * factor).map(move |j| (j / factor, (j % factor) as f64 / factor as f64))
}

pub(crate) fn upsample_fwd(x: &[f64], channels: usize, len_in: usize, factor: usize) -> Vec<f64> {
    let len_out = len_in * factor;
    let mut y = vec![0.0; channels * len_out];
    for c in 0..channels {
        let xr = &x[c * len_in..(c + 1) * len_in];
        let yr = &mut y[c * len_out..(c + 1) * len_out];
        for (yo, (lo, frac)) in yr.iter_mut().zip(upsample_taps(len_in, factor)) {
            *yo = if lo + 1 >= len_in {
                xr[len_in - 1]
            } else {
                (1.0 - frac) * xr[lo] + frac * xr[lo + 1]
            };
        }
    }
    y
}

pub(crate) fn upsample_bwd(dy: &[f64], channels: usize, len_in: usize, factor: usize) -> Vec<f64> {
    let len_out = len_in * factor;
    let mut dx = vec![0.0; channels * len_in];
    for c in 0..channels {
        let dyr = &dy[c * len_out..(c + 1) * len_out];
        let dxr = &mut dx[c * len_in..(c + 1) * len_in];
        for (&d, (lo, frac)) in dyr.iter().zip(upsample_taps(len_in, factor)) {
            if lo + 1 >= len_in {
                dxr[len_in - 1] += d;
            } else {
                dxr[lo] += (1.0 - frac) * d;
                dxr[lo + 1] += frac * d;
            }
        }
    }
    dx
}

pub(crate) fn avg_pool_fwd(x: &[f64], channels: usize, len_in: usize, stride: usize) -> Vec<f64> {
    let len_out = len_in / stride;
    let inv = 1.0 / stride as f64;
    let mut y = vec![0.0; channels * len_out];
    for c in 0..channels {
        let xr = &x[c * len_in..(c + 1) * len_in];
        for (j, yo) in y[c * len_out..(c + 1) * len_out].iter_mut().enumerate() {
            *yo = xr[j * stride..(j + 1) * stride].iter().sum::<f64>() * inv;
        }
    }
    y
}

pub(crate) fn avg_pool_bwd(dy: &[f64], channels: usize, len_in: usize, stride: usize) -> Vec<f64> {
    let len_out = len_in / stride;
    let inv = 1.0 / stride as f64;
    let mut dx = vec![0.0; channels * len_in];
    for c in 0..channels {
        for j in 0..len_out {
            let d = dy[c * len_out + j] * inv;
            dx[c * len_in + j * stride..c * len_in + (j + 1) * stride].fill(d);
        }
    }
    dx
}

pub(crate) fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            y[c * rows + r] = x[r * cols + c];
        }
    }
    y
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
