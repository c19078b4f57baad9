use std::borrow::Cow;

use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{dim_err, Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
        rows: usize,
    },
    Conv1d {
        x: usize,
        k: usize,
        b: Option<usize>,
        geom: ConvGeom,
    },
    Upsample {
        x: usize,
        factor: usize,
    },
    AvgPool {
        x: usize,
        stride: usize,
    },
    Concat {
        a: usize,
        b: usize,
    },
    Silu {
        x: usize,
    },
    Transpose {
        x: usize,
    },
    AddChannelBias {
        x: usize,
        v: usize,
    },
    SelectRow {
        table: usize,
        row: usize,
    },
    CropRows {
        x: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Sub {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: f64,
    },
    MeanSquare {
        x: usize,
    },
    FrameDiff {
        x: usize,
    },
    Sum {
        x: usize,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Execution tape. Every op appends one node; `backward` replays the nodes in
/// reverse order, accumulating adjoints additively into each input.
///
/// Leaves may borrow their storage, so parameters are not copied per forward.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Adjoints of every leaf that requires a gradient.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Owned constant (no gradient).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(Cow::Owned(t), false)
    }

    /// Borrowed constant (no gradient).
    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(t), false)
    }

    /// Borrowed trainable leaf.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(t), true)
    }

    /// Owned trainable leaf.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push_leaf(Cow::Owned(t), true)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        value.check_finite("forward value")?;
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn val(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    /// `y = x W + b` over the last axis of `x`; leading axes are flattened.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.val(x.0), self.val(w.0));
        if wv.shape().len() != 2 {
            return Err(dim_err!("linear weight must be 2-D, got {:?}", wv.shape()));
        }
        let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
        if xv.inner_dim() != cin || xv.shape().is_empty() {
            return Err(dim_err!(
                "linear input {:?} does not match weight {:?}",
                xv.shape(),
                wv.shape()
            ));
        }
        let bias = match b {
            Some(b) => {
                let bv = self.val(b.0);
                if bv.shape() != [cout] {
                    return Err(dim_err!("linear bias {:?}, expected [{cout}]", bv.shape()));
                }
                Some(bv.data())
            }
            None => None,
        };
        let rows = xv.numel() / cin;
        let y = kernels::linear_fwd(xv.data(), rows, cin, wv.data(), cout, bias);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = cout;
        let mut inputs = vec![x.0, w.0];
        inputs.extend(b.map(|b| b.0));
        self.push(
            Tensor::new(shape, y)?,
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                rows,
            },
            &inputs,
        )
    }

    /// Cross-correlation of `x: [C, N]` with `k: [Cout, C, K]` along time,
    /// zero padding `pad` on both ends.
    pub fn conv1d(
        &mut self,
        x: Var,
        k: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (xv, kv) = (self.val(x.0), self.val(k.0));
        if xv.shape().len() != 2 || kv.shape().len() != 3 {
            return Err(dim_err!(
                "conv1d expects x [C, N] and k [Cout, C, K], got {:?} and {:?}",
                xv.shape(),
                kv.shape()
            ));
        }
        let (cin, len_in) = (xv.shape()[0], xv.shape()[1]);
        let (cout, kc, width) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
        if kc != cin {
            return Err(dim_err!("conv1d kernel expects {kc} channels, input has {cin}"));
        }
        if stride == 0 {
            return Err(Error::Config("conv1d stride must be positive".into()));
        }
        let span = len_in + 2 * pad;
        if span < width {
            return Err(Error::SequenceTooShort {
                needed: width.saturating_sub(2 * pad),
                got: len_in,
            });
        }
        let len_out = (span - width) / stride + 1;
        let bias = match b {
            Some(b) => {
                let bv = self.val(b.0);
                if bv.shape() != [cout] {
                    return Err(dim_err!("conv1d bias {:?}, expected [{cout}]", bv.shape()));
                }
                Some(bv.data())
            }
            None => None,
        };
        let geom = ConvGeom {
            cin,
            cout,
            width,
            len_in,
            len_out,
            stride,
            pad,
        };
        let y = kernels::conv1d_fwd(xv.data(), kv.data(), bias, geom);
        let mut inputs = vec![x.0, k.0];
        inputs.extend(b.map(|b| b.0));
        self.push(
            Tensor::new(vec![cout, len_out], y)?,
            Op::Conv1d {
                x: x.0,
                k: k.0,
                b: b.map(|b| b.0),
                geom,
            },
            &inputs,
        )
    }

    /// Linear interpolation along time of `x: [C, N]`, replicating the last frame.
    pub fn upsample_linear(&mut self, x: Var, factor: usize) -> Result<Var> {
        let xv = self.val(x.0);
        if factor == 0 {
            return Err(Error::Config("upsample factor must be >= 1".into()));
        }
        let (c, n) = channels_time(xv)?;
        let y = kernels::upsample_fwd(xv.data(), c, n, factor);
        self.push(
            Tensor::new(vec![c, n * factor], y)?,
            Op::Upsample { x: x.0, factor },
            &[x.0],
        )
    }

    /// Non-overlapping mean over windows of `stride` frames; `N` must divide.
    pub fn avg_pool(&mut self, x: Var, stride: usize) -> Result<Var> {
        let xv = self.val(x.0);
        let (c, n) = channels_time(xv)?;
        if stride == 0 || n % stride != 0 {
            return Err(dim_err!("avg_pool stride {stride} does not divide length {n}"));
        }
        let y = kernels::avg_pool_fwd(xv.data(), c, n, stride);
        self.push(
            Tensor::new(vec![c, n / stride], y)?,
            Op::AvgPool { x: x.0, stride },
            &[x.0],
        )
    }

    /// Stack `[Ca, N]` and `[Cb, N]` into `[Ca + Cb, N]`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.val(a.0), self.val(b.0));
        let (ca, na) = channels_time(av)?;
        let (cb, nb) = channels_time(bv)?;
        if na != nb {
            return Err(dim_err!("concat_channels temporal mismatch: {na} vs {nb}"));
        }
        let mut data = Vec::with_capacity((ca + cb) * na);
        data.extend_from_slice(av.data());
        data.extend_from_slice(bv.data());
        self.push(
            Tensor::new(vec![ca + cb, na], data)?,
            Op::Concat { a: a.0, b: b.0 },
            &[a.0, b.0],
        )
    }

    /// SiLU, `x * sigmoid(x)`.
    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x.0);
        let data = xv.data().iter().map(|&v| v * kernels::sigmoid(v)).collect();
        self.push(Tensor::new(xv.shape().to_vec(), data)?, Op::Silu { x: x.0 }, &[x.0])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x.0);
        let (r, c) = channels_time(xv)?;
        let data = kernels::transpose(xv.data(), r, c);
        self.push(Tensor::new(vec![c, r], data)?, Op::Transpose { x: x.0 }, &[x.0])
    }

    /// `x: [C, N] + v: [C]` broadcast over time.
    pub fn add_channel_bias(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xv, vv) = (self.val(x.0), self.val(v.0));
        let (c, n) = channels_time(xv)?;
        if vv.numel() != c {
            return Err(dim_err!("channel bias has {} values for {c} channels", vv.numel()));
        }
        let mut data = xv.data().to_vec();
        for (row, &b) in data.chunks_exact_mut(n).zip(vv.data()) {
            for y in row {
                *y += b;
            }
        }
        self.push(
            Tensor::new(vec![c, n], data)?,
            Op::AddChannelBias { x: x.0, v: v.0 },
            &[x.0, v.0],
        )
    }

    /// Row `row` of a `[R, C]` table as a `[C]` vector.
    pub fn select_row(&mut self, table: Var, row: usize) -> Result<Var> {
        let tv = self.val(table.0);
        let (r, c) = channels_time(tv)?;
        if row >= r {
            return Err(dim_err!("row {row} out of range for table with {r} rows"));
        }
        let data = tv.data()[row * c..(row + 1) * c].to_vec();
        self.push(
            Tensor::new(vec![c], data)?,
            Op::SelectRow {
                table: table.0,
                row,
            },
            &[table.0],
        )
    }

    /// Keep the first `rows` rows of `x: [R, C]`.
    pub fn crop_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let xv = self.val(x.0);
        let (r, c) = channels_time(xv)?;
        if rows > r {
            return Err(dim_err!("cannot crop {r} rows to {rows}"));
        }
        if rows == r {
            return Ok(x);
        }
        let data = xv.data()[..rows * c].to_vec();
        self.push(Tensor::new(vec![rows, c], data)?, Op::CropRows { x: x.0 }, &[x.0])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.zip_same(a, b, |x, y| x + y)?;
        let shape = self.val(a.0).shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::Add { a: a.0, b: b.0 }, &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.zip_same(a, b, |x, y| x - y)?;
        let shape = self.val(a.0).shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::Sub { a: a.0, b: b.0 }, &[a.0, b.0])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let xv = self.val(x.0);
        let data = xv.data().iter().map(|v| v * c).collect();
        self.push(Tensor::new(xv.shape().to_vec(), data)?, Op::Scale { x: x.0, c }, &[x.0])
    }

    /// Scalar mean of squared entries.
    pub fn mean_square(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x.0);
        if xv.numel() == 0 {
            return Err(Error::EmptySequence("mean_square of empty tensor".into()));
        }
        let m = xv.data().iter().map(|v| v * v).sum::<f64>() / xv.numel() as f64;
        self.push(Tensor::scalar(m), Op::MeanSquare { x: x.0 }, &[x.0])
    }

    /// `[N, C] -> [N-1, C]`, row `n` holding `x[n+1] - x[n]`.
    pub fn frame_diff(&mut self, x: Var) -> Result<Var> {
        let xv = self.val(x.0);
        let (n, c) = channels_time(xv)?;
        if n < 2 {
            return Err(Error::SequenceTooShort { needed: 2, got: n });
        }
        let d = xv.data();
        let data = (c..n * c).map(|i| d[i] - d[i - c]).collect();
        self.push(Tensor::new(vec![n - 1, c], data)?, Op::FrameDiff { x: x.0 }, &[x.0])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.val(x.0).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x: x.0 }, &[x.0])
    }

    fn zip_same(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let (av, bv) = (self.val(a.0), self.val(b.0));
        if av.shape() != bv.shape() {
            return Err(dim_err!(
                "elementwise shape mismatch {:?} vs {:?}",
                av.shape(),
                bv.shape()
            ));
        }
        Ok(av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.val(loss.0);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if self.nodes[..=loss.0].iter().all(|n| matches!(n.op, Op::Leaf)) {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, dy, &mut grads)?;
        }
        for g in grads.iter().flatten() {
            g.check_finite("gradient")?;
        }
        Ok(Gradients { grads })
    }

    fn propagate(
        &self,
        op: &Op,
        y: &Tensor,
        dy: Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        match *op {
            Op::Leaf => {}
            Op::Linear { x, w, b, rows } => {
                let (xv, wv) = (self.val(x), self.val(w));
                let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
                let (dx, dw, db) =
                    kernels::linear_bwd(dy.data(), xv.data(), rows, cin, wv.data(), cout);
                self.acc(grads, x, dx)?;
                self.acc(grads, w, dw)?;
                if let Some(b) = b {
                    self.acc(grads, b, db)?;
                }
            }
            Op::Conv1d { x, k, b, geom } => {
                let (dx, dk, db) =
                    kernels::conv1d_bwd(dy.data(), self.val(x).data(), self.val(k).data(), geom);
                self.acc(grads, x, dx)?;
                self.acc(grads, k, dk)?;
                if let Some(b) = b {
                    self.acc(grads, b, db)?;
                }
            }
            Op::Upsample { x, factor } => {
                let (c, n) = channels_time(self.val(x))?;
                self.acc(grads, x, kernels::upsample_bwd(dy.data(), c, n, factor))?;
            }
            Op::AvgPool { x, stride } => {
                let (c, n) = channels_time(self.val(x))?;
                self.acc(grads, x, kernels::avg_pool_bwd(dy.data(), c, n, stride))?;
            }
            Op::Concat { a, b } => {
                let split = self.val(a).numel();
                let mut da = dy.into_data();
                let db = da.split_off(split);
                self.acc(grads, a, da)?;
                self.acc(grads, b, db)?;
            }
            Op::Silu { x } => {
                let dx = self
                    .val(x)
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&v, &g)| {
                        let s = kernels::sigmoid(v);
                        g * (s + v * s * (1.0 - s))
                    })
                    .collect();
                self.acc(grads, x, dx)?;
            }
            Op::Transpose { x } => {
                let (r, c) = channels_time(self.val(x))?;
                self.acc(grads, x, kernels::transpose(dy.data(), c, r))?;
            }
            Op::AddChannelBias { x, v } => {
                let n = y.shape()[1];
                let dv = dy.data().chunks_exact(n).map(|row| row.iter().sum()).collect();
                self.acc(grads, v, dv)?;
                self.acc(grads, x, dy.into_data())?;
            }
            Op::SelectRow { table, row } => {
                let tv = self.val(table);
                let c = tv.shape()[1];
                let mut dt = vec![0.0; tv.numel()];
                dt[row * c..(row + 1) * c].copy_from_slice(dy.data());
                self.acc(grads, table, dt)?;
            }
            Op::CropRows { x } => {
                let mut dx = dy.into_data();
                dx.resize(self.val(x).numel(), 0.0);
                self.acc(grads, x, dx)?;
            }
            Op::Add { a, b } => {
                self.acc(grads, a, dy.data().to_vec())?;
                self.acc(grads, b, dy.into_data())?;
            }
            Op::Sub { a, b } => {
                self.acc(grads, b, dy.data().iter().map(|g| -g).collect())?;
                self.acc(grads, a, dy.into_data())?;
            }
            Op::Scale { x, c } => {
                self.acc(grads, x, dy.data().iter().map(|g| g * c).collect())?;
            }
            Op::MeanSquare { x } => {
                let xv = self.val(x);
                let k = 2.0 * dy.data()[0] / xv.numel() as f64;
                self.acc(grads, x, xv.data().iter().map(|v| k * v).collect())?;
            }
            Op::FrameDiff { x } => {
                let xv = self.val(x);
                let c = xv.shape()[1];
                let mut dx = vec![0.0; xv.numel()];
                for (i, &g) in dy.data().iter().enumerate() {
                    dx[i + c] += g;
                    dx[i] -= g;
                }
                self.acc(grads, x, dx)?;
            }
            Op::Sum { x } => {
                let g = dy.data()[0];
                self.acc(grads, x, vec![g; self.val(x).numel()])?;
            }
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor>], idx: usize, delta: Vec<f64>) -> Result<()> {
        let node = &self.nodes[idx];
        if !node.requires_grad {
            return Ok(());
        }
        let delta = Tensor::new(node.value.shape().to_vec(), delta)?;
        match &mut grads[idx] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
        Ok(())
    }
}

fn channels_time(t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [c, n] => Ok((c, n)),
        _ => Err(dim_err!("expected a 2-D tensor, got {:?}", t.shape())),
    }
}
