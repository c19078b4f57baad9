use crate::data::MotionSequence;
use crate::error::{dim_err, Result};
use crate::tensor::{Graph, Tensor, Var};

fn check(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<()> {
    if !x0.same_shape(x0_hat) {
        return Err(dim_err!(
            "loss operands are {}x{} and {}x{}",
            x0.n_frames(),
            x0.dim(),
            x0_hat.n_frames(),
            x0_hat.dim()
        ));
    }
    Ok(())
}

/// Mean squared error over all entries.
pub fn l_simple(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<f64> {
    check(x0, x0_hat)?;
    let n = x0.values().len().max(1) as f64;
    Ok(x0
        .values()
        .iter()
        .zip(x0_hat.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Mean squared error between consecutive-frame differences. Sequences with
/// fewer than two frames have no velocity and score 0.
pub fn l_vel(x0: &MotionSequence, x0_hat: &MotionSequence) -> Result<f64> {
    check(x0, x0_hat)?;
    let (n, d) = (x0.n_frames(), x0.dim());
    if n < 2 {
        log::warn!("velocity loss on a {n}-frame sequence is 0");
        return Ok(0.0);
    }
    let (a, b) = (x0.values(), x0_hat.values());
    let total: f64 = (d..n * d)
        .map(|i| {
            let e = (b[i] - a[i]) - (b[i - d] - a[i - d]);
            e * e
        })
        .sum();
    Ok(total / ((n - 1) * d) as f64)
}

pub fn l_total(x0: &MotionSequence, x0_hat: &MotionSequence, lambda_vel: f64) -> Result<f64> {
    Ok(l_simple(x0, x0_hat)? + lambda_vel * l_vel(x0, x0_hat)?)
}

/// Loss nodes recorded on a graph.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub simple: Var,
    pub vel: Option<Var>,
    pub total: Var,
}

/// Record the training objective for a `[N, D*3]` prediction against `x0`.
pub fn loss_graph(g: &mut Graph<'_>, pred: Var, x0: &MotionSequence, lambda_vel: f64) -> Result<LossVars> {
    let target = g.constant(Tensor::new(vec![x0.n_frames(), x0.dim()], x0.values().to_vec())?);
    let err = g.sub(pred, target)?;
    let simple = g.mean_square(err)?;
    if x0.n_frames() < 2 {
        log::warn!("velocity loss on a {}-frame sequence is 0", x0.n_frames());
        return Ok(LossVars {
            simple,
            vel: None,
            total: simple,
        });
    }
    let verr = g.frame_diff(err)?;
    let vel = g.mean_square(verr)?;
    let weighted = g.scale(vel, lambda_vel)?;
    let total = g.add(simple, weighted)?;
    Ok(LossVars {
        simple,
        vel: Some(vel),
        total,
    })
}
