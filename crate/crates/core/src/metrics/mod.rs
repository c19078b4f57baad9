//! Evaluation: warping-tolerant lip synchronization, per-region vertex
//! errors, sample diversity and the guidance sweep.

mod dtw;
mod report;
mod sweep;

pub use dtw::dtw_distance;
pub use report::{evaluate_pair, MetricReport, SequenceMetrics};
pub use sweep::{guidance_grid, guidance_sweep, write_sweep_csv, SweepConfig, SweepRow};

use crate::data::{MotionSequence, TemplateMesh};
use crate::error::{dim_err, Error, Result};
use dtw::frame_distance;

fn check_pair(pred: &MotionSequence, gt: &MotionSequence) -> Result<()> {
    if !pred.same_shape(gt) {
        return Err(dim_err!(
            "prediction is {}x{} vertices, ground truth {}x{}",
            pred.n_frames(),
            pred.n_vertices(),
            gt.n_frames(),
            gt.n_vertices()
        ));
    }
    if pred.n_frames() == 0 {
        return Err(Error::EmptySequence("nothing to evaluate".into()));
    }
    Ok(())
}

fn check_indices(m: &MotionSequence, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Contract("empty vertex selection".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&v| v >= m.n_vertices()) {
        return Err(dim_err!("vertex {bad} outside a {}-vertex mesh", m.n_vertices()));
    }
    Ok(())
}

/// Rows of `m` restricted to `indices`, concatenated as `N x 3K`.
pub fn region_trajectory(m: &MotionSequence, indices: &[usize]) -> Vec<f64> {
    (0..m.n_frames())
        .flat_map(|n| indices.iter().flat_map(move |&v| m.vertex(n, v)))
        .collect()
}

fn vertex_distance(a: &MotionSequence, b: &MotionSequence, n: usize, v: usize) -> f64 {
    frame_distance(&a.vertex(n, v), &b.vertex(n, v))
}

/// DTW distance between the lip-vertex trajectories.
pub fn lip_sync(pred: &MotionSequence, gt: &MotionSequence, mesh: &TemplateMesh) -> Result<f64> {
    check_pair(pred, gt)?;
    let lips = mesh.lip_indices();
    check_indices(pred, lips)?;
    dtw_distance(
        &region_trajectory(pred, lips),
        &region_trajectory(gt, lips),
        3 * lips.len(),
    )
}

/// Mean over frames of the largest lip-vertex distance.
pub fn lip_max(pred: &MotionSequence, gt: &MotionSequence, mesh: &TemplateMesh) -> Result<f64> {
    check_pair(pred, gt)?;
    let lips = mesh.lip_indices();
    check_indices(pred, lips)?;
    let total: f64 = (0..pred.n_frames())
        .map(|n| {
            lips.iter()
                .map(|&v| vertex_distance(pred, gt, n, v))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / pred.n_frames() as f64)
}

/// Mean per-vertex Euclidean distance over frames and the selected vertices.
pub fn l2_region(pred: &MotionSequence, gt: &MotionSequence, indices: &[usize]) -> Result<f64> {
    check_pair(pred, gt)?;
    check_indices(pred, indices)?;
    let total: f64 = (0..pred.n_frames())
        .flat_map(|n| indices.iter().map(move |&v| (n, v)))
        .map(|(n, v)| vertex_distance(pred, gt, n, v))
        .sum();
    Ok(total / (pred.n_frames() * indices.len()) as f64)
}

/// Mean over unordered sample pairs of the average per-vertex distance.
pub fn div_e(samples: &[MotionSequence]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::Contract(format!(
            "diversity needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let all: Vec<usize> = (0..samples[0].n_vertices()).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            total += l2_region(&samples[i], &samples[j], &all)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Spearman rank correlation with average ranks for ties. Returns `NaN` when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(dim_err!("spearman needs two equal series of length >= 2"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            r[o] = avg;
        }
        i = j + 1;
    }
    r
}
