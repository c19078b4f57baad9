use crate::error::{dim_err, Error, Result};

/// Dynamic time warping between two trajectories stored row-major as
/// `len x k`. Per-frame cost is the Euclidean distance, steps are
/// `(1,0)`, `(0,1)`, `(1,1)`, and the path runs corner to corner. Returns
/// the accumulated cost of the optimal path divided by its length; among
/// equal-cost paths the shortest is taken.
pub fn dtw_distance(a: &[f64], b: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Contract("trajectory width must be positive".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("DTW needs non-empty trajectories".into()));
    }
    if a.len() % k != 0 || b.len() % k != 0 {
        return Err(dim_err!(
            "trajectory lengths {} and {} are not multiples of width {k}",
            a.len(),
            b.len()
        ));
    }
    let (na, nb) = (a.len() / k, b.len() / k);
    // (cost, path length) per cell, one row at a time.
    let mut prev: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); nb];
    let mut cur = prev.clone();
    for i in 0..na {
        let ai = &a[i * k..(i + 1) * k];
        for j in 0..nb {
            let c = frame_distance(ai, &b[j * k..(j + 1) * k]);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, usize::MAX);
                if i > 0 {
                    best = better(best, prev[j]);
                }
                if j > 0 {
                    best = better(best, cur[j - 1]);
                }
                if i > 0 && j > 0 {
                    best = better(best, prev[j - 1]);
                }
                best
            };
            cur[j] = (best.0 + c, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, len) = prev[nb - 1];
    Ok(cost / len as f64)
}

fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

pub(crate) fn frame_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
