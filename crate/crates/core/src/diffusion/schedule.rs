use serde::{Deserialize, Serialize};

use crate::data::MotionSequence;
use crate::error::{dim_err, Error, Result};

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;
const LINEAR_BETA: (f64, f64) = (1e-4, 0.02);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Cosine,
    Linear,
}

impl ScheduleKind {
    pub(crate) fn code(self) -> u32 {
        match self {
            ScheduleKind::Cosine => 0,
            ScheduleKind::Linear => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ScheduleKind::Cosine),
            1 => Some(ScheduleKind::Linear),
            _ => None,
        }
    }
}

/// Variance schedule for steps `1..=T`, with the convention `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    kind: ScheduleKind,
    betas: Vec<f64>,
    /// `alpha_bars[t]` for `t` in `0..=T`.
    alpha_bars: Vec<f64>,
}

fn cosine_f(t: usize, steps: usize) -> f64 {
    let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
    (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

impl DiffusionSchedule {
    pub fn new(steps: usize, kind: ScheduleKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs T >= 1".into()));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Cosine => (1..=steps)
                .map(|t| (1.0 - cosine_f(t, steps) / cosine_f(t - 1, steps)).min(MAX_BETA))
                .collect(),
            ScheduleKind::Linear => {
                let (lo, hi) = LINEAR_BETA;
                if steps == 1 {
                    vec![lo]
                } else {
                    (0..steps)
                        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
                        .collect()
                }
            }
        };
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self {
            kind,
            betas,
            alpha_bars,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.beta(t)
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub(crate) fn check_step(&self, t: usize, allow_zero: bool) -> Result<()> {
        if t > self.steps() || (t == 0 && !allow_zero) {
            return Err(Error::Contract(format!(
                "diffusion step {t} outside {}..={}",
                usize::from(!allow_zero),
                self.steps()
            )));
        }
        Ok(())
    }
}

/// Closed-form forward marginal `sqrt(ab_t) x0 + sqrt(1 - ab_t) eps`.
/// `t = 0` returns `x0`.
pub fn q_sample(
    schedule: &DiffusionSchedule,
    x0: &MotionSequence,
    t: usize,
    eps: &[f64],
) -> Result<MotionSequence> {
    schedule.check_step(t, true)?;
    if eps.len() != x0.values().len() {
        return Err(dim_err!(
            "noise has {} values, sample has {}",
            eps.len(),
            x0.values().len()
        ));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let values = x0.values().iter().zip(eps).map(|(x, e)| a * x + b * e).collect();
    MotionSequence::new(x0.n_vertices(), x0.fps(), values)
}
