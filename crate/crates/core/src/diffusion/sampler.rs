use serde::{Deserialize, Serialize};

use super::{DiffusionSchedule, KeyframeConstraint};
use crate::data::MotionSequence;
use crate::error::{dim_err, Error, Result};
use crate::net::{predict, Condition, DenoiserParams};
use crate::rng::{self, Rng};

/// How `x_{t-1}` is drawn from the clean estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseProcess {
    /// `x_{t-1} ~ N(sqrt(ab_{t-1}) x0_hat, (1 - ab_{t-1}) I)`: re-noise the
    /// estimate to the previous level.
    #[default]
    Renoise,
    /// Gaussian posterior `q(x_{t-1} | x_t, x0_hat)` of the forward chain.
    Posterior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Classifier-free guidance scale; values below 1 trade condition
    /// adherence for diversity.
    pub guidance: f64,
    pub seed: u64,
    pub keyframes: Option<KeyframeConstraint>,
    pub process: ReverseProcess,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            guidance: 0.5,
            seed: 0,
            keyframes: None,
            process: ReverseProcess::Renoise,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.guidance >= 0.0 && self.guidance.is_finite()) {
            return Err(Error::Config(format!(
                "guidance scale must be >= 0, got {}",
                self.guidance
            )));
        }
        Ok(())
    }
}

/// One reverse transition from step `t` to `t - 1`. At `t = 1` both
/// processes return the estimate unchanged (no noise is drawn).
pub fn reverse_step(
    schedule: &DiffusionSchedule,
    process: ReverseProcess,
    x_t: &MotionSequence,
    t: usize,
    x0_hat: &MotionSequence,
    rng: &mut Rng,
) -> Result<MotionSequence> {
    schedule.check_step(t, false)?;
    if !x_t.same_shape(x0_hat) {
        return Err(dim_err!("x_t and the clean estimate differ in shape"));
    }
    if t == 1 {
        return Ok(x0_hat.clone());
    }
    let ab_prev = schedule.alpha_bar(t - 1);
    let mut z = vec![0.0; x_t.values().len()];
    rng::fill_normal(rng, &mut z);
    let values: Vec<f64> = match process {
        ReverseProcess::Renoise => {
            let (a, s) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
            x0_hat.values().iter().zip(&z).map(|(x, z)| a * x + s * z).collect()
        }
        ReverseProcess::Posterior => {
            let ab = schedule.alpha_bar(t);
            let beta = schedule.beta(t);
            let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
            let ct = schedule.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab);
            let sd = (beta * (1.0 - ab_prev) / (1.0 - ab)).sqrt();
            x0_hat
                .values()
                .iter()
                .zip(x_t.values())
                .zip(&z)
                .map(|((x0, xt), z)| c0 * x0 + ct * xt + sd * z)
                .collect()
        }
    };
    MotionSequence::new(x_t.n_vertices(), x_t.fps(), values)
}

/// `u + s (c - u)` for one coordinate.
pub fn guide(uncond: f64, cond: f64, s: f64) -> f64 {
    uncond + s * (cond - uncond)
}

/// Guided ancestral sampler over a fixed parameter set.
pub struct Sampler<'a> {
    params: &'a DenoiserParams,
    schedule: DiffusionSchedule,
}

impl<'a> Sampler<'a> {
    pub fn new(params: &'a DenoiserParams) -> Result<Self> {
        let cfg = params.config();
        Ok(Self {
            params,
            schedule: DiffusionSchedule::new(cfg.diffusion_steps, cfg.schedule)?,
        })
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn params(&self) -> &DenoiserParams {
        self.params
    }

    /// `theta(x, t, 0) + s * (theta(x, t, C) - theta(x, t, 0))`, where the
    /// unconditional pass zeroes the speech but keeps the style. Scales 0 and
    /// 1 return the respective single pass unchanged.
    pub fn cfg_predict(
        &self,
        x_t: &MotionSequence,
        t: usize,
        cond: &Condition,
        guidance: f64,
    ) -> Result<MotionSequence> {
        if guidance == 1.0 || !cond.has_audio() {
            return predict(self.params, x_t, t, cond);
        }
        let uncond = predict(self.params, x_t, t, &cond.without_audio())?;
        if guidance == 0.0 {
            return Ok(uncond);
        }
        let c = predict(self.params, x_t, t, cond)?;
        let values = uncond
            .values()
            .iter()
            .zip(c.values())
            .map(|(&u, &c)| guide(u, c, guidance))
            .collect();
        MotionSequence::new(x_t.n_vertices(), x_t.fps(), values)
    }

    /// Draw `x_T ~ N(0, I)` and denoise to `t = 0`. With keyframes set, the
    /// pinned rows of every clean estimate are replaced before stepping.
    pub fn sample(&self, cond: &Condition, n_frames: usize, cfg: &SamplerConfig) -> Result<MotionSequence> {
        cfg.validate()?;
        let net = self.params.config();
        if n_frames == 0 {
            return Err(Error::EmptySequence("cannot sample zero frames".into()));
        }
        let keyframes = cfg.keyframes.as_ref().filter(|k| !k.is_empty());
        if let Some(k) = keyframes {
            k.validate_for(n_frames, net.motion_dim())?;
        }
        let mut rng = rng::stream(cfg.seed, &[]);
        let noise = rng::normal_vec(&mut rng, n_frames * net.motion_dim());
        let mut x = MotionSequence::new(net.num_vertices, net.fps, noise)?;
        for t in (1..=self.schedule.steps()).rev() {
            let mut x0_hat = self.cfg_predict(&x, t, cond, cfg.guidance)?;
            if let Some(k) = keyframes {
                k.apply(&mut x0_hat);
            }
            x = reverse_step(&self.schedule, cfg.process, &x, t, &x0_hat, &mut rng)?;
        }
        Ok(x)
    }

    /// Sampling with frames pinned to `keyframes`.
    pub fn inpaint_sample(
        &self,
        cond: &Condition,
        n_frames: usize,
        keyframes: &KeyframeConstraint,
        cfg: &SamplerConfig,
    ) -> Result<MotionSequence> {
        let cfg = SamplerConfig {
            keyframes: Some(keyframes.clone()),
            ..cfg.clone()
        };
        self.sample(cond, n_frames, &cfg)
    }

    /// Sampling with zeroed speech and no style.
    pub fn unconditional_sample(&self, n_frames: usize, cfg: &SamplerConfig) -> Result<MotionSequence> {
        self.sample(&Condition::unconditional(), n_frames, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;

    fn seq(values: Vec<f64>) -> MotionSequence {
        MotionSequence::new(1, 30.0, values).unwrap()
    }

    #[test]
    fn last_step_returns_estimate() {
        let s = DiffusionSchedule::new(10, ScheduleKind::Cosine).unwrap();
        let x0 = seq(vec![0.1, 0.2, 0.3]);
        let xt = seq(vec![5.0, 5.0, 5.0]);
        let mut g = rng::stream(0, &[]);
        for p in [ReverseProcess::Renoise, ReverseProcess::Posterior] {
            assert_eq!(reverse_step(&s, p, &xt, 1, &x0, &mut g).unwrap(), x0);
        }
        assert!(reverse_step(&s, ReverseProcess::Renoise, &xt, 0, &x0, &mut g).is_err());
        assert!(reverse_step(&s, ReverseProcess::Renoise, &xt, 11, &x0, &mut g).is_err());
    }

    #[test]
    fn renoise_mean_scaling() {
        // Find a step whose predecessor has alpha_bar ~ 0.25 and check the
        // noise-free part scales ones by its square root.
        let s = DiffusionSchedule::new(500, ScheduleKind::Cosine).unwrap();
        let t = (2..=500)
            .min_by(|&a, &b| {
                let d = |t: usize| (s.alpha_bar(t - 1) - 0.25).abs();
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        let ab_prev = s.alpha_bar(t - 1);
        let ones = seq(vec![1.0; 3]);
        let mut draws = Vec::new();
        for k in 0..2000 {
            let mut g = rng::stream(k, &[]);
            let x = reverse_step(&s, ReverseProcess::Renoise, &ones, t, &ones, &mut g).unwrap();
            draws.push(x.values()[0]);
        }
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - ab_prev.sqrt()).abs() < 0.05, "{mean} vs {}", ab_prev.sqrt());
    }

    #[test]
    fn renoise_variance_monte_carlo() {
        let s = DiffusionSchedule::new(500, ScheduleKind::Cosine).unwrap();
        let t = 300;
        let target = 1.0 - s.alpha_bar(t - 1);
        let x0 = seq(vec![0.7; 3]);
        let mut g = rng::stream(42, &[]);
        let mut vals = Vec::with_capacity(100_000);
        while vals.len() < 100_000 {
            let x = reverse_step(&s, ReverseProcess::Renoise, &x0, t, &x0, &mut g).unwrap();
            vals.extend_from_slice(x.values());
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        assert!((var / target - 1.0).abs() < 0.03, "var {var} vs {target}");
    }

    #[test]
    fn posterior_mean_matches_closed_form() {
        let s = DiffusionSchedule::new(100, ScheduleKind::Linear).unwrap();
        let t = 40;
        let (x0, xt) = (seq(vec![1.0, -1.0, 0.5]), seq(vec![0.2, 0.4, -0.3]));
        let mut sum = [0.0; 3];
        let draws = 20_000;
        for k in 0..draws {
            let mut g = rng::stream(k, &[1]);
            let x = reverse_step(&s, ReverseProcess::Posterior, &xt, t, &x0, &mut g).unwrap();
            for (acc, v) in sum.iter_mut().zip(x.values()) {
                *acc += v;
            }
        }
        let (ab, abp, b) = (s.alpha_bar(t), s.alpha_bar(t - 1), s.beta(t));
        for i in 0..3 {
            let mean = abp.sqrt() * b / (1.0 - ab) * x0.values()[i]
                + (1.0 - b).sqrt() * (1.0 - abp) / (1.0 - ab) * xt.values()[i];
            let sd = (b * (1.0 - abp) / (1.0 - ab)).sqrt();
            assert!((sum[i] / draws as f64 - mean).abs() < 4.0 * sd / (draws as f64).sqrt());
        }
    }

    #[test]
    fn guide_scalar_example() {
        assert_eq!(guide(1.0, 2.0, 0.5), 1.5);
        assert_eq!(guide(1.0, 2.0, 0.0), 1.0);
        assert_eq!(guide(1.0, 2.0, 1.0), 2.0);
    }

    #[test]
    fn negative_guidance_rejected() {
        let cfg = SamplerConfig {
            guidance: -0.1,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
