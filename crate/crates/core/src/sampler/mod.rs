//! Reverse-process sampling: exponential-integrator predictor, Langevin
//! corrector, full-score composition, guided all-at-once and
//! autoregressive rollouts, and the final Tweedie denoise.

mod compose;
mod engine;
mod rollout;

pub use compose::{compose_full_score_2kp1, compose_full_score_kp1, owner};
pub use engine::{run_guided, GuidedMember, GuidedProblem};
pub use rollout::{sample_aao, sample_ar_amortised, sample_ar_from_scratch, sample_ar_joint, sample_mse, ArMember, RolloutOutput};

use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sdecore::{kernel, log_snr, GuidanceConfig, TimeGrid};

/// Default corrector signal-to-noise ratio.
pub const CORRECTOR_SNR: f64 = 0.1;
/// Default percentile for the optional dynamic thresholding.
pub const THRESHOLD_PERCENTILE: f64 = 99.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutPlan {
    pub window: usize,
    /// States emitted per autoregressive step.
    pub predict: usize,
    /// Known states each autoregressive step is conditioned on.
    pub cond: usize,
    pub len: usize,
    pub corrector_steps: usize,
    pub corrector_snr: f64,
    pub time_grid: TimeGrid,
    pub guidance: GuidanceConfig,
    /// Windows per forward batch.
    pub chunk: usize,
    /// Percentile of `|x_hat|` to clamp the final estimate to.
    pub threshold: Option<f64>,
    pub dt_save: f64,
}

impl RolloutPlan {
    /// A plan with `P = W - C` and default sampler settings.
    pub fn new(window: usize, cond: usize, len: usize) -> Self {
        Self {
            window,
            predict: window.saturating_sub(cond),
            cond,
            len,
            corrector_steps: 0,
            corrector_snr: CORRECTOR_SNR,
            time_grid: TimeGrid::default(),
            guidance: GuidanceConfig::default(),
            chunk: 64,
            threshold: None,
            dt_save: 1.0,
        }
    }

    pub fn validate_ar(&self) -> Result<()> {
        if self.predict + self.cond != self.window || self.predict == 0 || self.cond == 0 {
            return Err(Error::InvalidParams(format!(
                "autoregressive plan needs P + C = W with P, C >= 1, got P={} C={} W={}",
                self.predict, self.cond, self.window
            )));
        }
        self.validate_common()
    }

    pub fn validate_common(&self) -> Result<()> {
        if self.len < self.window {
            return Err(Error::TooShort(format!("{} states, window {}", self.len, self.window)));
        }
        if self.chunk == 0 {
            return Err(Error::InvalidParams("chunk must be >= 1".into()));
        }
        if !(self.corrector_snr >= 0.0) {
            return Err(Error::InvalidParams(format!("corrector snr {}", self.corrector_snr)));
        }
        if let Some(p) = self.threshold {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::InvalidParams(format!("threshold percentile {p}")));
            }
        }
        self.guidance.validate()?;
        self.time_grid.schedule.validate()
    }

    /// Autoregressive steps needed to extend `C` known states to `L`.
    pub fn ar_steps(&self) -> usize {
        self.len.saturating_sub(self.cond).div_ceil(self.predict.max(1))
    }

    /// Forward batches of one trajectory in one all-at-once rollout,
    /// excluding the final denoise.
    pub fn aao_nfe(&self) -> usize {
        let n_windows = self.len + 1 - self.window;
        (1 + self.corrector_steps) * self.time_grid.n_steps * n_windows.div_ceil(self.chunk)
    }

    /// Forward batches of one trajectory in one autoregressive rollout,
    /// excluding the final denoise of each step.
    pub fn ar_nfe(&self) -> usize {
        (1 + self.corrector_steps) * self.time_grid.n_steps * self.ar_steps()
    }
}

/// Forward batches per trajectory, by phase. `forward_evals` follows the
/// closed-form accounting (predictor and corrector); the final Tweedie
/// denoise of each window is tracked separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NfeCounter {
    pub predictor: usize,
    pub corrector: usize,
    pub denoise: usize,
}

impl NfeCounter {
    pub fn forward_evals(&self) -> usize {
        self.predictor + self.corrector
    }

    pub fn add(&mut self, other: &NfeCounter) {
        self.predictor += other.predictor;
        self.corrector += other.corrector;
        self.denoise += other.denoise;
    }
}

/// First-order exponential integrator of the probability-flow ODE in
/// log-SNR time, from `t_from` down to `t_to`.
pub fn predictor_step(x: &[f64], score: &[f64], t_from: f64, t_to: f64) -> Result<Vec<f64>> {
    if !(t_to > 0.0 && t_to <= t_from) {
        return Err(Error::OutOfRange(format!("predictor step {t_from} -> {t_to}")));
    }
    let (mu_from, sigma_from) = kernel(t_from)?;
    let (mu_to, sigma_to) = kernel(t_to)?;
    let h = log_snr(t_to) - log_snr(t_from);
    let ratio = mu_to / mu_from;
    let coef = sigma_to * h.exp_m1() * sigma_from;
    // eps = -sigma_from * score
    Ok(x.iter().zip(score).map(|(xi, si)| ratio * xi + coef * si).collect())
}

/// Langevin corrector step with the signal-to-noise step-size rule
/// `delta = 2 (snr |z| / |s|)^2`, or `snr^2 sigma_t^2` when the score
/// vanishes.
pub fn corrector_step<R: rand::Rng + ?Sized>(x: &[f64], score: &[f64], t: f64, snr: f64, rng: &mut R) -> Result<Vec<f64>> {
    let (_, sigma) = kernel(t)?;
    let z: Vec<f64> = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sn = score.iter().map(|v| v * v).sum::<f64>().sqrt();
    let delta = if sn > 0.0 {
        2.0 * (snr * zn / sn).powi(2)
    } else {
        snr * snr * sigma * sigma
    };
    let amp = (2.0 * delta).sqrt();
    Ok(x.iter().zip(score).zip(&z).map(|((xi, si), zi)| xi + delta * si + amp * zi).collect())
}

/// Tweedie estimate at `t`, optionally clamped to `+-` the given percentile
/// of its absolute values.
pub fn final_denoise(x: &[f64], score: &[f64], t: f64, threshold: Option<f64>) -> Result<Vec<f64>> {
    let mut out = crate::sdecore::tweedie(x, score, t)?;
    if let Some(p) = threshold {
        let bound = percentile_abs(&out, p);
        for v in &mut out {
            *v = v.clamp(-bound, bound);
        }
    }
    Ok(out)
}

/// Linear-interpolated percentile of `|v|`.
fn percentile_abs(v: &[f64], p: f64) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (a.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    a[lo] + (a[hi] - a[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn predictor_identity_and_zero_eps() {
        let x = vec![0.3, -1.2];
        let s = vec![0.5, 0.1];
        assert_eq!(predictor_step(&x, &s, 0.4, 0.4).unwrap(), x);
        let (m0, _) = kernel(0.7).unwrap();
        let (m1, _) = kernel(0.2).unwrap();
        let out = predictor_step(&x, &[0.0, 0.0], 0.7, 0.2).unwrap();
        for (o, xi) in out.iter().zip(&x) {
            assert!((o - m1 / m0 * xi).abs() < 1e-15);
        }
        assert!(predictor_step(&x, &s, 0.2, 0.4).is_err());
    }

    #[test]
    fn corrector_zero_snr_and_determinism() {
        let x = vec![0.3, -1.2, 2.0];
        let s = vec![0.5, 0.1, -0.2];
        let out = corrector_step(&x, &s, 0.5, 0.0, &mut rng::from_seed(1)).unwrap();
        assert_eq!(out, x);
        let a = corrector_step(&x, &s, 0.5, 0.1, &mut rng::from_seed(7)).unwrap();
        let b = corrector_step(&x, &s, 0.5, 0.1, &mut rng::from_seed(7)).unwrap();
        assert_eq!(a, b);
        let z = corrector_step(&x, &[0.0; 3], 0.5, 0.1, &mut rng::from_seed(7)).unwrap();
        assert!(z.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn thresholding_percentiles() {
        let x = vec![0.1, -3.0, 0.5, 2.0];
        let s = vec![0.0; 4];
        let t = 1e-3;
        let plain = final_denoise(&x, &s, t, None).unwrap();
        assert_eq!(final_denoise(&x, &s, t, Some(100.0)).unwrap(), plain);
        let clipped = final_denoise(&x, &s, t, Some(50.0)).unwrap();
        let (mu, _) = kernel(t).unwrap();
        let bound = 1.25 / mu;
        assert!((clipped[1] + bound).abs() < 1e-12 && (clipped[3] - bound).abs() < 1e-12);
        assert_eq!(clipped[0], plain[0]);
    }

    #[test]
    fn closed_form_counts() {
        let mut p = RolloutPlan::new(5, 2, 640);
        p.corrector_steps = 1;
        p.chunk = 100;
        assert_eq!(p.aao_nfe(), 2 * 128 * 7);
        assert_eq!(p.ar_steps(), 638usize.div_ceil(3));
        assert_eq!(p.ar_nfe(), 2 * 128 * p.ar_steps());
    }
}
