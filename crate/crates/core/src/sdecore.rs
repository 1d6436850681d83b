//! Variance-preserving SDE with a linearly growing noise rate: noising kernel, reverse and probability-flow
//! drifts, Tweedie denoising, guidance variance and sampling time grids.
//!
//! All schedule arithmetic is done in f64.

use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSchedule {
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self { t_min: 1e-3, t_max: 1.0 }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.t_min && self.t_min < self.t_max && self.t_max <= 1.0) {
            return Err(Error::OutOfRange(format!(
                "need 0 < t_min < t_max <= 1, got [{}, {}]",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }
}

/// Noise rate at `t = 0` and `t = 1`; the rate grows linearly in between.
pub const BETA_MIN: f64 = 0.1;
pub const BETA_MAX: f64 = 20.0;

/// Noise rate `beta(t)` of the forward SDE `dx = -beta x / 2 dt + sqrt(beta) dw`.
pub fn beta(t: f64) -> f64 {
    BETA_MIN + (BETA_MAX - BETA_MIN) * t
}

/// Integrated rate `int_0^t beta`, the elapsed Ornstein-Uhlenbeck time.
pub fn ou_time(t: f64) -> f64 {
    BETA_MIN * t + 0.5 * (BETA_MAX - BETA_MIN) * t * t
}

/// `(mu_t, sigma_t)` with `mu = exp(-tau/2)` and `sigma^2 = 1 - exp(-tau)`,
/// `tau` the integrated noise rate.
pub fn kernel(t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) || t.is_nan() {
        return Err(Error::OutOfRange(format!("diffusion time {t}")));
    }
    Ok(kernel_unchecked(t))
}

#[inline]
pub(crate) fn kernel_unchecked(t: f64) -> (f64, f64) {
    let tau = ou_time(t);
    ((-0.5 * tau).exp(), (-(-tau).exp_m1()).sqrt())
}

/// `log(mu_t / sigma_t)`.
pub fn log_snr(t: f64) -> f64 {
    let (mu, sigma) = kernel_unchecked(t);
    mu.ln() - sigma.ln()
}

/// Draws `x_t = mu x0 + sigma eps` and returns `(x_t, eps)`.
pub fn noise_sample<R: rand::Rng + ?Sized>(x0: &[f64], t: f64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mu, sigma) = kernel(t)?;
    let eps: Vec<f64> = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
    let xt = x0.iter().zip(&eps).map(|(x, e)| mu * x + sigma * e).collect();
    Ok((xt, eps))
}

/// Posterior mean `(x_t + sigma^2 s) / mu`.
pub fn tweedie(xt: &[f64], score: &[f64], t: f64) -> Result<Vec<f64>> {
    let (mu, sigma) = kernel(t)?;
    let s2 = sigma * sigma;
    Ok(xt.iter().zip(score).map(|(x, s)| (x + s2 * s) / mu).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuidanceConfig {
    pub gamma: f64,
    pub sigma_y: f64,
    pub schedule: GuidanceSchedule,
}

/// How the Tweedie-error variance `r_t^2` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceSchedule {
    /// `gamma sigma_t^2 / mu_t^2`.
    #[default]
    Scaled,
    /// Exact posterior variance of `x_0 | x_t` for a scalar Gaussian prior
    /// of the given variance: `sigma^2 v / (mu^2 v + sigma^2)`.
    MatchedPrior { variance: f64 },
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            sigma_y: 0.01,
            schedule: GuidanceSchedule::Scaled,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.sigma_y >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "guidance needs gamma > 0 and sigma_y >= 0, got {self:?}"
            )));
        }
        if let GuidanceSchedule::MatchedPrior { variance } = self.schedule {
            if !(variance > 0.0) {
                return Err(Error::InvalidParams(format!("matched prior variance {variance}")));
            }
        }
        Ok(())
    }
}

/// `r_t^2` under the configured schedule.
pub fn guidance_variance(t: f64, cfg: &GuidanceConfig) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::OutOfRange(format!("guidance variance at t = {t}")));
    }
    let (mu, sigma) = kernel(t)?;
    let s2 = sigma * sigma;
    Ok(match cfg.schedule {
        GuidanceSchedule::Scaled => cfg.gamma * s2 / (mu * mu),
        GuidanceSchedule::MatchedPrior { variance } => s2 * variance / (mu * mu * variance + s2),
    })
}

/// Reverse-time SDE drift `beta (-x/2 - s)`, in forward time.
pub fn reverse_drift(xt: &[f64], score: &[f64], t: f64) -> Vec<f64> {
    let b = beta(t);
    xt.iter().zip(score).map(|(x, s)| b * (-0.5 * x - s)).collect()
}

/// Probability-flow ODE drift `beta (-x/2 - s/2)`.
pub fn pf_ode_drift(xt: &[f64], score: &[f64], t: f64) -> Vec<f64> {
    let b = beta(t);
    xt.iter().zip(score).map(|(x, s)| b * (-0.5 * x - 0.5 * s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    /// Uniform in `t^(1/kappa)`.
    Quadratic { kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeGrid {
    pub n_steps: usize,
    pub spacing: Spacing,
    pub schedule: NoiseSchedule,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            n_steps: 128,
            spacing: Spacing::Linear,
            schedule: NoiseSchedule::default(),
        }
    }
}

/// Strictly decreasing `n_steps + 1` times from `t_max` to `t_min`.
pub fn time_grid(g: &TimeGrid) -> Result<Vec<f64>> {
    g.schedule.validate()?;
    if g.n_steps == 0 {
        return Err(Error::InvalidParams("time grid needs n_steps >= 1".into()));
    }
    let n = g.n_steps as f64;
    let NoiseSchedule { t_min, t_max } = g.schedule;
    let mut ts: Vec<f64> = match g.spacing {
        Spacing::Linear => (0..=g.n_steps)
            .map(|i| t_max - (t_max - t_min) * i as f64 / n)
            .collect(),
        Spacing::Quadratic { kappa } => {
            if !(kappa > 0.0) {
                return Err(Error::InvalidParams(format!("kappa = {kappa}")));
            }
            let (a, b) = (t_min.powf(1.0 / kappa), t_max.powf(1.0 / kappa));
            (0..=g.n_steps)
                .rev()
                .map(|i| ((g.n_steps - i) as f64 / n * a + i as f64 / n * b).powf(kappa))
                .collect()
        }
    };
    ts[0] = t_max;
    ts[g.n_steps] = t_min;
    Ok(ts)
}

/// Standard normal vector of length `n`.
pub fn standard_normal<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn kernel_endpoints() {
        assert_eq!(kernel(0.0).unwrap(), (1.0, 0.0));
        let (mu, sigma) = kernel(60.0).unwrap();
        assert!(mu < 1e-12 && (sigma - 1.0).abs() < 1e-12);
        assert!(kernel(-1.0).is_err());
    }

    #[test]
    fn noise_at_zero_is_identity() {
        let x0 = [1.0, -2.0, 3.5];
        let (xt, eps) = noise_sample(&x0, 0.0, &mut rng::from_seed(1)).unwrap();
        assert_eq!(xt, x0);
        assert_eq!(eps.len(), 3);
    }

    #[test]
    fn noise_moments_match_kernel() {
        let t = 0.5;
        let (mu, sigma) = kernel(t).unwrap();
        let n = 100_000;
        let mut r = rng::from_seed(2);
        let x0 = [1.5];
        let draws: Vec<f64> = (0..n).map(|_| noise_sample(&x0, t, &mut r).unwrap().0[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = sigma / (n as f64).sqrt();
        let se_var = sigma * sigma * (2.0 / (n - 1) as f64).sqrt();
        assert!((mean - mu * 1.5).abs() < 3.0 * se_mean);
        assert!((var - sigma * sigma).abs() < 3.0 * se_var);
    }

    #[test]
    fn eps_score_is_kernel_score() {
        let t = 0.3;
        let (mu, sigma) = kernel(t).unwrap();
        let x0 = [0.2, -1.0];
        let (xt, eps) = noise_sample(&x0, t, &mut rng::from_seed(3)).unwrap();
        for i in 0..2 {
            let a = -eps[i] / sigma;
            let b = -(xt[i] - mu * x0[i]) / (sigma * sigma);
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn tweedie_standard_normal_prior() {
        for &t in &[0.01, 0.3, 1.0] {
            let (mu, sigma) = kernel(t).unwrap();
            let xt = [0.7, -1.3];
            let score: Vec<f64> = xt.iter().map(|x| -x / (mu * mu + sigma * sigma)).collect();
            let xhat = tweedie(&xt, &score, t).unwrap();
            for (h, x) in xhat.iter().zip(&xt) {
                assert!((h - mu * x / (mu * mu + sigma * sigma)).abs() < 1e-12);
            }
        }
        assert_eq!(tweedie(&[2.0], &[0.0], 0.0).unwrap(), vec![2.0]);
    }

    #[test]
    fn guidance_variance_values() {
        let cfg = GuidanceConfig {
            gamma: 0.1,
            sigma_y: 0.0,
            ..Default::default()
        };
        let e = (-ou_time(1.0)).exp();
        let expected = 0.1 * (1.0 - e) / e;
        assert!((guidance_variance(1.0, &cfg).unwrap() - expected).abs() < 1e-12 * expected);
        assert!(guidance_variance(1e-12, &cfg).unwrap() < 1e-12);
        let double = GuidanceConfig { gamma: 0.2, ..cfg };
        let r = guidance_variance(0.4, &cfg).unwrap();
        assert!((guidance_variance(0.4, &double).unwrap() - 2.0 * r).abs() < 1e-15);
        assert!(guidance_variance(0.0, &cfg).is_err());
    }

    #[test]
    fn drifts() {
        let x = [1.0, -2.0];
        let minus_x = [-1.0, 2.0];
        assert_eq!(pf_ode_drift(&x, &minus_x, 0.3), vec![0.0, 0.0]);
        assert_eq!(reverse_drift(&x, &[0.0, 0.0], 0.0), vec![-0.05, 0.1]);
        let b = beta(1.0);
        assert_eq!(reverse_drift(&x, &[0.0, 0.0], 1.0), vec![-0.5 * b, b]);
    }

    #[test]
    fn time_grids() {
        let one = TimeGrid { n_steps: 1, ..TimeGrid::default() };
        assert_eq!(time_grid(&one).unwrap(), vec![1.0, 1e-3]);
        let lin = time_grid(&TimeGrid { n_steps: 4, ..TimeGrid::default() }).unwrap();
        assert_eq!(lin.len(), 5);
        let gaps: Vec<f64> = lin.windows(2).map(|w| w[0] - w[1]).collect();
        for g in &gaps {
            assert!((g - gaps[0]).abs() < 1e-15);
        }
        let quad = time_grid(&TimeGrid {
            n_steps: 16,
            spacing: Spacing::Quadratic { kappa: 2.0 },
            ..TimeGrid::default()
        })
        .unwrap();
        assert_eq!((quad[0], quad[16]), (lin[0], lin[4]));
        assert!(quad.windows(2).all(|w| w[0] > w[1]));
    }

    proptest! {
        #[test]
        fn variance_preserving(t in 0.0f64..20.0) {
            let (mu, sigma) = kernel(t).unwrap();
            prop_assert!((mu * mu + sigma * sigma - 1.0).abs() < 1e-14);
        }

        #[test]
        fn guidance_variance_increasing(a in 1e-4f64..1.0, b in 1e-4f64..1.0) {
            prop_assume!(a < b);
            let cfg = GuidanceConfig::default();
            prop_assert!(guidance_variance(a, &cfg).unwrap() < guidance_variance(b, &cfg).unwrap());
        }

        #[test]
        fn tweedie_inverts_exact_conditional_score(x0 in -5.0f64..5.0, e in -3.0f64..3.0, t in 1e-3f64..1.0) {
            let (mu, sigma) = kernel(t).unwrap();
            let xt = mu * x0 + sigma * e;
            let s = -(xt - mu * x0) / (sigma * sigma);
            let back = tweedie(&[xt], &[s], t).unwrap()[0];
            prop_assert!((back - x0).abs() < 1e-12 * (1.0 + x0.abs()));
        }

        #[test]
        fn grids_decrease(n in 1usize..300, quad in proptest::bool::ANY) {
            let spacing = if quad { Spacing::Quadratic { kappa: 2.0 } } else { Spacing::Linear };
            let g = time_grid(&TimeGrid { n_steps: n, spacing, ..TimeGrid::default() }).unwrap();
            prop_assert!(g.windows(2).all(|w| w[0] > w[1]));
            prop_assert_eq!(g[0], 1.0);
            prop_assert_eq!(g[n], 1e-3);
        }
    }
}
