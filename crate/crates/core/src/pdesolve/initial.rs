//! Random initial conditions.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{BurgersParams, GridSpec, KsParams};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Stationary Gaussian random field with covariance
    /// `scale^2 (-Lap + k0^2)^-power`, realized on the real Fourier basis.
    BurgersGrf(BurgersParams),
    /// `sum_k A_k sin(2 pi l_k z / length + phi_k)`.
    KsFourier(KsParams),
}

fn grf_eigenvalue(m: usize, length: f64, p: &BurgersParams) -> f64 {
    let k = 2.0 * PI * m as f64 / length;
    p.grf_scale * p.grf_scale * (k * k + p.grf_k0 * p.grf_k0).powf(-p.grf_power)
}

/// Highest mode used by the random-field realization; the Nyquist mode is
/// skipped since its sine partner vanishes on the grid.
fn grf_top_mode(width: usize) -> usize {
    width / 2 - 1
}

/// Exact pointwise variance of the discretized Burgers random field.
pub fn grf_pointwise_variance(grid: &GridSpec, p: &BurgersParams) -> f64 {
    let ell = grid.domain_length;
    let sum: f64 = (1..=grf_top_mode(grid.width))
        .map(|m| 2.0 * grf_eigenvalue(m, ell, p))
        .sum();
    (grf_eigenvalue(0, ell, p) + sum) / ell
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
        return Err(Error::InvalidParams(format!("{name} = {r:?} is not an interval")));
    }
    Ok(())
}

fn uniform(rng: &mut rng::Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

pub fn sample_initial_condition(kind: &InitialCondition, grid: &GridSpec, seed: u64) -> Result<Vec<f64>> {
    grid.validate()?;
    let d = grid.width;
    let ell = grid.domain_length;
    let mut rng = rng::from_seed(seed);
    let z = |j: usize| ell * j as f64 / d as f64;
    match kind {
        InitialCondition::BurgersGrf(p) => {
            if !(p.grf_scale > 0.0 && p.grf_k0 >= 0.0 && p.grf_power > 0.0) {
                return Err(Error::InvalidParams("random-field parameters must be positive".into()));
            }
            let mut u = vec![(grf_eigenvalue(0, ell, p) / ell).sqrt() * rng.sample::<f64, _>(StandardNormal); d];
            for m in 1..=grf_top_mode(d) {
                let amp = (2.0 * grf_eigenvalue(m, ell, p) / ell).sqrt();
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                for (j, uj) in u.iter_mut().enumerate() {
                    let arg = 2.0 * PI * m as f64 * z(j) / ell;
                    *uj += amp * (a * arg.cos() + b * arg.sin());
                }
            }
            Ok(u)
        }
        InitialCondition::KsFourier(p) => {
            if p.init_n_modes == 0 {
                return Err(Error::InvalidParams("init_n_modes must be >= 1".into()));
            }
            check_range("init_amp_range", p.init_amp_range)?;
            check_range("init_phase_range", p.init_phase_range)?;
            let [lo, hi] = p.init_freq_range;
            if lo > hi {
                return Err(Error::InvalidParams("init_freq_range is empty".into()));
            }
            let mut u = vec![0.0; d];
            for _ in 0..p.init_n_modes {
                let amp = uniform(&mut rng, p.init_amp_range);
                let phase = uniform(&mut rng, p.init_phase_range);
                let freq = rng.gen_range(lo..=hi) as f64;
                for (j, uj) in u.iter_mut().enumerate() {
                    *uj += amp * (2.0 * PI * freq * z(j) / ell + phase).sin();
                }
            }
            Ok(u)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn burgers_grid() -> GridSpec {
        GridSpec {
            width: 64,
            domain_length: 1.0,
            dt_solver: 1e-3,
            dt_save: 1e-2,
            n_steps_saved: 101,
            burn_in: 0.0,
        }
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let p = KsParams {
            init_amp_range: [0.0, 0.0],
            ..KsParams::default()
        };
        let u = sample_initial_condition(&InitialCondition::KsFourier(p), &GridSpec::default(), 3).unwrap();
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equal_seeds_give_equal_fields() {
        let kind = InitialCondition::BurgersGrf(BurgersParams::default());
        let a = sample_initial_condition(&kind, &burgers_grid(), 11).unwrap();
        let b = sample_initial_condition(&kind, &burgers_grid(), 11).unwrap();
        let c = sample_initial_condition(&kind, &burgers_grid(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn grf_variance_matches_spectrum() {
        let grid = burgers_grid();
        let p = BurgersParams::default();
        let kind = InitialCondition::BurgersGrf(p.clone());
        let n = 10_000;
        let mut sum2 = vec![0.0; grid.width];
        for s in 0..n {
            let u = sample_initial_condition(&kind, &grid, s).unwrap();
            for (acc, v) in sum2.iter_mut().zip(&u) {
                *acc += v * v;
            }
        }
        let expected = grf_pointwise_variance(&grid, &p);
        // pooled over grid points, which are identically distributed
        let empirical = sum2.iter().sum::<f64>() / (n as f64 * grid.width as f64);
        assert!(((empirical - expected) / expected).abs() < 0.05, "{empirical} vs {expected}");
        for v in &sum2 {
            let e = v / n as f64;
            assert!(((e - expected) / expected).abs() < 0.05);
        }
    }
}
