//! Ground-truth trajectories for the periodic 1D Burgers' and
//! Kuramoto-Sivashinsky equations.
//!
//! Both equations are integrated pseudo-spectrally with ETDRK4 in 64-bit;
//! the quadratic term is dealiased with the 2/3 rule at every evaluation.

mod dataset;
mod etdrk4;
mod initial;

use serde::{Deserialize, Serialize};

pub use dataset::{generate_dataset, DatasetPaths, DatasetSpec};
pub use etdrk4::{mode_index, Etdrk4};
pub use initial::{grf_pointwise_variance, sample_initial_condition, InitialCondition};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Any state with `max |u|` above this bound aborts the solve.
pub const BLOWUP_BOUND: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Number of spatial points `D`.
    pub width: usize,
    pub domain_length: f64,
    pub dt_solver: f64,
    /// Interval between saved states.
    pub dt_save: f64,
    /// Number of saved states `L`; the first is the initial condition.
    pub n_steps_saved: usize,
    /// Physical time integrated and discarded before the first saved state.
    pub burn_in: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 256,
            domain_length: 64.0,
            dt_solver: 0.05,
            dt_save: 0.2,
            n_steps_saved: 140,
            burn_in: 0.0,
        }
    }
}

impl GridSpec {
    fn substeps(&self, span: f64) -> Result<usize> {
        let ratio = span / self.dt_solver;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "{span} is not an integer multiple of dt_solver = {}",
                self.dt_solver
            )));
        }
        Ok(n as usize)
    }

    /// Solver steps per saved state.
    pub fn steps_per_save(&self) -> Result<usize> {
        self.substeps(self.dt_save)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || !self.width.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("D = {} must be even and >= 2", self.width)));
        }
        if !(self.domain_length > 0.0 && self.dt_solver > 0.0 && self.dt_save > 0.0) {
            return Err(Error::InvalidGrid("lengths and steps must be positive".into()));
        }
        if self.n_steps_saved == 0 {
            return Err(Error::InvalidGrid("n_steps_saved must be >= 1".into()));
        }
        if self.burn_in < 0.0 {
            return Err(Error::InvalidGrid("burn_in must be >= 0".into()));
        }
        if self.steps_per_save()? == 0 {
            return Err(Error::InvalidGrid("dt_save smaller than dt_solver".into()));
        }
        self.substeps(self.burn_in)?;
        Ok(())
    }

    pub fn with_len(&self, n_steps_saved: usize) -> Self {
        Self {
            n_steps_saved,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersParams {
    pub viscosity: f64,
    /// Initial conditions are drawn from `N(0, scale^2 (-Lap + k0^2)^-power)`.
    pub grf_scale: f64,
    pub grf_k0: f64,
    pub grf_power: f64,
}

impl Default for BurgersParams {
    fn default() -> Self {
        Self {
            viscosity: 0.01,
            grf_scale: 625.0,
            grf_k0: 5.0,
            grf_power: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsParams {
    pub viscosity: f64,
    /// Number of sine modes `K` in the initial condition.
    pub init_n_modes: usize,
    pub init_amp_range: [f64; 2],
    pub init_phase_range: [f64; 2],
    /// Inclusive range of integer wave numbers `l_k`.
    pub init_freq_range: [u32; 2],
}

impl Default for KsParams {
    fn default() -> Self {
        Self {
            viscosity: 1.0,
            init_n_modes: 10,
            init_amp_range: [-0.5, 0.5],
            init_phase_range: [0.0, 2.0 * std::f64::consts::PI],
            init_freq_range: [1, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pde {
    Burgers(BurgersParams),
    Ks(KsParams),
}

impl Pde {
    pub fn name(&self) -> &'static str {
        match self {
            Pde::Burgers(_) => "burgers",
            Pde::Ks(_) => "ks",
        }
    }

    pub fn solve(&self, init: &[f64], grid: &GridSpec) -> Result<Trajectory> {
        match self {
            Pde::Burgers(p) => solve_burgers(init, grid, p),
            Pde::Ks(p) => solve_ks(init, grid, p),
        }
    }

    pub fn initial_condition(&self, grid: &GridSpec, seed: u64) -> Result<Vec<f64>> {
        let kind = match self {
            Pde::Burgers(p) => InitialCondition::BurgersGrf(p.clone()),
            Pde::Ks(p) => InitialCondition::KsFourier(p.clone()),
        };
        sample_initial_condition(&kind, grid, seed)
    }
}

fn integrate(init: &[f64], grid: &GridSpec, linear: impl Fn(f64) -> f64) -> Result<Trajectory> {
    grid.validate()?;
    if init.len() != grid.width {
        return Err(Error::InvalidGrid(format!(
            "initial field has {} points, grid has {}",
            init.len(),
            grid.width
        )));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial condition".into()));
    }
    let d = grid.width;
    let mut solver = Etdrk4::new(d, grid.domain_length, grid.dt_solver, linear);
    let mut v = solver.to_spectral(init);
    let per_save = grid.steps_per_save()?;
    for _ in 0..grid.substeps(grid.burn_in)? {
        solver.step(&mut v);
    }
    let mut traj = Trajectory::zeros(grid.n_steps_saved, 1, d, grid.dt_save);
    for l in 0..grid.n_steps_saved {
        if l > 0 {
            for _ in 0..per_save {
                solver.step(&mut v);
            }
        }
        let state = traj.state_mut(l);
        solver.to_physical(&v, state);
        let peak = state.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !(peak <= BLOWUP_BOUND) {
            return Err(Error::NonFinite(format!(
                "solution exceeded |u| <= {BLOWUP_BOUND} at saved state {l}"
            )));
        }
    }
    Ok(traj)
}

/// `u_t + u u_z = nu u_zz` on a periodic domain.
pub fn solve_burgers(init: &[f64], grid: &GridSpec, params: &BurgersParams) -> Result<Trajectory> {
    if !(params.viscosity > 0.0) {
        return Err(Error::InvalidParams("Burgers viscosity must be > 0".into()));
    }
    let nu = params.viscosity;
    integrate(init, grid, |k| -nu * k * k)
}

/// `u_t + u u_z + u_zz + nu u_zzzz = 0` on a periodic domain.
pub fn solve_ks(init: &[f64], grid: &GridSpec, params: &KsParams) -> Result<Trajectory> {
    if !(params.viscosity > 0.0) {
        return Err(Error::InvalidParams("KS viscosity must be > 0".into()));
    }
    let nu = params.viscosity;
    integrate(init, grid, |k| k * k - nu * k.powi(4))
}

/// Observed temporal convergence order from solves at `dt`, `dt/2`, `dt/4`
/// over the same horizon: `log2(|u_dt - u_dt/2| / |u_dt/2 - u_dt/4|)` on
/// the final state.
pub fn richardson_order(pde: &Pde, init: &[f64], grid: &GridSpec) -> Result<f64> {
    let horizon = grid.dt_save * (grid.n_steps_saved - 1) as f64;
    let finals = (0..3)
        .map(|level| {
            let dt = grid.dt_solver / f64::from(1u32 << level);
            let g = GridSpec {
                dt_solver: dt,
                dt_save: horizon,
                n_steps_saved: 2,
                ..grid.clone()
            };
            pde.solve(init, &g).map(|t| t.state(1).to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    Ok((dist(&finals[0], &finals[1]) / dist(&finals[1], &finals[2])).log2())
}

/// Largest `|mean(x_l) - mean(x_0)|` over a trajectory.
pub fn mean_drift(traj: &Trajectory) -> f64 {
    let m0: f64 = traj.state(0).iter().sum::<f64>() / traj.state_size() as f64;
    (0..traj.len)
        .map(|l| (traj.state(l).iter().sum::<f64>() / traj.state_size() as f64 - m0).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks_grid() -> GridSpec {
        GridSpec {
            width: 64,
            domain_length: 64.0,
            dt_solver: 0.05,
            dt_save: 0.2,
            n_steps_saved: 20,
            burn_in: 0.0,
        }
    }

    #[test]
    fn grid_validation() {
        let mut g = ks_grid();
        assert!(g.validate().is_ok());
        g.width = 63;
        assert!(matches!(g.validate(), Err(Error::InvalidGrid(_))));
        let mut g = ks_grid();
        g.dt_save = 0.23;
        assert!(matches!(g.validate(), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn constant_is_steady_for_burgers() {
        let grid = GridSpec {
            width: 32,
            domain_length: 1.0,
            dt_solver: 1e-3,
            dt_save: 1e-2,
            n_steps_saved: 11,
            burn_in: 0.0,
        };
        let t = solve_burgers(&[0.7; 32], &grid, &BurgersParams::default()).unwrap();
        for v in &t.data {
            assert!((v - 0.7).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_is_fixed_point_for_ks() {
        let t = solve_ks(&[0.0; 64], &ks_grid(), &KsParams::default()).unwrap();
        assert!(t.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blowup_is_reported() {
        // A huge field with a tiny viscosity steepens until the bound trips.
        let grid = GridSpec {
            width: 32,
            domain_length: 1.0,
            dt_solver: 1e-3,
            dt_save: 1e-2,
            n_steps_saved: 3,
            burn_in: 0.0,
        };
        let init = vec![2e3; 32];
        assert!(matches!(
            solve_burgers(&init, &grid, &BurgersParams::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rejects_wrong_init_width() {
        assert!(matches!(
            solve_ks(&[0.0; 10], &ks_grid(), &KsParams::default()),
            Err(Error::InvalidGrid(_))
        ));
    }
}
