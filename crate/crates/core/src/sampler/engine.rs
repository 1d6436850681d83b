//! Predictor-corrector integration of a batch of guided sequence problems
//! that share one window layout.

use rayon::prelude::*;

use super::compose::owner;
use super::{corrector_step, final_denoise, predictor_step, NfeCounter, RolloutPlan};
use crate::conditioning::{guidance_residual, WindowObservations};
use crate::denoise::{Cond, Denoiser};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sdecore::{guidance_variance, kernel, standard_normal, time_grid};

/// One sequence to sample: observations over the whole sequence (row 0 is
/// the first state) and optional architecture conditioning per window,
/// `[n_windows][W][D]` values with `[n_windows][W]` flags.
#[derive(Debug, Clone, Default)]
pub struct GuidedMember {
    pub obs: WindowObservations,
    pub cond: Option<(Vec<f64>, Vec<bool>)>,
}

/// Sequences of `len` states covered by every window of `window`
/// consecutive states.
pub struct GuidedProblem<'a> {
    pub den: &'a dyn Denoiser,
    pub len: usize,
    pub width: usize,
    pub members: Vec<GuidedMember>,
}

impl GuidedProblem<'_> {
    fn n_windows(&self) -> usize {
        self.len + 1 - self.den.window()
    }

    /// Guided score of every member at time `t`. Each state's score comes
    /// from its owning window; the guidance term differentiates the Tweedie
    /// estimate built from that composed score, so a window's cotangent only
    /// needs its own output.
    fn score(&self, t: f64, xs: &[Vec<f64>], plan: &RolloutPlan) -> Result<Vec<Vec<f64>>> {
        let w = self.den.window();
        let d = self.width;
        let per = w * d;
        let n_win = self.n_windows();
        let (mu, sigma) = kernel(t)?;
        let guided = self.members.iter().any(|m| !m.obs.is_empty());
        let precision = if guided {
            1.0 / (guidance_variance(t, &plan.guidance)? + plan.guidance.sigma_y.powi(2))
        } else {
            0.0
        };
        let dense: Vec<(Vec<f64>, Vec<bool>)> = self.members.iter().map(|m| m.obs.dense()).collect();
        let owned: Vec<Vec<usize>> = (0..n_win)
            .map(|win| (0..w).filter(|&r| owner(win + r, self.len, w) == (win, r)).collect())
            .collect();
        let with_cond = self.members.iter().any(|m| m.cond.is_some());

        let pairs: Vec<(usize, usize)> = (0..self.members.len())
            .flat_map(|m| (0..n_win).map(move |win| (m, win)))
            .collect();
        type ChunkOut = (Vec<f64>, Vec<f64>, Vec<f64>);
        let outs: Vec<Result<ChunkOut>> = pairs
            .par_chunks(plan.chunk)
            .map(|chunk| {
                let b = chunk.len();
                let mut x = Vec::with_capacity(b * per);
                let mut cc = Vec::new();
                let mut cm = Vec::new();
                for &(m, win) in chunk {
                    x.extend_from_slice(&xs[m][win * d..win * d + per]);
                    if with_cond {
                        match &self.members[m].cond {
                            Some((c, k)) => {
                                cc.extend_from_slice(&c[win * per..(win + 1) * per]);
                                cm.extend_from_slice(&k[win * w..(win + 1) * w]);
                            }
                            None => {
                                cc.extend(std::iter::repeat_n(0.0, per));
                                cm.extend(std::iter::repeat_n(false, w));
                            }
                        }
                    }
                }
                let cond = with_cond.then_some(Cond { channels: &cc, mask: &cm });
                if !guided {
                    let eps = self.den.eps(t, &x, b, d, cond)?;
                    return Ok((eps, Vec::new(), Vec::new()));
                }
                let mut g = vec![0.0; b * per];
                let (eps, vjp) = self.den.eps_vjp(t, &x, b, d, cond, &mut |eps: &[f64]| {
                    for (j, &(m, win)) in chunk.iter().enumerate() {
                        let (vals, mask) = &dense[m];
                        let base = j * per;
                        let mut obs = WindowObservations::default();
                        for &r in &owned[win] {
                            for z in 0..d {
                                let f = (win + r) * d + z;
                                if mask[f] {
                                    obs.flat.push(r * d + z);
                                    obs.values.push(vals[f]);
                                }
                            }
                        }
                        let xw = &x[base..base + per];
                        let ew = &eps[base..base + per];
                        guidance_residual(|f| (xw[f] - sigma * ew[f]) / mu, &obs, precision, &mut g[base..base + per]);
                    }
                    g.clone()
                })?;
                Ok((eps, g, vjp))
            })
            .collect();

        let mut eps_full = vec![vec![0.0; self.len * d]; self.members.len()];
        let mut g_full = vec![vec![0.0; self.len * d]; self.members.len()];
        let mut jt = vec![vec![0.0; self.len * d]; self.members.len()];
        for (chunk, out) in pairs.chunks(plan.chunk).zip(outs) {
            let (eps, g, vjp) = out?;
            for (j, &(m, win)) in chunk.iter().enumerate() {
                let base = j * per;
                for &r in &owned[win] {
                    let dst = (win + r) * d;
                    eps_full[m][dst..dst + d].copy_from_slice(&eps[base + r * d..base + (r + 1) * d]);
                    if guided {
                        g_full[m][dst..dst + d].copy_from_slice(&g[base + r * d..base + (r + 1) * d]);
                    }
                }
                if guided {
                    for (a, v) in jt[m][win * d..win * d + per].iter_mut().zip(&vjp[base..base + per]) {
                        *a += v;
                    }
                }
            }
        }
        Ok((0..self.members.len())
            .map(|m| {
                (0..self.len * d)
                    .map(|i| -eps_full[m][i] / sigma + (g_full[m][i] - sigma * jt[m][i]) / mu)
                    .collect()
            })
            .collect())
    }
}

/// Integrates the reverse process for every member from `N(0, I)` at
/// `t_max` to `t_min`, then applies the Tweedie denoise. Each member draws
/// from its own stream in `rngs`.
pub fn run_guided(problem: &GuidedProblem, plan: &RolloutPlan, rngs: &mut [Rng]) -> Result<(Vec<Vec<f64>>, NfeCounter)> {
    if problem.len < problem.den.window() {
        return Err(Error::TooShort(format!("{} states, window {}", problem.len, problem.den.window())));
    }
    if rngs.len() != problem.members.len() {
        return Err(Error::ShapeMismatch("one random stream per member".into()));
    }
    let grid = time_grid(&plan.time_grid)?;
    let n = problem.len * problem.width;
    let per_eval = problem.n_windows().div_ceil(plan.chunk);
    let mut nfe = NfeCounter::default();
    let mut xs: Vec<Vec<f64>> = rngs.iter_mut().map(|r| standard_normal(n, r)).collect();
    for step in grid.windows(2) {
        let (t_from, t_to) = (step[0], step[1]);
        let s = problem.score(t_from, &xs, plan)?;
        nfe.predictor += per_eval;
        xs = xs
            .iter()
            .zip(&s)
            .map(|(x, s)| predictor_step(x, s, t_from, t_to))
            .collect::<Result<_>>()?;
        for _ in 0..plan.corrector_steps {
            let s = problem.score(t_to, &xs, plan)?;
            nfe.corrector += per_eval;
            xs = xs
                .iter()
                .zip(&s)
                .zip(rngs.iter_mut())
                .map(|((x, s), r)| corrector_step(x, s, t_to, plan.corrector_snr, r))
                .collect::<Result<_>>()?;
        }
    }
    let t_min = *grid.last().expect("non-empty grid");
    let s = problem.score(t_min, &xs, plan)?;
    nfe.denoise += per_eval;
    let out: Vec<Vec<f64>> = xs
        .iter()
        .zip(&s)
        .map(|(x, s)| final_denoise(x, s, t_min, plan.threshold))
        .collect::<Result<_>>()?;
    if let Some(m) = out.iter().position(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("sample of member {m}")));
    }
    Ok((out, nfe))
}
