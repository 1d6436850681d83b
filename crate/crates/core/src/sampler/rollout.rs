//! All-at-once and autoregressive rollouts over batches of trajectories.

use rayon::prelude::*;

use super::engine::{run_guided, GuidedMember, GuidedProblem};
use super::{NfeCounter, RolloutPlan};
use crate::conditioning::ObservationSet;
use crate::denoise::{Cond, Denoiser};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::scorenet::Regime;
use crate::trajectory::Trajectory;

/// One trajectory to generate: known leading states `[n][D]` (may be
/// empty for all-at-once sampling), observations over the full length and
/// the seed of its random stream.
#[derive(Debug, Clone)]
pub struct ArMember {
    pub init: Vec<f64>,
    pub obs: ObservationSet,
    pub seed: u64,
}

/// Generated trajectories and the per-trajectory forward-batch count.
#[derive(Debug, Clone)]
pub struct RolloutOutput {
    pub trajectories: Vec<Trajectory>,
    pub nfe: NfeCounter,
}

fn member_rngs(members: &[ArMember]) -> Vec<Rng> {
    members.iter().map(|m| rng::stream(m.seed, "sample", 0)).collect()
}

fn check_members(members: &[ArMember], plan: &RolloutPlan, width: usize) -> Result<()> {
    for m in members {
        if m.obs.len != plan.len || m.obs.width != width {
            return Err(Error::ShapeMismatch(format!(
                "observations on {} x {}, rollout {} x {width}",
                m.obs.len, m.obs.width, plan.len
            )));
        }
        if m.init.len() % width != 0 {
            return Err(Error::ShapeMismatch("initial states not a multiple of the state size".into()));
        }
    }
    Ok(())
}

fn finish(seqs: Vec<Vec<f64>>, plan: &RolloutPlan, width: usize, nfe: NfeCounter) -> Result<RolloutOutput> {
    let trajectories = seqs
        .into_iter()
        .map(|mut s| {
            s.truncate(plan.len * width);
            Trajectory::new(s, plan.len, 1, width, plan.dt_save)
        })
        .collect::<Result<_>>()?;
    Ok(RolloutOutput { trajectories, nfe })
}

/// Samples whole trajectories at once from a joint window model, guided
/// by each member's observations.
pub fn sample_aao(den: &dyn Denoiser, width: usize, members: &[ArMember], plan: &RolloutPlan) -> Result<RolloutOutput> {
    plan.validate_common()?;
    if den.regime() != Regime::Joint {
        return Err(Error::RegimeMismatch(format!("all-at-once sampling needs a joint model, got {}", den.regime())));
    }
    if den.window() != plan.window {
        return Err(Error::RegimeMismatch(format!("model window {}, plan window {}", den.window(), plan.window)));
    }
    check_members(members, plan, width)?;
    let problem = GuidedProblem {
        den,
        len: plan.len,
        width,
        members: members
            .iter()
            .map(|m| GuidedMember {
                obs: m.obs.restrict(0, plan.len, 0),
                cond: None,
            })
            .collect(),
    };
    let mut rngs = member_rngs(members);
    let (seqs, nfe) = run_guided(&problem, plan, &mut rngs)?;
    finish(seqs, plan, width, nfe)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ArMode {
    /// Known states enter as dense observations through guidance.
    Joint,
    /// Known states enter through the conditioning channels.
    Amortised,
}

fn ar_rollout(den: &dyn Denoiser, width: usize, members: &[ArMember], plan: &RolloutPlan, mode: ArMode, cold: bool) -> Result<RolloutOutput> {
    plan.validate_ar()?;
    if den.window() != plan.window {
        return Err(Error::RegimeMismatch(format!("model window {}, plan window {}", den.window(), plan.window)));
    }
    check_members(members, plan, width)?;
    let (w, c) = (plan.window, plan.cond);
    let d = width;
    let mut seqs: Vec<Vec<f64>> = members.iter().map(|m| m.init.clone()).collect();
    let n_init = seqs.first().map_or(0, |s| s.len() / d);
    if seqs.iter().any(|s| s.len() != n_init * d) {
        return Err(Error::ShapeMismatch("members must share the number of initial states".into()));
    }
    if n_init < c && !(cold && n_init == 0) {
        return Err(Error::InitTooShort(format!("{n_init} initial states, need {c}")));
    }
    let mut rngs = member_rngs(members);
    let mut nfe = NfeCounter::default();
    let mut have = n_init;
    while have < plan.len {
        let c_eff = if have == 0 { 0 } else { c };
        if mode == ArMode::Amortised {
            match den.regime() {
                Regime::Universal => {}
                Regime::Amortised(trained) if trained == c_eff => {}
                r => {
                    return Err(Error::RegimeMismatch(format!(
                        "model trained as {r} driven with {c_eff} conditioning states"
                    )))
                }
            }
        }
        let start = have - c_eff;
        let problem = GuidedProblem {
            den,
            len: w,
            width: d,
            members: members
                .iter()
                .zip(&seqs)
                .map(|(m, seq)| {
                    let mut obs = m.obs.restrict(start, w, c_eff);
                    let known = &seq[start * d..have * d];
                    match mode {
                        ArMode::Joint => {
                            for r in 0..c_eff {
                                obs.push_row(r, &known[r * d..(r + 1) * d]);
                            }
                            GuidedMember { obs, cond: None }
                        }
                        ArMode::Amortised => {
                            let mut channels = vec![0.0; w * d];
                            channels[..c_eff * d].copy_from_slice(known);
                            let mask = (0..w).map(|r| r < c_eff).collect();
                            GuidedMember {
                                obs,
                                cond: Some((channels, mask)),
                            }
                        }
                    }
                })
                .collect(),
        };
        let (out, step_nfe) = run_guided(&problem, plan, &mut rngs)?;
        nfe.add(&step_nfe);
        for (seq, o) in seqs.iter_mut().zip(&out) {
            seq.extend_from_slice(&o[c_eff * d..]);
        }
        have += w - c_eff;
    }
    finish(seqs, plan, width, nfe)
}

/// Autoregressive rollout of a joint model: each step samples a window
/// whose first `C` states are guided towards the known states with noise
/// `sigma_y`, then keeps the `P` new states.
pub fn sample_ar_joint(den: &dyn Denoiser, width: usize, members: &[ArMember], plan: &RolloutPlan) -> Result<RolloutOutput> {
    if den.regime() != Regime::Joint {
        return Err(Error::RegimeMismatch(format!("joint rollout with a {} model", den.regime())));
    }
    ar_rollout(den, width, members, plan, ArMode::Joint, false)
}

/// Autoregressive rollout of an amortised or universal model: the `C`
/// known states enter through the conditioning channels and observations
/// guide only the `P` new states.
pub fn sample_ar_amortised(den: &dyn Denoiser, width: usize, members: &[ArMember], plan: &RolloutPlan) -> Result<RolloutOutput> {
    ar_rollout(den, width, members, plan, ArMode::Amortised, false)
}

/// Autoregressive rollout that may start with no known states: the first
/// window is sampled from observations alone. Needs a joint or universal
/// model.
pub fn sample_ar_from_scratch(den: &dyn Denoiser, width: usize, members: &[ArMember], plan: &RolloutPlan) -> Result<RolloutOutput> {
    let mode = match den.regime() {
        Regime::Joint => ArMode::Joint,
        _ => ArMode::Amortised,
    };
    ar_rollout(den, width, members, plan, mode, true)
}

/// Deterministic next-state rollout of a network trained to regress the
/// last state of a window on the preceding `W - 1`.
pub fn sample_mse(den: &dyn Denoiser, width: usize, members: &[ArMember], plan: &RolloutPlan) -> Result<RolloutOutput> {
    if den.regime() != Regime::MseBaseline {
        return Err(Error::RegimeMismatch(format!("next-state rollout with a {} model", den.regime())));
    }
    let w = den.window();
    let d = width;
    let c = w - 1;
    if plan.len < w || plan.chunk == 0 {
        return Err(Error::TooShort(format!("{} states, window {w}", plan.len)));
    }
    let mut seqs: Vec<Vec<f64>> = members.iter().map(|m| m.init.clone()).collect();
    let n_init = seqs.first().map_or(0, |s| s.len() / d);
    if n_init < c || seqs.iter().any(|s| s.len() != n_init * d) {
        return Err(Error::InitTooShort(format!("{n_init} initial states, need {c}")));
    }
    let per = w * d;
    let mask_one: Vec<bool> = (0..w).map(|r| r < c).collect();
    let mut nfe = NfeCounter::default();
    for have in n_init..plan.len {
        let next: Vec<Result<Vec<f64>>> = seqs
            .par_chunks(plan.chunk)
            .map(|chunk| {
                let b = chunk.len();
                let x = vec![0.0; b * per];
                let mut channels = vec![0.0; b * per];
                let mut mask = Vec::with_capacity(b * w);
                for (j, s) in chunk.iter().enumerate() {
                    channels[j * per..j * per + c * d].copy_from_slice(&s[(have - c) * d..have * d]);
                    mask.extend_from_slice(&mask_one);
                }
                let cond = Cond {
                    channels: &channels,
                    mask: &mask,
                };
                den.eps(0.0, &x, b, d, Some(cond))
            })
            .collect();
        for (chunk, out) in seqs.chunks_mut(plan.chunk).zip(next) {
            let out = out?;
            for (j, s) in chunk.iter_mut().enumerate() {
                s.extend_from_slice(&out[j * per + c * d..(j + 1) * per]);
            }
        }
        nfe.predictor += 1;
    }
    if seqs.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("next-state rollout".into()));
    }
    finish(seqs, plan, width, nfe)
}
