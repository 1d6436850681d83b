//! Verification ladder against the Gaussian oracle: score composition,
//! Tweedie denoising, exact guidance, NFE accounting and a Monte-Carlo
//! check of guided sampling.

use rand::Rng as _;

use pdescore::conditioning::{guidance_score, ObservationSet, WindowObservations};
use pdescore::denoise::Denoiser;
use pdescore::oracle::{GaussianAR, OracleDenoiser};
use pdescore::rng;
use pdescore::sampler::{compose_full_score_2kp1, compose_full_score_kp1, sample_aao, sample_ar_joint, ArMember, RolloutPlan};
use pdescore::scorenet::Regime;
use pdescore::sdecore::{guidance_variance, kernel, standard_normal, GuidanceConfig, GuidanceSchedule, TimeGrid};
use pdescore::Result;

/// One rung of the ladder: passes when `residual <= tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub residual: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle(model: &GaussianAR, window: usize, bias: f64) -> Result<OracleDenoiser> {
    let mut o = OracleDenoiser::new(model.clone(), window, Regime::Joint)?;
    o.eps_bias = bias;
    Ok(o)
}

/// Score of a batch of windows through the denoiser: `-eps / sigma`.
fn window_scores(den: &OracleDenoiser, t: f64, x: &[f64], batch: usize, d: usize) -> Result<Vec<f64>> {
    let (_, sigma) = kernel(t)?;
    Ok(den.eps(t, x, batch, d, None)?.iter().map(|e| -e / sigma).collect())
}

/// Largest error of both composed scores against the exact joint score.
fn composition_errors(model: &GaussianAR, k: usize, t: f64, bias: f64, seed: u64) -> Result<(f64, f64)> {
    let (len, d) = (model.len, model.dim);
    let x = standard_normal(len * d, &mut rng::from_seed(seed));
    let exact = model.noised_score(&x, t)?;
    let wide = oracle(model, 2 * k + 1, bias)?;
    let mut local = |win: &[f64], n: usize| window_scores(&wide, t, win, n, d);
    let (c1, _) = compose_full_score_2kp1(&mut local, &x, len, 2 * k + 1, d, 4)?;
    let kp1 = oracle(model, k + 1, bias)?;
    let kk = oracle(model, k, bias)?;
    let mut f_kp1 = |_s: usize, win: &[f64]| window_scores(&kp1, t, win, 1, d);
    let mut f_k = |_s: usize, win: &[f64]| window_scores(&kk, t, win, 1, d);
    let c2 = compose_full_score_kp1(&mut f_kp1, &mut f_k, &x, len, k, d)?;
    Ok((sup(&c1, &exact), sup(&c2, &exact)))
}

/// Exact score of `x_t` given observations of an iid `N(0, v)` sequence.
fn exact_conditional_score(x: &[f64], mask: &[bool], y: &[f64], v: f64, sy: f64, t: f64) -> Result<Vec<f64>> {
    let (mu, sigma) = kernel(t)?;
    Ok((0..x.len())
        .map(|i| {
            if mask[i] {
                let m = v * y[i] / (v + sy * sy);
                let s = v * sy * sy / (v + sy * sy);
                -(x[i] - mu * m) / (mu * mu * s + sigma * sigma)
            } else {
                -x[i] / (mu * mu * v + sigma * sigma)
            }
        })
        .collect())
}

pub fn run(bias: f64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let mut e_2k = 0.0f64;
    let mut e_k = 0.0f64;
    for len in 3..=8 {
        let m = GaussianAR::new(vec![0.0], 1.0, len, 2)?;
        for t in [0.1, 0.5] {
            let (a, b) = composition_errors(&m, 1, t, bias, len as u64)?;
            e_2k = e_2k.max(a);
            e_k = e_k.max(b);
        }
    }
    out.push(CheckResult {
        name: "composition-2k+1-exact-white-noise",
        tolerance: 1e-10,
        residual: e_2k,
    });
    out.push(CheckResult {
        name: "composition-k+1-exact-white-noise",
        tolerance: 1e-10,
        residual: e_k,
    });

    let m = GaussianAR::new(vec![0.9], 1.0, 12, 1)?;
    let errs = (1..=4)
        .map(|k| composition_errors(&m, k, 0.5, bias, 12).map(|e| e.0))
        .collect::<Result<Vec<_>>>()?;
    let worst_ratio = errs.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    out.push(CheckResult {
        name: "composition-error-decreasing-in-k",
        tolerance: 1.0 - 1e-12,
        residual: worst_ratio,
    });

    let (v, sy, w, d) = (2.0, 0.3, 3, 4);
    let iid = GaussianAR::iid(v, w, d)?;
    let den = oracle(&iid, w, bias)?;
    let cfg = GuidanceConfig {
        gamma: 1.0,
        sigma_y: sy,
        schedule: GuidanceSchedule::MatchedPrior { variance: v },
    };
    let mut r = rng::from_seed(11);
    let mut tweedie_err = 0.0f64;
    let mut guide_err = 0.0f64;
    for t in [0.01, 0.2, 0.6, 1.0] {
        let (mu, sigma) = kernel(t)?;
        let x = standard_normal(w * d, &mut r);
        let eps = den.eps(t, &x, 1, d, None)?;
        for (xi, e) in x.iter().zip(&eps) {
            let x_hat = (xi - sigma * e) / mu;
            let exact = mu * v * xi / (mu * mu * v + sigma * sigma);
            tweedie_err = tweedie_err.max((x_hat - exact).abs());
        }
        let mut obs = WindowObservations {
            start: 0,
            rows: w,
            width: d,
            ..Default::default()
        };
        let mut mask = vec![false; w * d];
        let mut y = vec![0.0; w * d];
        for f in 0..w * d {
            if r.gen_bool(0.5) {
                y[f] = r.gen_range(-2.0..2.0);
                mask[f] = true;
                obs.flat.push(f);
                obs.values.push(y[f]);
            }
        }
        let r2 = guidance_variance(t, &cfg)?;
        let (eps, g) = guidance_score(&den, t, &x, 1, d, None, &[obs], r2, sy)?;
        let exact = exact_conditional_score(&x, &mask, &y, v, sy, t)?;
        let total: Vec<f64> = eps.iter().zip(&g).map(|(e, gi)| -e / sigma + gi).collect();
        guide_err = guide_err.max(sup(&total, &exact));
    }
    out.push(CheckResult {
        name: "tweedie-posterior-mean",
        tolerance: 1e-10,
        residual: tweedie_err,
    });
    out.push(CheckResult {
        name: "matched-guidance-equals-conditional-score",
        tolerance: 1e-10,
        residual: guide_err,
    });

    let ar = GaussianAR::new(vec![0.5], 1.0, 12, 2)?;
    let mut nfe_err = 0usize;
    for (n_steps, c_steps, len, win, p) in [(3, 0, 7, 3, 1), (2, 1, 9, 3, 2), (4, 2, 8, 5, 3)] {
        let den = oracle(&ar, win, bias)?;
        let mut plan = RolloutPlan::new(win, win - p, len);
        plan.time_grid = TimeGrid {
            n_steps,
            ..TimeGrid::default()
        };
        plan.corrector_steps = c_steps;
        plan.chunk = 2;
        let member = |init: Vec<f64>| ArMember {
            init,
            obs: ObservationSet::empty(len, 2, 0.1),
            seed: 5,
        };
        let aao = sample_aao(&den, 2, &[member(Vec::new())], &plan)?;
        let arr = sample_ar_joint(&den, 2, &[member(vec![0.0; plan.cond * 2])], &plan)?;
        nfe_err += aao.nfe.forward_evals().abs_diff(plan.aao_nfe());
        nfe_err += arr.nfe.forward_evals().abs_diff(plan.ar_nfe());
    }
    out.push(CheckResult {
        name: "nfe-closed-form",
        tolerance: 0.0,
        residual: nfe_err as f64,
    });

    // Guided sampling of an iid N(0, 1) sequence against its exact
    // posterior: largest standardized error of the sample means.
    let (len, d, sy) = (3, 2, 0.5);
    let iid = GaussianAR::iid(1.0, len, d)?;
    let den = oracle(&iid, len, bias)?;
    let idx = vec![(0, 0), (1, 1), (2, 0)];
    let y = vec![1.0, -0.5, 0.8];
    let (mean, cov) = iid.posterior_moments(&idx, &y, sy)?;
    let obs = ObservationSet::new(len, d, idx, y, sy, 0)?;
    let mut plan = RolloutPlan::new(len, 0, len);
    plan.time_grid = TimeGrid {
        n_steps: 256,
        ..TimeGrid::default()
    };
    plan.guidance = GuidanceConfig {
        gamma: 1.0,
        sigma_y: sy,
        schedule: GuidanceSchedule::MatchedPrior { variance: 1.0 },
    };
    let n = 2000;
    let members: Vec<ArMember> = (0..n)
        .map(|i| ArMember {
            init: Vec::new(),
            obs: obs.clone(),
            seed: rng::derive_seed(17, "oracle-check", i),
        })
        .collect();
    let samples = sample_aao(&den, d, &members, &plan)?;
    let mut z_max = 0.0f64;
    for (j, m) in mean.iter().enumerate() {
        let avg = samples.trajectories.iter().map(|t| t.data[j]).sum::<f64>() / n as f64;
        let se = (cov[(j, j)] / n as f64).sqrt();
        z_max = z_max.max((avg - m).abs() / se);
    }
    out.push(CheckResult {
        name: "guided-sampling-posterior-mean",
        tolerance: 4.0,
        residual: z_max,
    });
    Ok(out)
}

/// `check,tolerance,residual,status` lines.
pub fn report_csv(results: &[CheckResult]) -> String {
    let mut s = String::from("check,tolerance,residual,status\n");
    for r in results {
        s.push_str(&format!(
            "{},{:e},{:e},{}\n",
            r.name,
            r.tolerance,
            r.residual,
            if r.passed() { "pass" } else { "FAIL" }
        ));
    }
    s
}
