//! Central finite-difference verification of both gradient modes.

use rand::Rng as _;

use super::net::{NetConfig, NetInput, ScoreNet, Workspace};
use crate::error::Result;
use crate::rng;
use crate::sdecore::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err_params: f64,
    pub max_rel_err_input: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-300 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_direction(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let v = standard_normal(n, r);
    let norm = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Checks `directions` random directions for parameter and input gradients
/// of a randomly initialized f64 net (all weights, including the head,
/// randomized) against central differences with step `h`.
pub fn check_gradients(config: &NetConfig, width: usize, batch: usize, directions: usize, h: f64, seed: u64) -> Result<GradCheck> {
    let mut net = ScoreNet::<f64>::new(config.clone(), seed)?;
    let mut r = rng::stream(seed, "gradcheck", 0);
    for v in net.params.values.iter_mut() {
        *v = r.gen_range(-0.5..0.5);
    }
    let w = config.window;
    let x = standard_normal(batch * w * width, &mut r);
    let cond = standard_normal(batch * w * width, &mut r);
    let mask: Vec<bool> = (0..batch * w).map(|_| r.gen_bool(0.5)).collect();
    let t: Vec<f64> = (0..batch).map(|_| r.gen_range(0.0..1.0)).collect();
    let probe = standard_normal(batch * w * width, &mut r);
    // 0.5 |eps|^2 + <probe, eps>
    let loss = |eps: &[f64]| -> (f64, Vec<f64>) {
        let value = 0.5 * dot(eps, eps) + dot(&probe, eps);
        (value, eps.iter().zip(&probe).map(|(e, p)| e + p).collect())
    };
    let mut ws = Workspace::new();
    let input = NetInput {
        batch,
        width,
        t: &t,
        x: &x,
        cond: Some(&cond),
        mask: Some(&mask),
    };
    let (_, gp) = net.grad_params(&mut ws, &input, loss)?;
    let (_, gx) = net.grad_input(&mut ws, &input, loss)?;

    let mut eval = |net: &ScoreNet<f64>, x: &[f64]| -> Result<f64> {
        let input = NetInput { x, ..input };
        Ok(loss(&net.forward(&mut ws, &input)?).0)
    };

    let mut max_p: f64 = 0.0;
    let mut max_x: f64 = 0.0;
    let base = net.params.values.clone();
    for _ in 0..directions {
        let v = unit_direction(base.len(), &mut r);
        net.params.values = base.iter().zip(&v).map(|(p, d)| p + h * d).collect();
        let plus = eval(&net, &x)?;
        net.params.values = base.iter().zip(&v).map(|(p, d)| p - h * d).collect();
        let minus = eval(&net, &x)?;
        net.params.values.clone_from(&base);
        max_p = max_p.max(rel_err(dot(&gp, &v), (plus - minus) / (2.0 * h)));

        let v = unit_direction(x.len(), &mut r);
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, d)| a + h * d).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, d)| a - h * d).collect();
        let fd = (eval(&net, &xp)? - eval(&net, &xm)?) / (2.0 * h);
        max_x = max_x.max(rel_err(dot(&gx, &v), fd));
    }
    Ok(GradCheck {
        max_rel_err_params: max_p,
        max_rel_err_input: max_x,
    })
}
