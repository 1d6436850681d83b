//! The window-level noise predictor interface shared by trained networks
//! and the Gaussian oracle.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::scorenet::{NetInput, Regime, ScoreNet, Workspace};

/// Architecture conditioning for a batch: clean frames `[batch][W][D]` and
/// per-frame flags `[batch][W]`.
#[derive(Debug, Clone, Copy)]
pub struct Cond<'a> {
    pub channels: &'a [f64],
    pub mask: &'a [bool],
}

/// Predicts the noise `eps` of a batch of noised windows at one diffusion
/// time. The score is `-eps / sigma_t`.
pub trait Denoiser: Sync {
    fn window(&self) -> usize;

    fn regime(&self) -> Regime;

    /// `eps` for `x` of shape `[batch][W][width]`.
    fn eps(&self, t: f64, x: &[f64], batch: usize, width: usize, cond: Option<Cond>) -> Result<Vec<f64>>;

    /// `eps` and the vector-Jacobian product `(d eps / d x)^T c`, where the
    /// cotangent `c = cotangent(eps)` may depend on the forward output.
    fn eps_vjp(
        &self,
        t: f64,
        x: &[f64],
        batch: usize,
        width: usize,
        cond: Option<Cond>,
        cotangent: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// A trained network used as a [`Denoiser`]. Workspaces are pooled so the
/// adapter can be shared across threads.
pub struct NetDenoiser<T: Real = f32> {
    pub net: ScoreNet<T>,
    pub regime: Regime,
    pool: Mutex<Vec<Workspace<T>>>,
}

impl<T: Real> NetDenoiser<T> {
    pub fn new(net: ScoreNet<T>, regime: Regime) -> Self {
        Self {
            net,
            regime,
            pool: Mutex::new(Vec::new()),
        }
    }

    fn with_workspace<R>(&self, f: impl FnOnce(&mut Workspace<T>) -> R) -> R {
        let mut ws = self.pool.lock().expect("workspace pool").pop().unwrap_or_default();
        let out = f(&mut ws);
        self.pool.lock().expect("workspace pool").push(ws);
        out
    }

    fn input<'a>(&self, t: &'a [f64], x: &'a [f64], batch: usize, width: usize, cond: Option<Cond<'a>>) -> NetInput<'a> {
        NetInput {
            batch,
            width,
            t,
            x,
            cond: cond.map(|c| c.channels),
            mask: cond.map(|c| c.mask),
        }
    }
}

impl<T: Real> Denoiser for NetDenoiser<T> {
    fn window(&self) -> usize {
        self.net.config.window
    }

    fn regime(&self) -> Regime {
        self.regime
    }

    fn eps(&self, t: f64, x: &[f64], batch: usize, width: usize, cond: Option<Cond>) -> Result<Vec<f64>> {
        let ts = vec![t; batch];
        let input = self.input(&ts, x, batch, width, cond);
        self.with_workspace(|ws| self.net.forward(ws, &input))
    }

    fn eps_vjp(
        &self,
        t: f64,
        x: &[f64],
        batch: usize,
        width: usize,
        cond: Option<Cond>,
        cotangent: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let ts = vec![t; batch];
        let input = self.input(&ts, x, batch, width, cond);
        self.with_workspace(|ws| {
            let eps = self.net.forward(ws, &input)?;
            let c = cotangent(&eps);
            let g = self
                .net
                .backward(ws, &c, None, true)?
                .ok_or_else(|| Error::NonFinite("missing input gradient".into()))?;
            Ok((eps, g))
        })
    }
}
