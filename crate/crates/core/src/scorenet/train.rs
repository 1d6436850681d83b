//! Denoising score-matching training for the joint, amortised, universal
//! and next-step regression regimes.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{NetInput, ScoreNet, Workspace};
use crate::error::{Error, Result};
use crate::rng;
use crate::sdecore::{kernel, standard_normal};
use crate::trajectory::Trajectory;

/// Samples per gradient chunk. Chunks may run on different threads; their
/// gradients are summed in chunk order so results do not depend on the
/// thread count.
const GRAD_CHUNK: usize = 8;

/// How the network is conditioned on known frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Regime {
    /// Unconditional window prior; conditioning only through guidance.
    Joint,
    /// The first `C` frames are fed through the conditioning channels.
    Amortised(usize),
    /// Like `Amortised` with `C` redrawn uniformly from `0..W` per batch.
    Universal,
    /// Deterministic next-frame regression from the previous `W - 1` frames.
    MseBaseline,
}

impl Regime {
    pub fn is_amortised(self) -> bool {
        matches!(self, Regime::Amortised(_) | Regime::Universal)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Joint => write!(f, "joint"),
            Regime::Amortised(c) => write!(f, "amortised({c})"),
            Regime::Universal => write!(f, "universal"),
            Regime::MseBaseline => write!(f, "mse_baseline"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "joint" => return Ok(Regime::Joint),
            "universal" => return Ok(Regime::Universal),
            "mse_baseline" | "mse" => return Ok(Regime::MseBaseline),
            _ => {}
        }
        let inner = s
            .strip_prefix("amortised(")
            .or_else(|| s.strip_prefix("amortized("))
            .and_then(|r| r.strip_suffix(')'));
        match inner.map(str::parse::<usize>) {
            Some(Ok(c)) => Ok(Regime::Amortised(c)),
            _ => Err(Error::Config(format!(
                "unknown regime `{s}` (joint | amortised(C) | universal | mse_baseline)"
            ))),
        }
    }
}

impl TryFrom<String> for Regime {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Regime> for String {
    fn from(r: Regime) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub regime: Regime,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            regime: Regime::Joint,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, window: usize) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParams("need lr > 0, batch_size >= 1, weight_decay >= 0".into()));
        }
        if let Regime::Amortised(c) = self.regime {
            if c >= window {
                return Err(Error::InvalidParams(format!("amortised C = {c} must be < W = {window}")));
            }
        }
        Ok(())
    }
}

/// AdamW with decoupled weight decay and externally supplied learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl AdamW {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f32], grads: &[f32], lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let decay = (1.0 - lr * cfg.weight_decay) as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let g = g as f64;
            *m = (b1 * *m as f64 + (1.0 - b1) * g) as f32;
            *v = (b2 * *v as f64 + (1.0 - b2) * g * g) as f32;
            let mhat = *m as f64 / c1;
            let vhat = *v as f64 / c2;
            *p = *p * decay - (lr * mhat / (vhat.sqrt() + cfg.adam_eps)) as f32;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub lr: f64,
}

/// One training example: a window plus its noise level and conditioning.
struct Sample {
    x0: Vec<f64>,
    t: f64,
    eps: Vec<f64>,
    n_cond: usize,
}

/// Draws one example per trajectory in `order`, with `C` fixed per batch.
fn draw_samples(
    data: &[Trajectory],
    order: &[usize],
    window: usize,
    regime: Regime,
    batch_size: usize,
    r: &mut rng::Rng,
) -> Vec<Sample> {
    let mut out = Vec::with_capacity(order.len());
    let mut n_cond = 0;
    for (i, &j) in order.iter().enumerate() {
        if i % batch_size == 0 {
            n_cond = match regime {
                Regime::Joint => 0,
                Regime::Amortised(c) => c,
                Regime::Universal => r.gen_range(0..window),
                Regime::MseBaseline => window - 1,
            };
        }
        let traj = &data[j];
        let start = r.gen_range(0..=traj.len - window);
        let x0 = traj.window(start, window).to_vec();
        let (t, eps) = if regime == Regime::MseBaseline {
            (0.0, Vec::new())
        } else {
            (r.gen_range(0.0..1.0), standard_normal(x0.len(), r))
        };
        out.push(Sample { x0, t, eps, n_cond });
    }
    out
}

/// Network inputs and the element-wise target for a slice of samples.
struct Batch {
    t: Vec<f64>,
    x: Vec<f64>,
    cond: Vec<f64>,
    mask: Vec<bool>,
    target: Vec<f64>,
    /// Output entries that enter the loss.
    active: Vec<bool>,
}

fn assemble(samples: &[Sample], window: usize, width: usize, regime: Regime) -> Batch {
    let per = window * width;
    let mut b = Batch {
        t: Vec::with_capacity(samples.len()),
        x: Vec::with_capacity(samples.len() * per),
        cond: vec![0.0; samples.len() * per],
        mask: vec![false; samples.len() * window],
        target: Vec::with_capacity(samples.len() * per),
        active: Vec::with_capacity(samples.len() * per),
    };
    for (i, s) in samples.iter().enumerate() {
        let c = s.n_cond * width;
        b.cond[i * per..i * per + c].copy_from_slice(&s.x0[..c]);
        b.mask[i * window..i * window + s.n_cond].fill(true);
        b.t.push(s.t);
        if regime == Regime::MseBaseline {
            b.x.extend(std::iter::repeat_n(0.0, per));
            b.target.extend(std::iter::repeat_n(0.0, per - width));
            b.target.extend_from_slice(&s.x0[per - width..]);
            b.active.extend((0..per).map(|e| e >= per - width));
        } else {
            let (mu, sigma) = kernel(s.t).expect("t in [0, 1)");
            b.x.extend(s.x0.iter().zip(&s.eps).map(|(x, e)| mu * x + sigma * e));
            b.target.extend_from_slice(&s.eps);
            b.active.extend(std::iter::repeat_n(true, per));
        }
    }
    b
}

/// Sum of squared errors over active entries of one chunk, and its
/// gradient scaled by `scale`.
fn chunk_loss(out: &[f64], b: &Batch, scale: f64) -> (f64, Vec<f64>) {
    let mut sse = 0.0;
    let grad = out
        .iter()
        .zip(&b.target)
        .zip(&b.active)
        .map(|((o, y), &a)| {
            if a {
                sse += (o - y) * (o - y);
                2.0 * (o - y) * scale
            } else {
                0.0
            }
        })
        .collect();
    (sse, grad)
}

fn active_per_sample(window: usize, width: usize, regime: Regime) -> usize {
    if regime == Regime::MseBaseline {
        width
    } else {
        window * width
    }
}

/// Stateful trainer; one call to [`Trainer::run_epoch`] per epoch.
pub struct Trainer {
    pub net: ScoreNet<f32>,
    pub opt: AdamW,
    pub cfg: TrainConfig,
    pub epoch: usize,
    pub best: Option<(f64, Vec<f32>)>,
    pub log: Vec<EpochRecord>,
    pool: Vec<Workspace<f32>>,
}

impl Trainer {
    pub fn new(net: ScoreNet<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate(net.config.window)?;
        let n = net.n_params();
        Ok(Self {
            net,
            opt: AdamW::new(n),
            cfg,
            epoch: 0,
            best: None,
            log: Vec::new(),
            pool: Vec::new(),
        })
    }

    fn check_data(&self, data: &[Trajectory]) -> Result<()> {
        let w = self.net.config.window;
        if let Some(t) = data.iter().find(|t| t.len < w) {
            return Err(Error::DataTooShort(format!("trajectory of {} states, window {w}", t.len)));
        }
        Ok(())
    }

    fn steps_per_epoch(&self, n_train: usize) -> usize {
        n_train.div_ceil(self.cfg.batch_size)
    }

    /// Linearly decayed learning rate at global step `step`.
    fn lr_at(&self, step: usize, n_train: usize) -> f64 {
        let total = (self.cfg.epochs * self.steps_per_epoch(n_train)).max(1);
        self.cfg.lr * (1.0 - step as f64 / total as f64).max(0.0)
    }

    /// Loss and (optionally) summed parameter gradients over a batch.
    fn batch_pass(&mut self, samples: &[Sample], width: usize, grads: bool) -> Result<(f64, Vec<f32>)> {
        let w = self.net.config.window;
        let regime = self.cfg.regime;
        let denom = (samples.len() * active_per_sample(w, width, regime)) as f64;
        let chunks: Vec<&[Sample]> = samples.chunks(GRAD_CHUNK).collect();
        if self.pool.len() < chunks.len() {
            self.pool.resize_with(chunks.len(), Workspace::new);
        }
        let net = &self.net;
        let results: Vec<Result<(f64, Vec<f32>)>> = chunks
            .par_iter()
            .zip(self.pool.par_iter_mut())
            .map(|(chunk, ws)| {
                let b = assemble(chunk, w, width, regime);
                let input = NetInput {
                    batch: chunk.len(),
                    width,
                    t: &b.t,
                    x: &b.x,
                    cond: Some(&b.cond),
                    mask: Some(&b.mask),
                };
                let out = net.forward(ws, &input)?;
                let (sse, g) = chunk_loss(&out, &b, 1.0 / denom);
                let mut pg = Vec::new();
                if grads {
                    pg = vec![0.0f32; net.n_params()];
                    net.backward(ws, &g, Some(&mut pg), false)?;
                }
                Ok((sse, pg))
            })
            .collect();
        let mut sse = 0.0;
        let mut total = if grads { vec![0.0f32; self.net.n_params()] } else { Vec::new() };
        for r in results {
            let (s, g) = r?;
            sse += s;
            for (a, b) in total.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((sse / denom, total))
    }

    /// Mean loss over one window per validation trajectory, drawn from a
    /// fixed stream so successive epochs are comparable.
    pub fn validation_loss(&mut self, valid: &[Trajectory]) -> Result<f64> {
        if valid.is_empty() {
            return Ok(f64::NAN);
        }
        self.check_data(valid)?;
        let w = self.net.config.window;
        let mut r = rng::stream(self.cfg.seed, "valid", 0);
        let order: Vec<usize> = (0..valid.len()).collect();
        let samples = draw_samples(valid, &order, w, self.cfg.regime, self.cfg.batch_size, &mut r);
        let width = valid[0].state_size();
        let mut sum = 0.0;
        let mut n = 0usize;
        for batch in samples.chunks(self.cfg.batch_size) {
            let (loss, _) = self.batch_pass(batch, width, false)?;
            sum += loss * batch.len() as f64;
            n += batch.len();
        }
        Ok(sum / n as f64)
    }

    pub fn run_epoch(&mut self, train: &[Trajectory], valid: &[Trajectory]) -> Result<EpochRecord> {
        if train.is_empty() {
            return Err(Error::EmptyTrain);
        }
        self.check_data(train)?;
        let w = self.net.config.window;
        let width = train[0].state_size();
        let mut r = rng::stream(self.cfg.seed, "train", self.epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut r);
        let samples = draw_samples(train, &order, w, self.cfg.regime, self.cfg.batch_size, &mut r);
        let mut step = self.epoch * self.steps_per_epoch(train.len());
        let mut sum = 0.0;
        let mut lr = self.lr_at(step, train.len());
        for (bi, batch) in samples.chunks(self.cfg.batch_size).enumerate() {
            let (loss, grads) = self.batch_pass(batch, width, true)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {} batch {bi}", self.epoch)));
            }
            self.net.params.check_finite(&grads, "gradient")?;
            lr = self.lr_at(step, train.len());
            self.opt.update(&mut self.net.params.values, &grads, lr, &self.cfg);
            sum += loss * batch.len() as f64;
            step += 1;
        }
        let train_loss = sum / train.len() as f64;
        let valid_loss = self.validation_loss(valid)?;
        let rec = EpochRecord {
            epoch: self.epoch,
            train_loss,
            valid_loss,
            lr,
        };
        let score = if valid_loss.is_finite() { valid_loss } else { train_loss };
        if self.best.as_ref().is_none_or(|(b, _)| score < *b) {
            self.best = Some((score, self.net.params.values.clone()));
        }
        self.log.push(rec);
        self.epoch += 1;
        Ok(rec)
    }

    /// Network with the best validation (or training, without a validation
    /// set) loss seen so far; the current network if no epoch has run.
    pub fn best_net(&self) -> ScoreNet<f32> {
        let mut net = self.net.clone();
        if let Some((_, p)) = &self.best {
            net.params.values.clone_from(p);
        }
        net
    }
}

/// Runs all configured epochs and returns the best network and the log.
pub fn train(
    net: ScoreNet<f32>,
    train_set: &[Trajectory],
    valid_set: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<(ScoreNet<f32>, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(net, cfg.clone())?;
    while trainer.epoch < cfg.epochs {
        trainer.run_epoch(train_set, valid_set)?;
    }
    Ok((trainer.best_net(), trainer.log))
}

/// CSV rendering of a loss log: `epoch,train_loss,valid_loss,lr`.
pub fn loss_log_csv(log: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,valid_loss,lr\n");
    for r in log {
        s.push_str(&format!("{},{:e},{:e},{:e}\n", r.epoch, r.train_loss, r.valid_loss, r.lr));
    }
    s
}
