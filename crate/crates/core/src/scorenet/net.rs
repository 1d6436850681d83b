//! Dilated convolutional U-Net over a window of stacked states.
//!
//! Activations are laid out `[channels][batch * D]`. Every op is a circular
//! 1D convolution, a per-position channel normalization, a SiLU or an
//! addition, so the whole network commutes with circular spatial shifts.
//! Instead of pooling, deeper levels use dilation `2^level` at full
//! resolution, which keeps the equivariance exact for every shift.
//!
//! The forward pass records every intermediate in a [`Workspace`]; the
//! backward pass replays the op list in reverse.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;

const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Number of states `W = 2k + 1` in a window.
    pub window: usize,
    /// `[channels, residual blocks]` per level.
    pub levels: Vec<[usize; 2]>,
    pub kernel_size: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            window: 5,
            levels: vec![[32, 2], [64, 2]],
            kernel_size: 3,
        }
    }
}

impl NetConfig {
    /// Noised window, conditioning window, per-frame mask, diffusion time.
    pub fn in_channels(&self) -> usize {
        3 * self.window + 1
    }

    pub fn half_window(&self) -> usize {
        self.window / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!("window {} must be odd and >= 3", self.window)));
        }
        if self.levels.is_empty() || self.levels.iter().any(|l| l[0] == 0) {
            return Err(Error::InvalidParams("need at least one level with channels > 0".into()));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!("kernel_size {} must be odd", self.kernel_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Conv {
    c_in: usize,
    c_out: usize,
    kernel: usize,
    dilation: usize,
    weight: usize,
    bias: usize,
}

impl Conv {
    fn patch(&self) -> usize {
        self.c_in * self.kernel
    }

    fn offset(&self, j: usize) -> isize {
        (j as isize - (self.kernel / 2) as isize) * self.dilation as isize
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Conv { conv: usize, x: usize, y: usize },
    Norm { x: usize, y: usize },
    Silu { x: usize, y: usize },
    Add { a: usize, b: usize, y: usize },
}

#[derive(Debug, Clone)]
struct Program {
    convs: Vec<Conv>,
    ops: Vec<Op>,
    slot_channels: Vec<usize>,
    output: usize,
}

struct Builder<'a, T> {
    params: &'a mut ParamStore<T>,
    kernel: usize,
    program: Program,
}

impl<T: Real> Builder<'_, T> {
    fn slot(&mut self, channels: usize) -> usize {
        self.program.slot_channels.push(channels);
        self.program.slot_channels.len() - 1
    }

    fn conv(&mut self, name: &str, x: usize, c_out: usize, dilation: usize) -> usize {
        let c_in = self.program.slot_channels[x];
        let weight = self.params.register(format!("{name}.weight"), &[c_out, c_in, self.kernel]);
        let bias = self.params.register(format!("{name}.bias"), &[c_out]);
        self.program.convs.push(Conv {
            c_in,
            c_out,
            kernel: self.kernel,
            dilation,
            weight,
            bias,
        });
        let y = self.slot(c_out);
        let conv = self.program.convs.len() - 1;
        self.program.ops.push(Op::Conv { conv, x, y });
        y
    }

    fn unary(&mut self, x: usize, op: fn(usize, usize) -> Op) -> usize {
        let y = self.slot(self.program.slot_channels[x]);
        self.program.ops.push(op(x, y));
        y
    }

    fn norm(&mut self, x: usize) -> usize {
        self.unary(x, |x, y| Op::Norm { x, y })
    }

    fn silu(&mut self, x: usize) -> usize {
        self.unary(x, |x, y| Op::Silu { x, y })
    }

    fn add(&mut self, a: usize, b: usize) -> usize {
        let y = self.slot(self.program.slot_channels[a]);
        self.program.ops.push(Op::Add { a, b, y });
        y
    }

    /// Pre-activation residual block.
    fn res_block(&mut self, name: &str, x: usize, dilation: usize) -> usize {
        let c = self.program.slot_channels[x];
        let h = self.norm(x);
        let h = self.silu(h);
        let h = self.conv(&format!("{name}.conv1"), h, c, dilation);
        let h = self.norm(h);
        let h = self.silu(h);
        let h = self.conv(&format!("{name}.conv2"), h, c, dilation);
        self.add(x, h)
    }
}

fn build<T: Real>(cfg: &NetConfig, params: &mut ParamStore<T>) -> Program {
    let mut b = Builder {
        params,
        kernel: cfg.kernel_size,
        program: Program {
            convs: Vec::new(),
            ops: Vec::new(),
            slot_channels: Vec::new(),
            output: 0,
        },
    };
    let input = b.slot(cfg.in_channels());
    let mut h = b.conv("stem", input, cfg.levels[0][0], 1);
    let mut skips = Vec::new();
    for (i, &[c, n_res]) in cfg.levels.iter().enumerate() {
        let dilation = 1 << i;
        if i > 0 {
            h = b.conv(&format!("down{i}"), h, c, dilation);
        }
        for r in 0..n_res {
            h = b.res_block(&format!("enc{i}.res{r}"), h, dilation);
        }
        skips.push(h);
    }
    for i in (0..cfg.levels.len().saturating_sub(1)).rev() {
        let [c, n_res] = cfg.levels[i];
        let dilation = 1 << i;
        h = b.conv(&format!("up{i}"), h, c, dilation);
        h = b.add(h, skips[i]);
        for r in 0..n_res {
            h = b.res_block(&format!("dec{i}.res{r}"), h, dilation);
        }
    }
    h = b.silu(h);
    h = b.conv("head", h, cfg.window, 1);
    b.program.output = h;
    b.program
}

/// Inputs for a batch of windows; every array is `[batch][W][D]` except
/// `t` (`[batch]`) and `mask` (`[batch][W]`).
#[derive(Debug, Clone, Copy)]
pub struct NetInput<'a> {
    pub batch: usize,
    pub width: usize,
    pub t: &'a [f64],
    pub x: &'a [f64],
    pub cond: Option<&'a [f64]>,
    pub mask: Option<&'a [bool]>,
}

/// Reusable activation and gradient buffers for one batch shape.
#[derive(Debug, Default)]
pub struct Workspace<T> {
    slots: Vec<Vec<T>>,
    grads: Vec<Vec<T>>,
    cols: Vec<T>,
    stats: Vec<T>,
    /// `(mu_t, sigma_t)` per batch element.
    gates: Vec<(f64, f64)>,
    batch: usize,
    width: usize,
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Self {
            slots: Vec::new(),
            grads: Vec::new(),
            cols: Vec::new(),
            stats: Vec::new(),
            gates: Vec::new(),
            batch: 0,
            width: 0,
        }
    }

    fn n(&self) -> usize {
        self.batch * self.width
    }
}

#[derive(Debug, Clone)]
pub struct ScoreNet<T: Real> {
    pub config: NetConfig,
    pub params: ParamStore<T>,
    program: Program,
}

/// Copies `x` shifted circularly by `shift` within each length-`d` block of
/// `dst` (`dst[z] = x[(z + shift) mod d]`).
#[inline]
fn gather_shifted<T: Copy>(dst: &mut [T], x: &[T], d: usize, shift: usize) {
    for (db, xb) in dst.chunks_exact_mut(d).zip(x.chunks_exact(d)) {
        db[..d - shift].copy_from_slice(&xb[shift..]);
        db[d - shift..].copy_from_slice(&xb[..shift]);
    }
}

/// Adjoint of [`gather_shifted`]: `g[(z + shift) mod d] += src[z]`.
#[inline]
fn scatter_shifted<T: Real>(g: &mut [T], src: &[T], d: usize, shift: usize) {
    for (gb, sb) in g.chunks_exact_mut(d).zip(src.chunks_exact(d)) {
        for (a, &b) in gb[shift..].iter_mut().zip(&sb[..d - shift]) {
            *a += b;
        }
        for (a, &b) in gb[..shift].iter_mut().zip(&sb[d - shift..]) {
            *a += b;
        }
    }
}

fn im2col<T: Real>(conv: &Conv, x: &[T], cols: &mut [T], n: usize, d: usize) {
    for c in 0..conv.c_in {
        for j in 0..conv.kernel {
            let shift = conv.offset(j).rem_euclid(d as isize) as usize;
            let row = c * conv.kernel + j;
            gather_shifted(&mut cols[row * n..(row + 1) * n], &x[c * n..(c + 1) * n], d, shift);
        }
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> ScoreNet<T> {
    /// Fan-in scaled uniform weights, zero biases, zero head.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let program = build(&config, &mut params);
        let mut r = rng::stream(seed, "init", 0);
        let head = program.convs.len() - 1;
        for (i, conv) in program.convs.iter().enumerate() {
            if i == head {
                continue;
            }
            let bound = 1.0 / (conv.patch() as f64).sqrt();
            let len = conv.c_out * conv.patch();
            for w in &mut params.values[conv.weight..conv.weight + len] {
                *w = T::of(r.gen_range(-bound..bound));
            }
        }
        Ok(Self { config, params, program })
    }

    pub fn with_params(config: NetConfig, values: Vec<T>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        if values.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters for a net of {}",
                values.len(),
                net.params.len()
            )));
        }
        net.params.values = values;
        Ok(net)
    }

    pub fn cast<U: Real>(&self) -> ScoreNet<U> {
        ScoreNet {
            config: self.config.clone(),
            params: self.params.cast(),
            program: self.program.clone(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn load_input(&self, ws: &mut Workspace<T>, input: &NetInput) -> Result<()> {
        let w = self.config.window;
        let (b, d) = (input.batch, input.width);
        let per = w * d;
        if d == 0 || input.x.len() != b * per || input.t.len() != b {
            return Err(Error::ShapeMismatch(format!(
                "net input: x has {} values, t has {}, expected batch {b} x [{w}][{d}]",
                input.x.len(),
                input.t.len()
            )));
        }
        if input.cond.is_some_and(|c| c.len() != b * per) || input.mask.is_some_and(|m| m.len() != b * w) {
            return Err(Error::ShapeMismatch("conditioning channels or mask".into()));
        }
        ws.batch = b;
        ws.width = d;
        ws.gates.clear();
        for &t in input.t {
            ws.gates.push(crate::sdecore::kernel(t)?);
        }
        let n = ws.n();
        ws.slots.resize_with(self.program.slot_channels.len(), Vec::new);
        ws.grads.resize_with(self.program.slot_channels.len(), Vec::new);
        for (s, &c) in ws.slots.iter_mut().zip(&self.program.slot_channels) {
            s.resize(c * n, T::zero());
        }
        let slot = &mut ws.slots[0];
        for bi in 0..b {
            for f in 0..w {
                let src = &input.x[bi * per + f * d..bi * per + (f + 1) * d];
                let dst = &mut slot[f * n + bi * d..f * n + (bi + 1) * d];
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o = T::of(v);
                }
                let dst = &mut slot[(w + f) * n + bi * d..(w + f) * n + (bi + 1) * d];
                match input.cond {
                    Some(c) => {
                        for (o, &v) in dst.iter_mut().zip(&c[bi * per + f * d..bi * per + (f + 1) * d]) {
                            *o = T::of(v);
                        }
                    }
                    None => dst.fill(T::zero()),
                }
                let m = input.mask.is_some_and(|m| m[bi * w + f]);
                slot[(2 * w + f) * n + bi * d..(2 * w + f) * n + (bi + 1) * d]
                    .fill(if m { T::one() } else { T::zero() });
            }
            slot[3 * w * n + bi * d..3 * w * n + (bi + 1) * d].fill(T::of(input.t[bi]));
        }
        Ok(())
    }

    /// Predicted noise `[batch][W][D]`.
    pub fn forward(&self, ws: &mut Workspace<T>, input: &NetInput) -> Result<Vec<f64>> {
        self.load_input(ws, input)?;
        let (n, d) = (ws.n(), ws.width);
        for op in &self.program.ops {
            match *op {
                Op::Conv { conv, x, y } => {
                    let conv = &self.program.convs[conv];
                    ws.cols.resize(conv.patch() * n, T::zero());
                    im2col(conv, &ws.slots[x], &mut ws.cols, n, d);
                    let out = &mut ws.slots[y];
                    for (o, row) in out.chunks_exact_mut(n).enumerate() {
                        row.fill(self.params.values[conv.bias + o]);
                    }
                    let k = conv.patch();
                    T::gemm(
                        conv.c_out,
                        k,
                        n,
                        T::one(),
                        &self.params.values[conv.weight..conv.weight + conv.c_out * k],
                        k as isize,
                        1,
                        &ws.cols,
                        n as isize,
                        1,
                        T::one(),
                        out,
                        n as isize,
                        1,
                    );
                }
                Op::Norm { x, y } => {
                    let c = self.program.slot_channels[x];
                    let (src, dst) = pair(&mut ws.slots, x, y);
                    normalize(src, dst, c, n, &mut ws.stats);
                }
                Op::Silu { x, y } => {
                    let (src, dst) = pair(&mut ws.slots, x, y);
                    for (o, &v) in dst.iter_mut().zip(src.iter()) {
                        *o = v * sigmoid(v);
                    }
                }
                Op::Add { a, b, y } => {
                    let (sa, sb, dst) = triple(&mut ws.slots, a, b, y);
                    for ((o, &p), &q) in dst.iter_mut().zip(sa.iter()).zip(sb.iter()) {
                        *o = p + q;
                    }
                }
            }
        }
        Ok(self.read_output(ws))
    }

    /// `eps = sigma_t x + mu_t h` with `h` the last layer, so the identity
    /// part of the noise prediction at high noise needs no learning.
    fn read_output(&self, ws: &Workspace<T>) -> Vec<f64> {
        let w = self.config.window;
        let (b, d) = (ws.batch, ws.width);
        let n = b * d;
        let (out, x) = (&ws.slots[self.program.output], &ws.slots[0]);
        let mut eps = vec![0.0; b * w * d];
        for bi in 0..b {
            let (mu, sigma) = ws.gates[bi];
            for f in 0..w {
                for z in 0..d {
                    let i = f * n + bi * d + z;
                    eps[(bi * w + f) * d + z] = sigma * x[i].as_f64() + mu * out[i].as_f64();
                }
            }
        }
        eps
    }

    /// Reverse pass after [`forward`](Self::forward) with the same
    /// workspace. `grad_eps` is `dL/d eps` in `[batch][W][D]`; parameter
    /// gradients are accumulated into `param_grads` when given. Returns
    /// `dL/dx` for the noised window when `want_input`.
    pub fn backward(
        &self,
        ws: &mut Workspace<T>,
        grad_eps: &[f64],
        mut param_grads: Option<&mut [T]>,
        want_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let w = self.config.window;
        let (b, d) = (ws.batch, ws.width);
        let n = b * d;
        if grad_eps.len() != b * w * d {
            return Err(Error::ShapeMismatch("output cotangent".into()));
        }
        if param_grads.as_ref().is_some_and(|g| g.len() != self.params.len()) {
            return Err(Error::ShapeMismatch("parameter gradient buffer".into()));
        }
        for (g, &c) in ws.grads.iter_mut().zip(&self.program.slot_channels) {
            g.clear();
            g.resize(c * n, T::zero());
        }
        {
            let g = &mut ws.grads[self.program.output];
            for bi in 0..b {
                let mu = ws.gates[bi].0;
                for f in 0..w {
                    for z in 0..d {
                        g[f * n + bi * d + z] = T::of(mu * grad_eps[(bi * w + f) * d + z]);
                    }
                }
            }
        }
        for op in self.program.ops.iter().rev() {
            match *op {
                Op::Conv { conv, x, y } => {
                    let conv = &self.program.convs[conv];
                    let k = conv.patch();
                    let gy = std::mem::take(&mut ws.grads[y]);
                    if let Some(pg) = param_grads.as_deref_mut() {
                        ws.cols.resize(k * n, T::zero());
                        im2col(conv, &ws.slots[x], &mut ws.cols, n, d);
                        T::gemm(
                            conv.c_out,
                            n,
                            k,
                            T::one(),
                            &gy,
                            n as isize,
                            1,
                            &ws.cols,
                            1,
                            n as isize,
                            T::one(),
                            &mut pg[conv.weight..conv.weight + conv.c_out * k],
                            k as isize,
                            1,
                        );
                        for (o, row) in gy.chunks_exact(n).enumerate() {
                            pg[conv.bias + o] += row.iter().copied().sum::<T>();
                        }
                    }
                    if x != 0 || want_input {
                        ws.cols.clear();
                        ws.cols.resize(k * n, T::zero());
                        T::gemm(
                            k,
                            conv.c_out,
                            n,
                            T::one(),
                            &self.params.values[conv.weight..conv.weight + conv.c_out * k],
                            1,
                            k as isize,
                            &gy,
                            n as isize,
                            1,
                            T::zero(),
                            &mut ws.cols,
                            n as isize,
                            1,
                        );
                        let gx = &mut ws.grads[x];
                        for c in 0..conv.c_in {
                            for j in 0..conv.kernel {
                                let shift = conv.offset(j).rem_euclid(d as isize) as usize;
                                let row = c * conv.kernel + j;
                                scatter_shifted(
                                    &mut gx[c * n..(c + 1) * n],
                                    &ws.cols[row * n..(row + 1) * n],
                                    d,
                                    shift,
                                );
                            }
                        }
                    }
                    ws.grads[y] = gy;
                }
                Op::Norm { x, y } => {
                    let c = self.program.slot_channels[x];
                    let gy = std::mem::take(&mut ws.grads[y]);
                    normalize_backward(&ws.slots[x], &ws.slots[y], &gy, &mut ws.grads[x], c, n, &mut ws.stats);
                    ws.grads[y] = gy;
                }
                Op::Silu { x, y } => {
                    let gy = std::mem::take(&mut ws.grads[y]);
                    for ((g, &v), &up) in ws.grads[x].iter_mut().zip(&ws.slots[x]).zip(&gy) {
                        let s = sigmoid(v);
                        *g += up * s * (T::one() + v * (T::one() - s));
                    }
                    ws.grads[y] = gy;
                }
                Op::Add { a, b: bb, y } => {
                    let gy = std::mem::take(&mut ws.grads[y]);
                    for (g, &up) in ws.grads[a].iter_mut().zip(&gy) {
                        *g += up;
                    }
                    for (g, &up) in ws.grads[bb].iter_mut().zip(&gy) {
                        *g += up;
                    }
                    ws.grads[y] = gy;
                }
            }
        }
        if !want_input {
            return Ok(None);
        }
        let g = &ws.grads[0];
        let mut gx = vec![0.0; b * w * d];
        for bi in 0..b {
            let sigma = ws.gates[bi].1;
            for f in 0..w {
                for z in 0..d {
                    let i = (bi * w + f) * d + z;
                    gx[i] = g[f * n + bi * d + z].as_f64() + sigma * grad_eps[i];
                }
            }
        }
        Ok(Some(gx))
    }

    /// `(loss, dloss/dparams)` for a scalar loss of the output.
    pub fn grad_params(
        &self,
        ws: &mut Workspace<T>,
        input: &NetInput,
        loss_fn: impl FnOnce(&[f64]) -> (f64, Vec<f64>),
    ) -> Result<(f64, Vec<T>)> {
        let eps = self.forward(ws, input)?;
        let (loss, g) = loss_fn(&eps);
        let mut grads = vec![T::zero(); self.params.len()];
        self.backward(ws, &g, Some(&mut grads), false)?;
        self.params.check_finite(&grads, "gradient")?;
        Ok((loss, grads))
    }

    /// `(value, dvalue/dx)` for a scalar function of the output, with the
    /// parameters held fixed.
    pub fn grad_input(
        &self,
        ws: &mut Workspace<T>,
        input: &NetInput,
        scalar_fn: impl FnOnce(&[f64]) -> (f64, Vec<f64>),
    ) -> Result<(f64, Vec<f64>)> {
        let eps = self.forward(ws, input)?;
        let (value, g) = scalar_fn(&eps);
        let gx = self.backward(ws, &g, None, true)?.expect("input gradient requested");
        if gx.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input gradient".into()));
        }
        Ok((value, gx))
    }
}

fn pair<T>(slots: &mut [Vec<T>], x: usize, y: usize) -> (&[T], &mut [T]) {
    assert!(x < y);
    let (lo, hi) = slots.split_at_mut(y);
    (&lo[x], &mut hi[0])
}

fn triple<T>(slots: &mut [Vec<T>], a: usize, b: usize, y: usize) -> (&[T], &[T], &mut [T]) {
    assert!(a < y && b < y);
    let (lo, hi) = slots.split_at_mut(y);
    (&lo[a], &lo[b], &mut hi[0])
}

/// Per-position mean and inverse standard deviation over channels, stored
/// as `stats[0..n]` and `stats[n..2n]`.
fn channel_stats<T: Real>(x: &[T], c: usize, n: usize, stats: &mut Vec<T>) {
    stats.clear();
    stats.resize(2 * n, T::zero());
    let (mean, inv) = stats.split_at_mut(n);
    let cf = T::of(c as f64);
    for row in x.chunks_exact(n) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / cf);
    for row in x.chunks_exact(n).take(c) {
        for ((s, &v), &m) in inv.iter_mut().zip(row).zip(mean.iter()) {
            *s += (v - m) * (v - m);
        }
    }
    let eps = T::of(NORM_EPS);
    inv.iter_mut().for_each(|s| *s = T::one() / (*s / cf + eps).sqrt());
}

fn normalize<T: Real>(x: &[T], y: &mut [T], c: usize, n: usize, stats: &mut Vec<T>) {
    channel_stats(x, c, n, stats);
    let (mean, inv) = stats.split_at(n);
    for (yr, xr) in y.chunks_exact_mut(n).zip(x.chunks_exact(n)) {
        for (((o, &v), &m), &s) in yr.iter_mut().zip(xr).zip(mean).zip(inv) {
            *o = (v - m) * s;
        }
    }
}

/// `gx += inv (gy - mean_c(gy) - xhat mean_c(gy xhat))`.
fn normalize_backward<T: Real>(x: &[T], xhat: &[T], gy: &[T], gx: &mut [T], c: usize, n: usize, stats: &mut Vec<T>) {
    channel_stats(x, c, n, stats);
    let inv = stats[n..].to_vec();
    let mut mg = vec![T::zero(); n];
    let mut mgx = vec![T::zero(); n];
    for (gr, hr) in gy.chunks_exact(n).zip(xhat.chunks_exact(n)) {
        for p in 0..n {
            mg[p] += gr[p];
            mgx[p] += gr[p] * hr[p];
        }
    }
    let cf = T::of(c as f64);
    for p in 0..n {
        mg[p] = mg[p] / cf;
        mgx[p] = mgx[p] / cf;
    }
    for ((o, gr), hr) in gx.chunks_exact_mut(n).zip(gy.chunks_exact(n)).zip(xhat.chunks_exact(n)) {
        for p in 0..n {
            o[p] += inv[p] * (gr[p] - mg[p] - hr[p] * mgx[p]);
        }
    }
}
