//! Sparse space-time observations as a masking measurement operator, the
//! reconstruction-guidance score term, and observation generators for the
//! data-assimilation protocols.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand_distr::{Distribution, Normal};

use crate::denoise::{Cond, Denoiser};
use crate::error::{Error, Result};
use crate::rng;
use crate::sdecore::kernel;
use crate::trajectory::Trajectory;

/// Values observed at `(time, space)` indices of an `len x width` sequence.
/// Indices are kept sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub len: usize,
    pub width: usize,
    pub indices: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    /// Standard deviation of the measurement noise in `values`.
    pub sigma_y: f64,
    pub seed: u64,
}

impl ObservationSet {
    pub fn new(len: usize, width: usize, indices: Vec<(usize, usize)>, values: Vec<f64>, sigma_y: f64, seed: u64) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} observation indices, {} values",
                indices.len(),
                values.len()
            )));
        }
        if !(sigma_y >= 0.0) {
            return Err(Error::InvalidParams(format!("sigma_y = {sigma_y}")));
        }
        if let Some(&(t, z)) = indices.iter().find(|&&(t, z)| t >= len || z >= width) {
            return Err(Error::IndexOutOfRange(format!("observation ({t}, {z}) in {len} x {width}")));
        }
        let mut pairs: Vec<((usize, usize), f64)> = indices.into_iter().zip(values).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::InvalidParams("duplicate observation index".into()));
        }
        let (indices, values) = pairs.into_iter().unzip();
        Ok(Self {
            len,
            width,
            indices,
            values,
            sigma_y,
            seed,
        })
    }

    pub fn empty(len: usize, width: usize, sigma_y: f64) -> Self {
        Self {
            len,
            width,
            indices: Vec::new(),
            values: Vec::new(),
            sigma_y,
            seed: 0,
        }
    }

    /// Reads `truth` at `indices` and adds `N(0, sigma_y^2)` noise drawn
    /// from a stream of `seed`.
    pub fn observe(truth: &Trajectory, indices: Vec<(usize, usize)>, sigma_y: f64, seed: u64) -> Result<Self> {
        let noise = Normal::new(0.0, sigma_y).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let mut r = rng::stream(seed, "obs-noise", 0);
        let d = truth.state_size();
        if let Some(&(t, z)) = indices.iter().find(|&&(t, z)| t >= truth.len || z >= d) {
            return Err(Error::IndexOutOfRange(format!("observation ({t}, {z}) in {} x {d}", truth.len)));
        }
        let values = indices
            .iter()
            .map(|&(t, z)| truth.data[t * d + z] + noise.sample(&mut r))
            .collect();
        Self::new(truth.len, d, indices, values, sigma_y, seed)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn count(&self) -> usize {
        self.indices.len()
    }

    fn flat(&self, (t, z): (usize, usize)) -> usize {
        t * self.width + z
    }

    /// Noise-free measurement `A vec(x)`.
    pub fn apply_a(&self, x: &Trajectory) -> Result<Vec<f64>> {
        if x.len != self.len || x.state_size() != self.width {
            return Err(Error::IndexOutOfRange(format!(
                "observations on {} x {}, trajectory {} x {}",
                self.len,
                self.width,
                x.len,
                x.state_size()
            )));
        }
        Ok(self.indices.iter().map(|&p| x.data[self.flat(p)]).collect())
    }

    /// `A^T v` as a dense `[len][width]` field with its mask.
    pub fn scatter(&self, values: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut out = vec![0.0; self.len * self.width];
        let mut mask = vec![false; self.len * self.width];
        for (&p, &v) in self.indices.iter().zip(values) {
            let f = self.flat(p);
            out[f] = v;
            mask[f] = true;
        }
        (out, mask)
    }

    /// Observations at states `[start + from, start + rows)`, re-based so
    /// that `start` is row 0.
    pub fn restrict(&self, start: usize, rows: usize, from: usize) -> WindowObservations {
        let lo = start + from;
        let hi = start + rows;
        let mut w = WindowObservations {
            start,
            rows,
            width: self.width,
            flat: Vec::new(),
            values: Vec::new(),
        };
        for (&(t, z), &v) in self.indices.iter().zip(&self.values) {
            if t >= lo && t < hi {
                w.flat.push((t - start) * self.width + z);
                w.values.push(v);
            }
        }
        w
    }

    /// Union of two sets on the same grid; `other` wins on shared indices.
    pub fn merged(&self, other: &ObservationSet) -> Result<Self> {
        if (self.len, self.width) != (other.len, other.width) {
            return Err(Error::ShapeMismatch("merging observation sets on different grids".into()));
        }
        let mut map: std::collections::BTreeMap<(usize, usize), f64> =
            self.indices.iter().copied().zip(self.values.iter().copied()).collect();
        for (&p, &v) in other.indices.iter().zip(&other.values) {
            map.insert(p, v);
        }
        let (indices, values) = map.into_iter().unzip();
        Self::new(self.len, self.width, indices, values, self.sigma_y, self.seed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# sigma_y={} seed={}", self.sigma_y, self.seed)?;
        writeln!(w, "t_idx,z_idx,value")?;
        for (&(t, z), v) in self.indices.iter().zip(&self.values) {
            writeln!(w, "{t},{z},{v}")?;
        }
        Ok(())
    }

    /// Parses the CSV form; the grid shape is not stored and must be given.
    pub fn read_csv<R: std::io::Read>(r: R, len: usize, width: usize) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let bad = |m: &str| Error::Format(format!("observation csv: {m}"));
        let meta = lines.next().ok_or_else(|| bad("empty file"))??;
        let meta = meta.strip_prefix('#').ok_or_else(|| bad("missing metadata line"))?;
        let (mut sigma_y, mut seed) = (None, None);
        for kv in meta.split_whitespace() {
            match kv.split_once('=') {
                Some(("sigma_y", v)) => sigma_y = v.parse::<f64>().ok(),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                _ => return Err(bad(&format!("unknown metadata `{kv}`"))),
            }
        }
        let header = lines.next().ok_or_else(|| bad("missing header"))??;
        if header.trim() != "t_idx,z_idx,value" {
            return Err(bad(&format!("unexpected header `{header}`")));
        }
        let (mut indices, mut values) = (Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parsed = match f.as_slice() {
                [t, z, v] => t.trim().parse::<usize>().ok().zip(z.trim().parse::<usize>().ok()).zip(v.trim().parse::<f64>().ok()),
                _ => None,
            };
            let ((t, z), v) = parsed.ok_or_else(|| bad(&format!("line {}", n + 3)))?;
            indices.push((t, z));
            values.push(v);
        }
        Self::new(
            len,
            width,
            indices,
            values,
            sigma_y.ok_or_else(|| bad("sigma_y"))?,
            seed.ok_or_else(|| bad("seed"))?,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, len: usize, width: usize) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, len, width)
    }
}

/// Observations inside a window of `rows` states starting at global state
/// `start`; `flat` indexes the window's `[rows][width]` layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowObservations {
    pub start: usize,
    pub rows: usize,
    pub width: usize,
    pub flat: Vec<usize>,
    pub values: Vec<f64>,
}

impl WindowObservations {
    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    /// Global `(time, space)` indices of the entries.
    pub fn to_global(&self) -> Vec<(usize, usize)> {
        self.flat
            .iter()
            .map(|&f| (self.start + f / self.width, f % self.width))
            .collect()
    }

    /// Marks every entry of window row `row` as observed with `values`.
    pub fn push_row(&mut self, row: usize, values: &[f64]) {
        debug_assert_eq!(values.len(), self.width);
        for (z, &v) in values.iter().enumerate() {
            self.flat.push(row * self.width + z);
            self.values.push(v);
        }
    }

    /// Dense values and mask over the window.
    pub fn dense(&self) -> (Vec<f64>, Vec<bool>) {
        let mut out = vec![0.0; self.rows * self.width];
        let mut mask = vec![false; self.rows * self.width];
        for (&f, &v) in self.flat.iter().zip(&self.values) {
            out[f] = v;
            mask[f] = true;
        }
        (out, mask)
    }
}

/// Gradient of `-1/2 |y - A x_hat|^2 / (r^2 + sigma_y^2)` with respect to
/// `x_hat`: `A^T (y - A x_hat) / (r^2 + sigma_y^2)`, written into `out` at
/// the observed entries (other entries untouched).
pub fn guidance_residual(x_hat_at: impl Fn(usize) -> f64, obs: &WindowObservations, precision: f64, out: &mut [f64]) {
    for (&f, &y) in obs.flat.iter().zip(&obs.values) {
        out[f] = (y - x_hat_at(f)) * precision;
    }
}

/// Reconstruction-guidance score for a batch of independent windows: the
/// negative input gradient of `1/2 |y - A x_hat(x)|^2 / (r^2 + sigma_y^2)`
/// with `x_hat` the Tweedie estimate from the denoiser. Returns the
/// denoiser's `eps` alongside, so callers need no second forward pass.
/// Members with no observations get a zero field.
#[allow(clippy::too_many_arguments)]
pub fn guidance_score(
    den: &dyn Denoiser,
    t: f64,
    x: &[f64],
    batch: usize,
    width: usize,
    cond: Option<Cond>,
    obs: &[WindowObservations],
    r2: f64,
    sigma_y: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t > 0.0) {
        return Err(Error::OutOfRange(format!("guidance at t = {t}")));
    }
    if obs.len() != batch {
        return Err(Error::ShapeMismatch(format!("{} observation windows for batch {batch}", obs.len())));
    }
    let per = den.window() * width;
    if obs.iter().all(|o| o.is_empty()) {
        return Ok((den.eps(t, x, batch, width, cond)?, vec![0.0; batch * per]));
    }
    let (mu, sigma) = kernel(t)?;
    let precision = 1.0 / (r2 + sigma_y * sigma_y);
    let mut g = vec![0.0; batch * per];
    let (eps, vjp) = den.eps_vjp(t, x, batch, width, cond, &mut |eps: &[f64]| {
        for (b, o) in obs.iter().enumerate() {
            let base = b * per;
            guidance_residual(|f| (x[base + f] - sigma * eps[base + f]) / mu, o, precision, &mut g[base..base + per]);
        }
        g.clone()
    })?;
    // d x_hat / d x = (I - sigma d eps / d x) / mu
    let field = g.iter().zip(&vjp).map(|(gi, vi)| (gi - sigma * vi) / mu).collect();
    Ok((eps, field))
}

/// Uniform sample of `floor(proportion L D)` space-time indices without
/// replacement, plus every index of the first `n_initial_full` states.
pub fn offline_indices(len: usize, width: usize, proportion: f64, n_initial_full: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(proportion > 0.0 && proportion <= 1.0) {
        return Err(Error::InvalidProportion(proportion));
    }
    let n = len * width;
    let k = ((proportion * n as f64).floor() as usize).min(n);
    let mut r = rng::stream(seed, "obs-indices", 0);
    let mut flat: BTreeSet<usize> = index::sample(&mut r, n, k).into_iter().collect();
    flat.extend(0..n_initial_full.min(len) * width);
    Ok(flat.into_iter().map(|f| (f / width, f % width)).collect())
}

/// Offline DA observations of `truth` with measurement noise `sigma_y`.
pub fn sample_offline_obs(truth: &Trajectory, proportion: f64, n_initial_full: usize, sigma_y: f64, seed: u64) -> Result<ObservationSet> {
    let idx = offline_indices(truth.len, truth.state_size(), proportion, n_initial_full, seed)?;
    ObservationSet::observe(truth, idx, sigma_y, seed)
}

/// Share of the first block observed at the first online DA step.
pub const FIRST_BLOCK_PROPORTION: f64 = 0.1;

/// One observation set per block of `s` states: block `j` covers states
/// `[j s, (j + 1) s)`. The first block is sampled at
/// [`FIRST_BLOCK_PROPORTION`], later ones at `proportion`.
pub fn online_obs_stream(truth: &Trajectory, s: usize, proportion: f64, sigma_y: f64, seed: u64) -> Result<Vec<ObservationSet>> {
    if s == 0 {
        return Err(Error::InvalidParams("online block length must be >= 1".into()));
    }
    if !(proportion > 0.0 && proportion <= 1.0) {
        return Err(Error::InvalidProportion(proportion));
    }
    let d = truth.state_size();
    let mut out = Vec::new();
    for (j, lo) in (0..truth.len).step_by(s).enumerate() {
        let rows = s.min(truth.len - lo);
        let p = if j == 0 { FIRST_BLOCK_PROPORTION } else { proportion };
        let n = rows * d;
        let k = ((p * n as f64).floor() as usize).min(n);
        let mut r = rng::stream(seed, "online-indices", j as u64);
        let mut flat = index::sample(&mut r, n, k).into_vec();
        flat.sort_unstable();
        let idx = flat.into_iter().map(|f| (lo + f / d, f % d)).collect();
        out.push(ObservationSet::observe(truth, idx, sigma_y, rng::derive_seed(seed, "online-noise", j as u64))?);
    }
    Ok(out)
}

/// Number of online DA steps until forecasts of `f` states reach state `len`.
pub fn online_da_steps(len: usize, s: usize, f: usize) -> usize {
    len.saturating_sub(f).div_ceil(s.max(1)) + 1
}
