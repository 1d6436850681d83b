//! Forecast and assimilation metrics: per-step MSE and spatial Pearson
//! correlation, RMSD, high-correlation time, spectra, and the climatology,
//! persistence and interpolation baselines.
//!
//! Spreads are reported as three standard errors of the per-trajectory
//! metric.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use spade::{DelaunayTriangulation, FloatTriangulation, HasPosition, Point2, Triangulation};

use crate::conditioning::ObservationSet;
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Correlation level defining the high-correlation time.
pub const RHO_THRESHOLD: f64 = 0.8;

/// Multiplier applied to standard errors in reported spreads.
pub const SE_MULTIPLIER: f64 = 3.0;

fn check_pairs(pred: &[Trajectory], truth: &[Trajectory]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions, {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::ShapeMismatch("no trajectories".into()));
    }
    let first = &truth[0];
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        if !p.same_shape(t) || !t.same_shape(first) {
            return Err(Error::ShapeMismatch(format!(
                "trajectory {i}: prediction {}x{}x{}, truth {}x{}x{}",
                p.len, p.channels, p.width, t.len, t.channels, t.width
            )));
        }
    }
    Ok(())
}

/// Mean and `SE_MULTIPLIER` standard errors of a sample and its size;
/// NaNs are skipped.
pub fn mean_spread(values: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.filter(|x| !x.is_nan()).collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0, n);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, SE_MULTIPLIER * (var / n as f64).sqrt(), n)
}

fn step_mse(p: &[f64], t: &[f64]) -> f64 {
    p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64
}

/// Per-step MSE of every trajectory, `[n][L]`.
fn mse_matrix(pred: &[Trajectory], truth: &[Trajectory]) -> Vec<Vec<f64>> {
    pred.par_iter()
        .zip(truth)
        .map(|(p, t)| (0..t.len).map(|l| step_mse(p.state(l), t.state(l))).collect())
        .collect()
}

/// Pearson correlation of two fields; NaN when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if !(va > 0.0 && vb > 0.0) {
        return f64::NAN;
    }
    (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)
}

fn rho_matrix(pred: &[Trajectory], truth: &[Trajectory]) -> Vec<Vec<f64>> {
    pred.par_iter()
        .zip(truth)
        .map(|(p, t)| (0..t.len).map(|l| pearson(p.state(l), t.state(l))).collect())
        .collect()
}

fn column(m: &[Vec<f64>], l: usize) -> impl Iterator<Item = f64> + '_ {
    m.iter().map(move |row| row[l])
}

/// Mean over space and trajectories at each time step.
pub fn mse_per_step(pred: &[Trajectory], truth: &[Trajectory]) -> Result<Vec<f64>> {
    check_pairs(pred, truth)?;
    let m = mse_matrix(pred, truth);
    Ok((0..truth[0].len).map(|l| mean_spread(column(&m, l)).0).collect())
}

/// Per-step correlation averaged over trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PearsonSeries {
    pub rho: Vec<f64>,
    /// `(trajectory, step)` pairs with a constant field, excluded from the mean.
    pub degenerate: usize,
}

pub fn pearson_per_step(pred: &[Trajectory], truth: &[Trajectory]) -> Result<PearsonSeries> {
    check_pairs(pred, truth)?;
    let m = rho_matrix(pred, truth);
    let degenerate = m.iter().flatten().filter(|r| r.is_nan()).count();
    let rho = (0..truth[0].len).map(|l| mean_spread(column(&m, l)).0).collect();
    Ok(PearsonSeries { rho, degenerate })
}

/// `dt` times the number of leading steps with `rho > threshold`.
pub fn high_correlation_time(rho: &[f64], threshold: f64, dt: f64) -> f64 {
    dt * rho.iter().take_while(|&&r| r > threshold).count() as f64
}

/// `sqrt(mean_l MSE_l)` and the spread of the per-trajectory RMSD.
pub fn rmsd(pred: &[Trajectory], truth: &[Trajectory]) -> Result<(f64, f64)> {
    check_pairs(pred, truth)?;
    let m = mse_matrix(pred, truth);
    let len = truth[0].len;
    let pooled: f64 = (0..len).map(|l| mean_spread(column(&m, l)).0).sum::<f64>() / len as f64;
    let per_traj = m.iter().map(|row| (row.iter().sum::<f64>() / len as f64).sqrt());
    Ok((pooled.sqrt(), mean_spread(per_traj).1))
}

/// Every metric of a set of predictions against their truths.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub mse: Vec<f64>,
    pub mse_se: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_se: Vec<f64>,
    pub rmsd: f64,
    pub rmsd_se: f64,
    pub t_max: f64,
    pub t_max_se: f64,
    pub n_trajectories: usize,
    pub degenerate: usize,
}

impl MetricSeries {
    pub fn compute(pred: &[Trajectory], truth: &[Trajectory]) -> Result<Self> {
        check_pairs(pred, truth)?;
        let len = truth[0].len;
        let dt = truth[0].dt_save;
        let mse_m = mse_matrix(pred, truth);
        let rho_m = rho_matrix(pred, truth);
        let (mse, mse_se): (Vec<f64>, Vec<f64>) = (0..len)
            .map(|l| {
                let (m, s, _) = mean_spread(column(&mse_m, l));
                (m, s)
            })
            .unzip();
        let (rho, rho_se): (Vec<f64>, Vec<f64>) = (0..len)
            .map(|l| {
                let (m, s, _) = mean_spread(column(&rho_m, l));
                (m, s)
            })
            .unzip();
        let rmsd = (mse.iter().sum::<f64>() / len as f64).sqrt();
        let rmsd_se = mean_spread(mse_m.iter().map(|row| (row.iter().sum::<f64>() / len as f64).sqrt())).1;
        let t_max = high_correlation_time(&rho, RHO_THRESHOLD, dt);
        let t_max_se = mean_spread(rho_m.iter().map(|row| high_correlation_time(row, RHO_THRESHOLD, dt))).1;
        Ok(Self {
            mse,
            mse_se,
            rho,
            rho_se,
            rmsd,
            rmsd_se,
            t_max,
            t_max_se,
            n_trajectories: pred.len(),
            degenerate: rho_m.iter().flatten().filter(|r| r.is_nan()).count(),
        })
    }

    /// Per-step companion CSV, steps numbered from 1.
    pub fn series_csv(&self) -> String {
        let mut s = String::from("l,mse,mse_se,rho,rho_se\n");
        for l in 0..self.mse.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                l + 1,
                self.mse[l],
                self.mse_se[l],
                self.rho[l],
                self.rho_se[l]
            );
        }
        s
    }
}

/// Amplitudes `|FFT(u_l)|` of one state at wave numbers `0..=D/2`.
pub fn spectrum(traj: &Trajectory, time_index: usize) -> Result<Vec<f64>> {
    if time_index >= traj.len {
        return Err(Error::IndexOutOfRange(format!("state {time_index} of {}", traj.len)));
    }
    let u = traj.state(time_index);
    let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    Ok(buf[..=u.len() / 2].iter().map(|c| c.norm()).collect())
}

/// Mean field over every state of every training trajectory.
pub fn baseline_climatology(train: &[Trajectory]) -> Result<Vec<f64>> {
    let first = train.first().ok_or(Error::EmptyTrain)?;
    let d = first.state_size();
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    for t in train {
        if t.state_size() != d {
            return Err(Error::ShapeMismatch("training states of unequal size".into()));
        }
        for l in 0..t.len {
            for (s, v) in sum.iter_mut().zip(t.state(l)) {
                *s += v;
            }
        }
        count += t.len;
    }
    if count == 0 {
        return Err(Error::EmptyTrain);
    }
    Ok(sum.into_iter().map(|s| s / count as f64).collect())
}

/// `field` repeated `len` times.
pub fn repeat_state(field: &[f64], len: usize, dt_save: f64) -> Trajectory {
    let data = field.iter().copied().cycle().take(field.len() * len).collect();
    Trajectory {
        data,
        len,
        channels: 1,
        width: field.len(),
        dt_save,
    }
}

/// Last state of `init` repeated `len` times.
pub fn baseline_persistence(init: &Trajectory, len: usize) -> Result<Trajectory> {
    if init.len == 0 {
        return Err(Error::InitTooShort("persistence needs one state".into()));
    }
    Ok(repeat_state(init.state(init.len - 1), len, init.dt_save))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMethod {
    Linear,
    /// Sibson C1 natural-neighbour interpolation.
    Cubic,
    Nearest,
}

impl FromStr for InterpMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "cubic" => Ok(Self::Cubic),
            "nearest" => Ok(Self::Nearest),
            _ => Err(Error::Config(format!("unknown interpolation `{s}` (linear | cubic | nearest)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    at: Point2<f64>,
    value: f64,
}

impl HasPosition for Sample {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.at
    }
}

/// Scattered-data interpolation of the observations over the `(time,
/// space)` index grid, with nearest-neighbour values outside the convex
/// hull of the observed points.
pub fn baseline_interpolate(obs: &ObservationSet, method: InterpMethod, dt_save: f64) -> Result<Trajectory> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let mut tri: DelaunayTriangulation<Sample> = DelaunayTriangulation::new();
    for (&(l, z), &value) in obs.indices.iter().zip(&obs.values) {
        tri.insert(Sample {
            at: Point2::new(l as f64, z as f64),
            value,
        })
        .map_err(|e| Error::InvalidParams(format!("observation ({l}, {z}): {e}")))?;
    }
    let nn = tri.natural_neighbor();
    let bary = tri.barycentric();
    let grads = nn.estimate_gradients(|v| v.data().value);
    let nearest = |p: Point2<f64>| tri.nearest_neighbor(p).map(|v| v.data().value).unwrap_or(0.0);
    let mut out = Trajectory::zeros(obs.len, 1, obs.width, dt_save);
    for l in 0..obs.len {
        for z in 0..obs.width {
            let p = Point2::new(l as f64, z as f64);
            let v = match method {
                InterpMethod::Linear => bary.interpolate(|v| v.data().value, p),
                InterpMethod::Cubic => nn.interpolate_gradient(|v| v.data().value, &grads, 1.0, p),
                InterpMethod::Nearest => None,
            };
            out.data[l * obs.width + z] = v.unwrap_or_else(|| nearest(p));
        }
    }
    Ok(out)
}

/// One row of the metrics CSV; optional fields render empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub task: String,
    pub model: String,
    pub seed: u64,
    pub gamma: Option<f64>,
    pub predict: Option<usize>,
    pub cond: Option<usize>,
    pub proportion: Option<f64>,
    pub rmsd: f64,
    pub rmsd_se: f64,
    pub t_max: f64,
    pub t_max_se: f64,
    pub nfe: u64,
    pub wall_s: f64,
}

pub const METRICS_HEADER: &str = "task,model,seed,gamma,P,C,proportion,rmsd,rmsd_se,t_max,t_max_se,nfe,wall_s";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsRow {
    pub fn new(task: &str, model: &str, seed: u64, m: &MetricSeries) -> Self {
        Self {
            task: task.into(),
            model: model.into(),
            seed,
            gamma: None,
            predict: None,
            cond: None,
            proportion: None,
            rmsd: m.rmsd,
            rmsd_se: m.rmsd_se,
            t_max: m.t_max,
            t_max_se: m.t_max_se,
            nfe: 0,
            wall_s: 0.0,
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.task,
            self.model,
            self.seed,
            opt(self.gamma),
            opt(self.predict),
            opt(self.cond),
            opt(self.proportion),
            self.rmsd,
            self.rmsd_se,
            self.t_max,
            self.t_max_se,
            self.nfe,
            self.wall_s
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}
