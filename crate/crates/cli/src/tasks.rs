//! The pipeline commands. Every command reads its inputs from and writes
//! its outputs to the output directory, and is a pure function of the
//! configuration and the master seed apart from wall-clock columns.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use pdescore::conditioning::{online_da_steps, online_obs_stream, sample_offline_obs, ObservationSet};
use pdescore::denoise::{Denoiser, NetDenoiser};
use pdescore::evalmetrics::{
    baseline_climatology, baseline_interpolate, baseline_persistence, mean_spread, metrics_csv, repeat_state,
    InterpMethod, MetricSeries, MetricsRow,
};
use pdescore::pdesolve::{generate_dataset, DatasetPaths};
use pdescore::rng;
use pdescore::sampler::{
    sample_aao, sample_ar_amortised, sample_ar_from_scratch, sample_ar_joint, sample_mse, ArMember, NfeCounter,
    RolloutOutput, RolloutPlan,
};
use pdescore::scorenet::{loss_log_csv, load_trainer_state, save_trainer_state, Checkpoint, Regime, ScoreNet, Trainer};
use pdescore::trajectory::{Dtype, Normalizer, Trajectory, TrajectoryFile};
use pdescore::{Error, Result};

use crate::config::ExperimentConfig;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

fn short_name(r: Regime) -> &'static str {
    match r {
        Regime::Joint => "joint",
        Regime::Amortised(_) => "amortised",
        Regime::Universal => "universal",
        Regime::MseBaseline => "mse",
    }
}

/// States `[from, len)` of each trajectory.
fn tail(ts: &[Trajectory], from: usize) -> Result<Vec<Trajectory>> {
    let len = ts.first().map_or(0, |t| t.len);
    slice(ts, from, len)
}

/// States `[from, to)` of one trajectory.
fn states(t: &Trajectory, from: usize, to: usize) -> Trajectory {
    Trajectory {
        data: t.window(from, to - from).to_vec(),
        len: to - from,
        ..*t
    }
}

/// States `[from, to)` of each trajectory.
fn slice(ts: &[Trajectory], from: usize, to: usize) -> Result<Vec<Trajectory>> {
    if ts.iter().any(|t| to > t.len || from >= to) {
        return Err(Error::IndexOutOfRange(format!("states [{from}, {to})")));
    }
    Ok(ts.iter().map(|t| states(t, from, to)).collect())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn save_pdet(path: &Path, ts: Vec<Trajectory>) -> Result<()> {
    TrajectoryFile::from_trajectories(ts, Dtype::F32)?.save(path)
}

/// Observations of every value of states `[0, c)` with noise `sigma_y`.
fn initial_obs(truth: &Trajectory, c: usize, sigma_y: f64, seed: u64) -> Result<ObservationSet> {
    let d = truth.state_size();
    let idx = (0..c).flat_map(|l| (0..d).map(move |z| (l, z))).collect();
    ObservationSet::observe(truth, idx, sigma_y, seed)
}

/// Observations of `obs` falling in states `[lo, hi)`, re-based to `lo`.
fn shifted(obs: &ObservationSet, lo: usize, hi: usize) -> Result<ObservationSet> {
    let (idx, vals): (Vec<_>, Vec<_>) = obs
        .indices
        .iter()
        .zip(&obs.values)
        .filter(|((t, _), _)| *t >= lo && *t < hi)
        .map(|(&(t, z), &v)| ((t - lo, z), v))
        .unzip();
    ObservationSet::new(hi - lo, obs.width, idx, vals, obs.sigma_y, obs.seed)
}

impl Context {
    pub fn new(cfg: ExperimentConfig, out: PathBuf) -> Self {
        Self { cfg, out }
    }

    fn seed(&self) -> u64 {
        self.cfg.task.seed
    }

    fn data_paths(&self) -> DatasetPaths {
        DatasetPaths::new(&self.out, &self.cfg.data.pde)
    }

    fn load(path: &Path) -> Result<Vec<Trajectory>> {
        if !path.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found; run `generate` first", path.display()),
            )));
        }
        Ok(TrajectoryFile::load(path)?.trajectories)
    }

    fn normalizer(&self) -> Result<Normalizer> {
        let path = self.data_paths().stats;
        if !path.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} not found; run `generate` first", path.display()),
            )));
        }
        Normalizer::load(&path)
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.out.join(&self.cfg.task.checkpoint)
    }

    fn load_model(&self) -> Result<NetDenoiser<f32>> {
        let path = self.checkpoint_path();
        if !path.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("checkpoint {} not found; run `train` first", path.display()),
            )));
        }
        let ck = Checkpoint::load(&path)?;
        Ok(NetDenoiser::new(ck.to_net()?, ck.regime))
    }

    /// First `n_eval` test trajectories, physical and normalized.
    fn eval_set(&self) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
        let s = &self.cfg.sample;
        let mut test = Self::load(&self.data_paths().test)?;
        if test.len() < s.n_eval {
            return Err(Error::Config(format!("{} test trajectories, sample.n_eval = {}", test.len(), s.n_eval)));
        }
        test.truncate(s.n_eval);
        if s.len > 0 {
            test = test.iter().map(|t| t.truncated(s.len)).collect();
        }
        let norm = self.normalizer()?;
        let normalized = test.iter().map(|t| norm.normalize(t)).collect();
        Ok((test, normalized))
    }

    fn plan(&self, window: usize, predict: usize, cond: usize, len: usize, dt_save: f64) -> RolloutPlan {
        let s = &self.cfg.sample;
        RolloutPlan {
            window,
            predict,
            cond,
            len,
            corrector_steps: s.corrector_steps,
            corrector_snr: s.corrector_snr,
            time_grid: s.time_grid(),
            guidance: s.guidance(),
            chunk: s.chunk,
            threshold: s.threshold,
            dt_save,
        }
    }

    pub fn generate(&self) -> Result<()> {
        let spec = self.cfg.data.dataset_spec(self.seed())?;
        fs::create_dir_all(&self.out)?;
        let paths = generate_dataset(&spec, &self.out, &self.cfg.data.pde)?;
        let norm = Normalizer::load(&paths.stats)?;
        for (name, path) in [("train", &paths.train), ("valid", &paths.valid), ("test", &paths.test)] {
            let f = TrajectoryFile::load(path)?;
            println!(
                "{name}: {} trajectories x {} states x {} points, dt = {}",
                f.trajectories.len(),
                f.len,
                f.width,
                f.dt_save
            );
        }
        println!("train mean = {:.6}, std = {:.6}", norm.mean, norm.std);
        Ok(())
    }

    pub fn train(&self) -> Result<()> {
        let paths = self.data_paths();
        let norm = self.normalizer()?;
        let train: Vec<Trajectory> = Self::load(&paths.train)?.iter().map(|t| norm.normalize(t)).collect();
        let valid: Vec<Trajectory> = Self::load(&paths.valid)?.iter().map(|t| norm.normalize(t)).collect();
        let tc = self.cfg.train.train_config(self.seed());
        let ck_path = self.checkpoint_path();
        let last_path = ck_path.with_extension("last");
        let state_path = ck_path.with_extension("state");
        let log_path = ck_path.with_extension("log.csv");
        let mut log_text = String::new();
        let mut trainer = if self.cfg.task.resume {
            let last = Checkpoint::load(&last_path)?;
            let mut t = Trainer::new(last.to_net()?, tc.clone())?;
            load_trainer_state(&mut t, &state_path)?;
            log_text = fs::read_to_string(&log_path)?;
            t
        } else {
            let net = ScoreNet::<f32>::new(self.cfg.model.clone(), rng::derive_seed(self.seed(), "init", 0))?;
            println!("network: {} parameters", net.n_params());
            Trainer::new(net, tc.clone())?
        };
        let start = Instant::now();
        let budget = self.cfg.train.max_minutes * 60.0;
        let first_new = trainer.log.len();
        while trainer.epoch < tc.epochs {
            let rec = trainer.run_epoch(&train, &valid)?;
            println!(
                "epoch {:>5}  train {:.5e}  valid {:.5e}  lr {:.3e}",
                rec.epoch, rec.train_loss, rec.valid_loss, rec.lr
            );
            if budget > 0.0 && start.elapsed().as_secs_f64() > budget {
                println!("stopping: time limit of {} min reached", self.cfg.train.max_minutes);
                break;
            }
        }
        let new_rows = loss_log_csv(&trainer.log[first_new..]);
        if log_text.is_empty() {
            log_text = new_rows;
        } else {
            log_text.extend(new_rows.lines().skip(1).map(|l| format!("{l}\n")));
        }
        write(&log_path, &log_text)?;
        let (train_loss, valid_loss) = trainer.log.last().map_or((f64::NAN, f64::NAN), |r| (r.train_loss, r.valid_loss));
        Checkpoint::from_net(&trainer.net, tc.regime, train_loss, valid_loss).save(&last_path)?;
        save_trainer_state(&trainer, &state_path)?;
        let best = trainer.best_net();
        Checkpoint::from_net(&best, tc.regime, train_loss, valid_loss).save(&ck_path)?;
        println!("wrote {}", ck_path.display());
        Ok(())
    }

    fn run_sampler(
        &self,
        den: &NetDenoiser<f32>,
        sampler: &str,
        width: usize,
        members: &[ArMember],
        plan: &RolloutPlan,
    ) -> Result<RolloutOutput> {
        match (den.regime, sampler) {
            (Regime::MseBaseline, _) => sample_mse(den, width, members, plan),
            (Regime::Joint, "aao") => sample_aao(den, width, members, plan),
            (Regime::Joint, _) => sample_ar_joint(den, width, members, plan),
            (_, "aao") => Err(Error::RegimeMismatch("all-at-once sampling needs a joint model".into())),
            _ => sample_ar_amortised(den, width, members, plan),
        }
    }

    pub fn forecast(&self) -> Result<()> {
        let den = self.load_model()?;
        let (truth, truth_n) = self.eval_set()?;
        let norm = self.normalizer()?;
        let s = &self.cfg.sample;
        let task = &self.cfg.task;
        let (len, d, dt) = (truth[0].len, truth[0].width, truth[0].dt_save);
        let w = den.window();
        let model = short_name(den.regime);
        let mut settings = vec![(s.predict, s.cond)];
        for &[p, c] in &task.pc_sweep {
            if !settings.contains(&(p, c)) {
                settings.push((p, c));
            }
        }
        if den.regime == Regime::MseBaseline {
            settings = vec![(1, w - 1)];
        }
        let mut rows = Vec::new();
        let mut aao_done = BTreeSet::new();
        for &(p, c) in &settings {
            let obs: Vec<ObservationSet> = truth_n
                .iter()
                .enumerate()
                .map(|(i, t)| initial_obs(t, c, s.sigma_y, rng::derive_seed(self.seed(), "forecast-obs", i as u64)))
                .collect::<Result<_>>()?;
            for sampler in &task.samplers {
                let is_aao = sampler == "aao" && den.regime != Regime::MseBaseline;
                if is_aao && !aao_done.insert(c) {
                    continue;
                }
                let mut plan = self.plan(w, p, c, len, dt);
                if is_aao {
                    plan.corrector_steps = task.aao_corrector_steps;
                }
                let members: Vec<ArMember> = obs
                    .iter()
                    .enumerate()
                    .map(|(i, o)| ArMember {
                        init: if is_aao { Vec::new() } else { o.values.clone() },
                        obs: if is_aao { o.clone() } else { ObservationSet::empty(len, d, s.sigma_y) },
                        seed: rng::derive_seed(self.seed(), "forecast-sample", i as u64),
                    })
                    .collect();
                let t0 = Instant::now();
                let out = self.run_sampler(&den, sampler, d, &members, &plan)?;
                let wall = t0.elapsed().as_secs_f64();
                let pred: Vec<Trajectory> = out.trajectories.iter().map(|t| norm.denormalize(t)).collect();
                let m = MetricSeries::compute(&tail(&pred, c)?, &tail(&truth, c)?)?;
                let tag = if den.regime == Regime::MseBaseline {
                    format!("{model}_C{c}")
                } else if is_aao {
                    format!("{model}_aao{}_C{c}", plan.corrector_steps)
                } else {
                    format!("{model}_ar_P{p}C{c}")
                };
                save_pdet(&self.out.join(format!("forecast_{tag}.pdet")), pred)?;
                write(&self.out.join(format!("forecast_{tag}_series.csv")), &m.series_csv())?;
                let mut row = MetricsRow::new("forecast", &tag, self.seed(), &m);
                row.gamma = Some(s.gamma);
                row.predict = (!is_aao).then_some(p);
                row.cond = Some(c);
                row.nfe = out.nfe.forward_evals() as u64;
                row.wall_s = wall;
                println!("{tag}: RMSD {:.4} +- {:.4}, t_max {:.3}, NFE {}", m.rmsd, m.rmsd_se, m.t_max, row.nfe);
                rows.push(row);
            }
        }
        let c = settings[0].1;
        let train = Self::load(&self.data_paths().train)?;
        let clim = baseline_climatology(&train)?;
        let clim_pred: Vec<Trajectory> = truth.iter().map(|_| repeat_state(&clim, len - c, dt)).collect();
        let pers_pred = truth
            .iter()
            .map(|t| baseline_persistence(&t.truncated(c), len - c))
            .collect::<Result<Vec<_>>>()?;
        for (name, pred) in [("climatology", clim_pred), ("persistence", pers_pred)] {
            let m = MetricSeries::compute(&pred, &tail(&truth, c)?)?;
            let mut row = MetricsRow::new("forecast", name, self.seed(), &m);
            row.cond = Some(c);
            rows.push(row);
        }
        write(&self.out.join("forecast_metrics.csv"), &metrics_csv(&rows))
    }

    pub fn da_offline(&self) -> Result<()> {
        let den = self.load_model()?;
        let (truth, truth_n) = self.eval_set()?;
        let norm = self.normalizer()?;
        let s = &self.cfg.sample;
        let task = &self.cfg.task;
        let (len, d, dt) = (truth[0].len, truth[0].width, truth[0].dt_save);
        let w = den.window();
        let model = short_name(den.regime);
        let method: InterpMethod = task.interpolation.parse()?;
        let mut rows = Vec::new();
        for (k, &prop) in task.proportions.iter().enumerate() {
            let (gamma, sigma_y) = task.guidance_at(k, s);
            let obs: Vec<ObservationSet> = truth_n
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let seed = rng::derive_seed(self.seed(), "da-obs", (k * truth_n.len() + i) as u64);
                    sample_offline_obs(t, prop, task.n_initial_full, sigma_y, seed)
                })
                .collect::<Result<_>>()?;
            for sampler in &task.da_samplers {
                let mut plan = self.plan(w, s.predict, s.cond, len, dt);
                plan.guidance.gamma = gamma;
                plan.guidance.sigma_y = sigma_y;
                let members: Vec<ArMember> = obs
                    .iter()
                    .enumerate()
                    .map(|(i, o)| ArMember {
                        init: Vec::new(),
                        obs: o.clone(),
                        seed: rng::derive_seed(self.seed(), "da-sample", i as u64),
                    })
                    .collect();
                let t0 = Instant::now();
                let out = if sampler == "aao" {
                    sample_aao(&den, d, &members, &plan)?
                } else {
                    sample_ar_from_scratch(&den, d, &members, &plan)?
                };
                let wall = t0.elapsed().as_secs_f64();
                let pred: Vec<Trajectory> = out.trajectories.iter().map(|t| norm.denormalize(t)).collect();
                let m = MetricSeries::compute(&pred, &truth)?;
                let tag = if sampler == "aao" {
                    format!("{model}_aao{}", plan.corrector_steps)
                } else {
                    format!("{model}_ar_P{}C{}", plan.predict, plan.cond)
                };
                save_pdet(&self.out.join(format!("da_offline_{tag}_p{k}.pdet")), pred)?;
                write(&self.out.join(format!("da_offline_{tag}_p{k}_series.csv")), &m.series_csv())?;
                let mut row = MetricsRow::new("da-offline", &tag, self.seed(), &m);
                row.gamma = Some(gamma);
                row.predict = (sampler != "aao").then_some(plan.predict);
                row.cond = (sampler != "aao").then_some(plan.cond);
                row.proportion = Some(prop);
                row.nfe = out.nfe.forward_evals() as u64;
                row.wall_s = wall;
                println!("p = {prop:.4} {tag}: RMSD {:.4} +- {:.4}", m.rmsd, m.rmsd_se);
                rows.push(row);
            }
            if obs.iter().any(|o| o.is_empty()) {
                println!("p = {prop:.4} interpolation: skipped, a trajectory has no observations");
                continue;
            }
            let interp = obs
                .iter()
                .map(|o| baseline_interpolate(o, method, dt).map(|t| norm.denormalize(&t)))
                .collect::<Result<Vec<_>>>()?;
            let m = MetricSeries::compute(&interp, &truth)?;
            let mut row = MetricsRow::new("da-offline", &format!("interp-{}", task.interpolation), self.seed(), &m);
            row.proportion = Some(prop);
            println!("p = {prop:.4} interpolation: RMSD {:.4} +- {:.4}", m.rmsd, m.rmsd_se);
            rows.push(row);
        }
        let train = Self::load(&self.data_paths().train)?;
        let clim = baseline_climatology(&train)?;
        let clim_pred: Vec<Trajectory> = truth.iter().map(|_| repeat_state(&clim, len, dt)).collect();
        let m = MetricSeries::compute(&clim_pred, &truth)?;
        rows.push(MetricsRow::new("da-offline", "climatology", self.seed(), &m));
        write(&self.out.join("da_offline_metrics.csv"), &metrics_csv(&rows))
    }

    pub fn da_online(&self) -> Result<()> {
        let den = self.load_model()?;
        let (truth, truth_n) = self.eval_set()?;
        let norm = self.normalizer()?;
        let s = &self.cfg.sample;
        let task = &self.cfg.task;
        let (len, d, dt) = (truth[0].len, truth[0].width, truth[0].dt_save);
        let (bs, f) = (task.online_s, task.online_f);
        let w = den.window();
        let model = short_name(den.regime);
        let n_steps = online_da_steps(len, bs, f);
        let streams: Vec<Vec<ObservationSet>> = truth_n
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let seed = rng::derive_seed(self.seed(), "online-obs", i as u64);
                online_obs_stream(t, bs, task.online_proportion, s.sigma_y, seed)
            })
            .collect::<Result<_>>()?;
        if task.da_samplers.iter().any(|x| x == "ar") && bs < s.cond {
            return Err(Error::Config(format!("task.online_s = {bs} must be >= sample.cond = {}", s.cond)));
        }
        let mut rows = Vec::new();
        for sampler in &task.da_samplers {
            let tag = format!("{model}_{sampler}");
            let mut latest: Vec<Vec<f64>> = vec![vec![0.0; len * d]; truth.len()];
            let mut step_rmsd = Vec::new();
            let mut per_traj = vec![0.0; truth.len()];
            let mut series = String::from("l,mse,mse_se,rho,rho_se\n");
            let mut nfe = NfeCounter::default();
            let t0 = Instant::now();
            for j in 0..n_steps {
                let start = j * bs;
                let end = (start + f).min(len);
                let lo = if j == 0 || sampler == "aao" { 0 } else { start - s.cond };
                let members: Vec<ArMember> = streams
                    .iter()
                    .enumerate()
                    .map(|(i, blocks)| {
                        let mut seen = ObservationSet::empty(len, d, s.sigma_y);
                        for b in blocks.iter().take(j + 1) {
                            seen = seen.merged(b)?;
                        }
                        let init = if sampler == "ar" && j > 0 {
                            latest[i][lo * d..start * d].to_vec()
                        } else {
                            Vec::new()
                        };
                        Ok(ArMember {
                            init,
                            obs: shifted(&seen, lo, end)?,
                            seed: rng::derive_seed(self.seed(), &format!("online-sample-{j}"), i as u64),
                        })
                    })
                    .collect::<Result<_>>()?;
                let plan = self.plan(w, s.predict, s.cond, end - lo, dt);
                let out = match sampler.as_str() {
                    "aao" => sample_aao(&den, d, &members, &plan)?,
                    _ if j == 0 => sample_ar_from_scratch(&den, d, &members, &plan)?,
                    _ => self.run_sampler(&den, "ar", d, &members, &plan)?,
                };
                nfe.add(&out.nfe);
                for (buf, t) in latest.iter_mut().zip(&out.trajectories) {
                    buf[lo * d..end * d].copy_from_slice(&t.data);
                }
                let pred: Vec<Trajectory> = out
                    .trajectories
                    .iter()
                    .map(|t| norm.denormalize(&states(t, start - lo, end - lo)))
                    .collect();
                let target = slice(&truth, start, end)?;
                let m = MetricSeries::compute(&pred, &target)?;
                let mut mse_i = Vec::new();
                let mut rho_i = Vec::new();
                for (i, (p, t)) in pred.iter().zip(&target).enumerate() {
                    let one = MetricSeries::compute(std::slice::from_ref(p), std::slice::from_ref(t))?;
                    per_traj[i] += one.rmsd / n_steps as f64;
                    mse_i.push(one.mse.iter().sum::<f64>() / one.mse.len() as f64);
                    rho_i.push(mean_spread(one.rho.iter().copied()).0);
                }
                let (mse, mse_se, _) = mean_spread(mse_i.into_iter());
                let (rho, rho_se, _) = mean_spread(rho_i.into_iter());
                series.push_str(&format!("{},{mse},{mse_se},{rho},{rho_se}\n", j + 1));
                println!("{tag} step {}/{n_steps}: states [{start}, {end}) RMSD {:.4}", j + 1, m.rmsd);
                step_rmsd.push(m.rmsd);
            }
            let wall = t0.elapsed().as_secs_f64();
            let mean = step_rmsd.iter().sum::<f64>() / n_steps as f64;
            let (_, se, _) = mean_spread(per_traj.into_iter());
            let full: Vec<Trajectory> = latest
                .into_iter()
                .map(|v| Trajectory::new(v, len, 1, d, dt).map(|t| norm.denormalize(&t)))
                .collect::<Result<_>>()?;
            save_pdet(&self.out.join(format!("da_online_{tag}.pdet")), full)?;
            write(&self.out.join(format!("da_online_{tag}_series.csv")), &series)?;
            rows.push(MetricsRow {
                task: "da-online".into(),
                model: tag.clone(),
                seed: self.seed(),
                gamma: Some(s.gamma),
                predict: (sampler == "ar").then_some(s.predict),
                cond: (sampler == "ar").then_some(s.cond),
                proportion: Some(task.online_proportion),
                rmsd: mean,
                rmsd_se: se,
                t_max: f64::NAN,
                t_max_se: f64::NAN,
                nfe: nfe.forward_evals() as u64,
                wall_s: wall,
            });
            println!("{tag}: mean RMSD over {n_steps} steps {mean:.4} +- {se:.4}");
        }
        write(&self.out.join("da_online_metrics.csv"), &metrics_csv(&rows))
    }

    pub fn evaluate(&self) -> Result<()> {
        let task = &self.cfg.task;
        if task.pred.is_empty() || task.truth.is_empty() {
            return Err(Error::Config("evaluate needs task.pred and task.truth".into()));
        }
        let pred = Self::load(&self.out.join(&task.pred))?;
        let mut truth = Self::load(&self.out.join(&task.truth))?;
        truth.truncate(pred.len());
        let len = pred.first().map_or(0, |t| t.len);
        let truth: Vec<Trajectory> = truth.iter().map(|t| t.truncated(len)).collect();
        if task.skip >= len {
            return Err(Error::Config(format!("task.skip = {} leaves no states of {len}", task.skip)));
        }
        let m = MetricSeries::compute(&tail(&pred, task.skip)?, &tail(&truth, task.skip)?)?;
        write(&self.out.join("evaluate_series.csv"), &m.series_csv())?;
        let row = MetricsRow::new("evaluate", &task.pred, self.seed(), &m);
        println!("RMSD {:.4} +- {:.4}, t_max {:.3} +- {:.3}", m.rmsd, m.rmsd_se, m.t_max, m.t_max_se);
        write(&self.out.join("evaluate_metrics.csv"), &metrics_csv(&[row]))
    }
}
