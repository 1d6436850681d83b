//! Experiment configuration: a TOML file with `[data]`, `[model]`,
//! `[train]`, `[sample]` and `[task]` sections. Every field has a default
//! and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use pdescore::pdesolve::{BurgersParams, DatasetSpec, GridSpec, KsParams, Pde};
use pdescore::rng;
use pdescore::scorenet::{NetConfig, Regime, TrainConfig};
use pdescore::sdecore::{GuidanceConfig, NoiseSchedule, Spacing, TimeGrid};
use pdescore::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `ks` or `burgers`.
    pub pde: String,
    pub width: usize,
    pub domain_length: f64,
    pub dt_solver: f64,
    pub dt_save: f64,
    pub burn_in: f64,
    pub train_len: usize,
    /// Length of validation and test trajectories.
    pub eval_len: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub burgers: BurgersParams,
    pub ks: KsParams,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            pde: "ks".into(),
            width: 64,
            domain_length: 64.0,
            dt_solver: 0.05,
            dt_save: 0.2,
            burn_in: 0.0,
            train_len: 140,
            eval_len: 320,
            n_train: 256,
            n_valid: 32,
            n_test: 32,
            burgers: BurgersParams::default(),
            ks: KsParams::default(),
        }
    }
}

impl DataSection {
    pub fn pde(&self) -> Result<Pde> {
        match self.pde.as_str() {
            "ks" => Ok(Pde::Ks(self.ks.clone())),
            "burgers" => Ok(Pde::Burgers(self.burgers.clone())),
            other => Err(Error::Config(format!("unknown pde `{other}` (ks | burgers)"))),
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            width: self.width,
            domain_length: self.domain_length,
            dt_solver: self.dt_solver,
            dt_save: self.dt_save,
            n_steps_saved: self.train_len,
            burn_in: self.burn_in,
        }
    }

    pub fn dataset_spec(&self, master_seed: u64) -> Result<DatasetSpec> {
        Ok(DatasetSpec {
            pde: self.pde()?,
            grid: self.grid(),
            eval_len: self.eval_len,
            n_train: self.n_train,
            n_valid: self.n_valid,
            n_test: self.n_test,
            seed: rng::derive_seed(master_seed, "data", 0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub regime: Regime,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after the first epoch that ends past this many minutes; 0
    /// disables the limit. A limit that triggers makes the run depend on
    /// machine speed.
    pub max_minutes: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            regime: t.regime,
            lr: t.lr,
            weight_decay: t.weight_decay,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
            batch_size: t.batch_size,
            epochs: t.epochs,
            max_minutes: 0.0,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, master_seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: rng::derive_seed(master_seed, "train", 0),
            regime: self.regime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub n_steps: usize,
    pub spacing: Spacing,
    pub t_min: f64,
    pub corrector_steps: usize,
    pub corrector_snr: f64,
    pub gamma: f64,
    /// Observation noise, in normalized units.
    pub sigma_y: f64,
    /// States generated per autoregressive step (`P`).
    pub predict: usize,
    /// Known states per autoregressive step (`C`).
    pub cond: usize,
    /// Windows per forward batch.
    pub chunk: usize,
    /// Percentile of `|x_hat|` for dynamic thresholding; absent disables it.
    pub threshold: Option<f64>,
    /// Test trajectories used by sampling tasks.
    pub n_eval: usize,
    /// Sampled sequence length; 0 uses the full test length.
    pub len: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        let g = GuidanceConfig::default();
        Self {
            n_steps: 128,
            spacing: Spacing::Linear,
            t_min: NoiseSchedule::default().t_min,
            corrector_steps: 0,
            corrector_snr: pdescore::sampler::CORRECTOR_SNR,
            gamma: g.gamma,
            sigma_y: g.sigma_y,
            predict: 2,
            cond: 3,
            chunk: 64,
            threshold: None,
            n_eval: 16,
            len: 0,
        }
    }
}

impl SampleSection {
    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid {
            n_steps: self.n_steps,
            spacing: self.spacing,
            schedule: NoiseSchedule {
                t_min: self.t_min,
                ..NoiseSchedule::default()
            },
        }
    }

    pub fn guidance(&self) -> GuidanceConfig {
        GuidanceConfig {
            gamma: self.gamma,
            sigma_y: self.sigma_y,
            ..GuidanceConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub seed: u64,
    /// Checkpoint path, relative to the output directory.
    pub checkpoint: String,
    /// Continue training from the trainer state saved next to the checkpoint.
    pub resume: bool,
    /// Forecast samplers: `ar` and/or `aao`.
    pub samplers: Vec<String>,
    /// Corrector steps for all-at-once forecasts.
    pub aao_corrector_steps: usize,
    /// Extra `[P, C]` settings for autoregressive forecasts.
    pub pc_sweep: Vec<[usize; 2]>,
    /// Offline assimilation: observed proportions and per-proportion
    /// guidance overrides (empty uses `[sample]`).
    pub proportions: Vec<f64>,
    pub gammas: Vec<f64>,
    pub sigma_ys: Vec<f64>,
    /// Leading states observed in full.
    pub n_initial_full: usize,
    /// Assimilation samplers: `ar` and/or `aao`.
    pub da_samplers: Vec<String>,
    /// Interpolation baseline: `linear`, `cubic` or `nearest`.
    pub interpolation: String,
    /// Online assimilation: states per observation block and forecast length.
    pub online_s: usize,
    pub online_f: usize,
    pub online_proportion: f64,
    /// Files compared by `evaluate`, relative to the output directory.
    pub pred: String,
    pub truth: String,
    /// States at the start of each trajectory excluded from `evaluate`.
    pub skip: usize,
    /// Constant added to the oracle's noise prediction by `oracle-check`.
    pub inject_eps_bias: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            seed: 0,
            checkpoint: "model.pdck".into(),
            resume: false,
            samplers: vec!["ar".into(), "aao".into()],
            aao_corrector_steps: 0,
            pc_sweep: Vec::new(),
            proportions: (0..6).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect(),
            gammas: Vec::new(),
            sigma_ys: Vec::new(),
            n_initial_full: 0,
            da_samplers: vec!["ar".into()],
            interpolation: "linear".into(),
            online_s: 10,
            online_f: 80,
            online_proportion: 0.1,
            pred: String::new(),
            truth: String::new(),
            skip: 0,
            inject_eps_bias: 0.0,
        }
    }
}

impl TaskSection {
    /// Guidance `(gamma, sigma_y)` for the `i`-th proportion.
    pub fn guidance_at(&self, i: usize, sample: &SampleSection) -> (f64, f64) {
        (
            self.gammas.get(i).copied().unwrap_or(sample.gamma),
            self.sigma_ys.get(i).copied().unwrap_or(sample.sigma_y),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub model: NetConfig,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub task: TaskSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.pde()?;
        self.model.validate()?;
        if self.sample.n_eval == 0 {
            return Err(Error::Config("sample.n_eval must be >= 1".into()));
        }
        for s in self.task.samplers.iter().chain(&self.task.da_samplers) {
            if s != "ar" && s != "aao" {
                return Err(Error::Config(format!("unknown sampler `{s}` (ar | aao)")));
            }
        }
        if !self.task.gammas.is_empty() && self.task.gammas.len() != self.task.proportions.len() {
            return Err(Error::Config("task.gammas must match task.proportions".into()));
        }
        if !self.task.sigma_ys.is_empty() && self.task.sigma_ys.len() != self.task.proportions.len() {
            return Err(Error::Config("task.sigma_ys must match task.proportions".into()));
        }
        self.task.interpolation.parse::<pdescore::evalmetrics::InterpMethod>()?;
        Ok(())
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ks-desk" => Self::parse(KS_DESK),
            "burgers-desk" => Self::parse(BURGERS_DESK),
            other => Err(Error::Config(format!("unknown preset `{other}` (ks-desk | burgers-desk)"))),
        }
    }
}

pub const KS_DESK: &str = include_str!("../presets/ks-desk.toml");
pub const BURGERS_DESK: &str = include_str!("../presets/burgers-desk.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_roundtrip() {
        for cfg in [
            ExperimentConfig::default(),
            ExperimentConfig::preset("ks-desk").unwrap(),
            ExperimentConfig::preset("burgers-desk").unwrap(),
        ] {
            let text = cfg.render().unwrap();
            assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[train]\nlearning_rate = 1e-3\n").is_err());
        assert!(ExperimentConfig::parse("[nonsense]\n").is_err());
        assert!(ExperimentConfig::parse("[data]\npde = \"navier\"\n").is_err());
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = ExperimentConfig::parse("# sampler only\n[sample]\nn_steps = 64\n").unwrap();
        assert_eq!(cfg.sample.n_steps, 64);
        assert_eq!(cfg.data, DataSection::default());
        assert_eq!(cfg.task.proportions.len(), 6);
    }
}
