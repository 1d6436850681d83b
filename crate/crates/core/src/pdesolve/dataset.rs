//! Train/valid/test dataset generation.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GridSpec, Pde};
use crate::error::{Error, Result};
use crate::rng;
use crate::trajectory::{Dtype, Normalizer, Trajectory, TrajectoryFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub pde: Pde,
    /// Grid of the training split; `n_steps_saved` is the training length.
    pub grid: GridSpec,
    /// Length of validation and test trajectories.
    pub eval_len: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub stats: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: &Path, prefix: &str) -> Self {
        Self {
            train: dir.join(format!("{prefix}_train.pdet")),
            valid: dir.join(format!("{prefix}_valid.pdet")),
            test: dir.join(format!("{prefix}_test.pdet")),
            stats: dir.join(format!("{prefix}.stats")),
        }
    }
}

impl DatasetSpec {
    /// Solves `count` trajectories of length `len` from the named seed stream.
    pub fn split(&self, split: &str, count: usize, len: usize) -> Result<Vec<Trajectory>> {
        let grid = self.grid.with_len(len);
        grid.validate()?;
        (0..count)
            .into_par_iter()
            .map(|i| {
                let seed = rng::derive_seed(self.seed, &format!("data/{split}"), i as u64);
                let init = self.pde.initial_condition(&grid, seed)?;
                self.pde.solve(&init, &grid).map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("{split} trajectory {i}: {msg}")),
                    other => other,
                })
            })
            .collect()
    }
}

/// Writes `<prefix>_{train,valid,test}.pdet` (f32) and the train-split
/// normalization statistics `<prefix>.stats`.
pub fn generate_dataset(spec: &DatasetSpec, dir: &Path, prefix: &str) -> Result<DatasetPaths> {
    let paths = DatasetPaths::new(dir, prefix);
    std::fs::create_dir_all(dir)?;
    let grid = &spec.grid;
    let train = spec.split("train", spec.n_train, grid.n_steps_saved)?;
    let stats = if train.is_empty() {
        Normalizer::default()
    } else {
        Normalizer::fit(&train)?
    };
    let mut file = TrajectoryFile::new(grid.n_steps_saved, 1, grid.width, grid.dt_save, Dtype::F32);
    for t in train {
        file.push(t)?;
    }
    file.save(&paths.train)?;
    for (name, count, path) in [
        ("valid", spec.n_valid, &paths.valid),
        ("test", spec.n_test, &paths.test),
    ] {
        let mut file = TrajectoryFile::new(spec.eval_len, 1, grid.width, grid.dt_save, Dtype::F32);
        for t in spec.split(name, count, spec.eval_len)? {
            file.push(t)?;
        }
        file.save(path)?;
    }
    stats.save(&paths.stats)?;
    Ok(paths)
}
