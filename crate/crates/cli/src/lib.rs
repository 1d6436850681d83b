//! Pipeline driver: configuration, the experiment commands and the oracle
//! verification ladder behind the `pdescore` binary.

pub mod config;
pub mod oracle_check;
pub mod tasks;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use tasks::Context;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pdescore::Error),
    #[error("verification failed: {0}")]
    CheckFailed(String),
    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    /// Process exit code: 1 usage, 2 numeric failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 3,
            CliError::Core(e) if e.is_numeric() => 2,
            CliError::CheckFailed(_) => 2,
            _ => 1,
        }
    }
}

/// Runs the oracle ladder, prints and writes the report, and fails naming
/// every invariant that missed its tolerance.
pub fn oracle_check(ctx: &Context) -> Result<(), CliError> {
    let results = oracle_check::run(ctx.cfg.task.inject_eps_bias)?;
    for r in &results {
        println!(
            "{:<44} residual {:>10.3e}  tolerance {:>9.1e}  {}",
            r.name,
            r.residual,
            r.tolerance,
            if r.passed() { "pass" } else { "FAIL" }
        );
    }
    std::fs::create_dir_all(&ctx.out).map_err(pdescore::Error::from)?;
    std::fs::write(ctx.out.join("oracle_check.csv"), oracle_check::report_csv(&results)).map_err(pdescore::Error::from)?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}
