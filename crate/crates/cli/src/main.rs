use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdescore_cli::{oracle_check, CliError, Context, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pdescore", version, about = "Score-based diffusion surrogates for 1D PDE forecasting and data assimilation")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: ks-desk or burgers-desk.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed; overrides `task.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 gives the bit-reproducible path.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory shared by all commands.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the PDE and write train/valid/test trajectory files.
    Generate,
    /// Train a score network (or the next-state baseline).
    Train,
    /// Forecast test trajectories from their first states.
    Forecast,
    /// Offline assimilation over a grid of observed proportions.
    DaOffline,
    /// Online assimilation interleaved with forecasting.
    DaOnline,
    /// Metrics of `task.pred` against `task.truth`.
    Evaluate,
    /// Verify the samplers against the Gaussian oracle.
    OracleCheck,
    /// Print the effective configuration.
    ShowConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.task.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let ctx = Context::new(cfg, cli.out);
    if !matches!(cli.command, Command::ShowConfig) {
        std::fs::create_dir_all(&ctx.out).map_err(pdescore::Error::from)?;
        std::fs::write(ctx.out.join("config.toml"), ctx.cfg.render()?).map_err(pdescore::Error::from)?;
    }
    match cli.command {
        Command::Generate => ctx.generate()?,
        Command::Train => ctx.train()?,
        Command::Forecast => ctx.forecast()?,
        Command::DaOffline => ctx.da_offline()?,
        Command::DaOnline => ctx.da_online()?,
        Command::Evaluate => ctx.evaluate()?,
        Command::OracleCheck => oracle_check(&ctx)?,
        Command::ShowConfig => print!("{}", ctx.cfg.render()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
