//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data validation
//! error, 3 filter divergence.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::assimilation::FilterError;
use crate::config::{self, ConfigError};
use crate::experiment::{
    forecast_analysis_divergence, run, run_sweep, run_with_threads, synthetic_twin, DailySummary,
    ExperimentConfig, ExperimentError, SweepAxis, TwinScenario,
};
use crate::observations::{
    load_observations, write_observations, LoadOptions, ObservationError, ObservationSeries,
};
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "seir-filter",
    version,
    about = "Particle-filter estimation of R_t with an agent-based SEIR model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write summaries into the output directory.
    Run(RunArgs),
    /// Run one independent experiment per value of a parameter.
    Sweep(SweepArgs),
    /// Check an observation file and exit.
    Validate(ValidateArgs),
    /// Write a synthetic observation file generated by the model itself.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (same as `--set run.seed=N`).
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble size (same as `--set filter.n_particles=N`).
    #[arg(long)]
    particles: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Observation CSV (`date,hospitalized,recovered_cum,deaths_cum`).
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Ignore unknown columns in the observation file.
    #[arg(long)]
    lax_columns: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// One of k, p_as, n_particles, master_seed.
    #[arg(long)]
    axis: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    lax_columns: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Total simulated days, including the unobserved free run.
    #[arg(long, default_value_t = 260)]
    days: u64,
    /// Piecewise-constant truth r as `day:r` pairs, e.g. `0:0.6,100:0.25`.
    #[arg(long, default_value = "0:0.6,100:0.25,180:0.55")]
    r: String,
    #[arg(long, default_value_t = 5)]
    seed_agents: u64,
    #[arg(long, default_value_t = 0.02)]
    p_hd: f64,
    #[arg(long, default_value_t = 12.0)]
    mean_t_h: f64,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<ObservationError> for Failure {
    fn from(e: ObservationError) -> Self {
        let code = if e.is_data_error() {
            EXIT_DATA
        } else {
            EXIT_CONFIG
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        let code = match e.root() {
            ExperimentError::Filter(FilterError::Divergence { .. }) => EXIT_DIVERGENCE,
            ExperimentError::Misaligned { .. } => EXIT_DATA,
            ExperimentError::Observations(o) if o.is_data_error() => EXIT_DATA,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::config(format!("cannot write {}: {e}", path.display()))
}

fn resolve_config(common: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => config::load_config(path)?,
        None => ExperimentConfig::default(),
    };
    for arg in &common.overrides {
        let (k, v) = config::parse_override(arg)?;
        config::apply_setting(&mut cfg, &k, &v)?;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(n) = common.particles {
        cfg.n_particles = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_obs(path: &Path, cfg: &ExperimentConfig, lax: bool) -> Result<ObservationSeries, Failure> {
    let opts = LoadOptions {
        sim_start_date: cfg.sim_start_date,
        first_obs_day_index: Some(cfg.free_run_days),
        lax_columns: lax,
    };
    Ok(load_observations(path, &opts)?)
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    summaries: &[DailySummary],
) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| io_failure(&path, e))
    };
    let path = dir.join("summaries.csv");
    report::write_summaries(
        create("summaries.csv")?,
        summaries,
        &cfg.ci_levels,
        cfg.sim_start_date,
    )
    .map_err(|e| io_failure(&path, e))?;
    let path = dir.join("forecast_divergence.csv");
    report::write_divergence(
        create("forecast_divergence.csv")?,
        &forecast_analysis_divergence(summaries),
        cfg.sim_start_date,
    )
    .map_err(|e| io_failure(&path, e))?;
    let path = dir.join("run_meta.txt");
    report::write_meta(create("run_meta.txt")?, &config::settings(cfg), summaries)
        .map_err(|e| io_failure(&path, e))?;
    Ok(())
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Failure::config("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(&args.common)?;
    let obs = load_obs(&args.obs, &cfg, args.lax_columns)?;
    let summaries = match args.threads {
        Some(0) => return Err(Failure::config("--threads must be at least 1")),
        Some(n) => run_with_threads(&cfg, &obs, n)?,
        None => run(&cfg, &obs)?,
    };
    write_outputs(&args.out, &cfg, &summaries)
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let cfg = resolve_config(&args.run.common)?;
    let axis: SweepAxis = args.axis.parse()?;
    let obs = load_obs(&args.run.obs, &cfg, args.run.lax_columns)?;
    let runs = with_threads(args.run.threads, || {
        run_sweep(&cfg, axis, &args.values, &obs)
    })??;
    for (value, summaries) in &runs {
        let run_cfg = axis.apply(&cfg, value)?;
        let dir = args.run.out.join(format!("{}_{}", axis.name(), value));
        write_outputs(&dir, &run_cfg, summaries)?;
    }
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let cfg = resolve_config(&args.common)?;
    let obs = load_obs(&args.obs, &cfg, args.lax_columns)?;
    match (obs.records().first(), obs.records().last()) {
        (Some(first), Some(last)) => println!(
            "ok: {} days, {} (day {}) to {} (day {})",
            obs.len(),
            obs.date_of(first.day_index),
            first.day_index,
            obs.date_of(last.day_index),
            last.day_index
        ),
        _ => println!("ok: no observations"),
    }
    Ok(())
}

fn parse_pieces(text: &str) -> Result<Vec<(u64, f64)>, Failure> {
    text.split(',')
        .map(|item| {
            let (d, r) = item.trim().split_once(':').ok_or_else(|| {
                Failure::config(format!("bad --r piece `{item}`, expected day:r"))
            })?;
            let day = d
                .trim()
                .parse()
                .map_err(|_| Failure::config(format!("bad day in `{item}`")))?;
            let r = r
                .trim()
                .parse()
                .map_err(|_| Failure::config(format!("bad r in `{item}`")))?;
            Ok((day, r))
        })
        .collect()
}

fn cmd_synth(args: &SynthArgs) -> Result<(), Failure> {
    let cfg = resolve_config(&args.common)?;
    let scenario = TwinScenario {
        seed_agents: args.seed_agents,
        r_pieces: parse_pieces(&args.r)?,
        p_hd: args.p_hd,
        mean_t_h: args.mean_t_h,
        days: args.days,
        seed: cfg.master_seed,
    };
    let twin = synthetic_twin(&cfg.fixed, &scenario, cfg.free_run_days, cfg.sim_start_date)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_failure(parent, e))?;
    }
    let file = File::create(&args.out).map_err(|e| io_failure(&args.out, e))?;
    write_observations(&twin.observations, BufWriter::new(file))
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", args.out.display())))?;
    Ok(())
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
