//! Flat `key = value` configuration files with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! run.seed = 42
//! filter.n_particles = 50000
//! model.k = 0.58
//! model.t_as = 2:0.3, 3:0.6, 4:0.05, 5:0.05
//! ```
//!
//! Every key can also be given on the command line as `--set key=value`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::distributions::DiscreteDistribution;
use crate::epimodel::OFFSPRING_OUTCOMES;
use crate::experiment::ExperimentConfig;
use crate::observations::DATE_FORMAT;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

/// Every accepted key, in the order used when rendering a configuration.
pub const KEYS: &[&str] = &[
    "run.seed",
    "filter.n_particles",
    "filter.free_run_days",
    "filter.resample_fraction",
    "filter.forced_resample_days",
    "init.infected_min",
    "init.infected_max",
    "init.r_min",
    "init.r_max",
    "init.mean_t_h",
    "init.p_hd_min",
    "init.p_hd_max",
    "model.k",
    "model.p_as",
    "model.p_sh",
    "model.t_e",
    "model.offspring",
    "model.t_a_inf",
    "model.t_as",
    "model.t_sh",
    "model.walk.r_sigma",
    "model.walk.p_hd_sigma",
    "model.walk.p_hd_max",
    "model.walk.mean_t_h_sigma",
    "model.walk.mean_t_h_min",
    "model.walk.mean_t_h_max",
    "obs.sim_start_date",
    "obs.sigma_r",
    "obs.sigma_d",
    "obs.sigma_h_rel",
    "obs.sigma_h_diff",
    "obs.sigma_h_floor",
    "output.ci_levels",
];

/// Split configuration text into `(line, key, value)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_owned(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_owned(),
            });
        }
        out.push((i + 1, key.to_owned(), value.trim().to_owned()));
    }
    Ok(out)
}

/// Parse a `key=value` override as given to `--set`.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = arg.split_once('=').ok_or_else(|| ConfigError::Syntax {
        line: 0,
        text: arg.to_owned(),
    })?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = ExperimentConfig::default();
    apply_text(&mut cfg, &text)?;
    Ok(cfg)
}

pub fn apply_text(cfg: &mut ExperimentConfig, text: &str) -> Result<(), ConfigError> {
    for (_, key, value) in parse_pairs(text)? {
        apply_setting(cfg, &key, &value)?;
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|s| parse_num::<f64>(key, s.trim()))
        .collect()
}

fn parse_dist(key: &str, value: &str) -> Result<DiscreteDistribution, ConfigError> {
    let bad = |reason: String| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason,
    };
    let mut days = Vec::new();
    let mut probs = Vec::new();
    for item in value.split(',') {
        let (d, p) = item
            .trim()
            .split_once(':')
            .ok_or_else(|| bad("expected comma-separated `days:probability` pairs".into()))?;
        days.push(parse_num::<i64>(key, d.trim())?);
        probs.push(parse_num::<f64>(key, p.trim())?);
    }
    DiscreteDistribution::new(days, probs).map_err(|e| bad(e.to_string()))
}

/// Set one dotted key on `cfg`. Range checks happen later in
/// [`ExperimentConfig::validate`].
pub fn apply_setting(
    cfg: &mut ExperimentConfig,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    let f = || parse_num::<f64>(key, value);
    let u = || parse_num::<u64>(key, value);
    match key {
        "run.seed" => cfg.master_seed = u()?,
        "filter.n_particles" => cfg.n_particles = parse_num(key, value)?,
        "filter.free_run_days" => cfg.free_run_days = u()?,
        "filter.resample_fraction" => cfg.resample.fraction = f()?,
        "filter.forced_resample_days" => cfg.resample.forced_days = u()?,
        "init.infected_min" => cfg.init_infected.0 = u()?,
        "init.infected_max" => cfg.init_infected.1 = u()?,
        "init.r_min" => cfg.init_r.0 = f()?,
        "init.r_max" => cfg.init_r.1 = f()?,
        "init.mean_t_h" => cfg.init_mean_t_h = f()?,
        "init.p_hd_min" => cfg.init_p_hd.0 = f()?,
        "init.p_hd_max" => cfg.init_p_hd.1 = f()?,
        "model.k" => cfg.fixed.k = f()?,
        "model.p_as" => cfg.fixed.p_as = f()?,
        "model.p_sh" => cfg.fixed.p_sh = f()?,
        "model.t_e" => cfg.fixed.t_e = parse_num(key, value)?,
        "model.offspring" => {
            let list = parse_list(key, value)?;
            cfg.fixed.offspring =
                <[f64; OFFSPRING_OUTCOMES]>::try_from(list.as_slice()).map_err(|_| {
                    ConfigError::BadValue {
                        key: key.to_owned(),
                        value: value.to_owned(),
                        reason: format!("expected {OFFSPRING_OUTCOMES} probabilities"),
                    }
                })?;
        }
        "model.t_a_inf" => cfg.fixed.dist_t_a_inf = parse_dist(key, value)?,
        "model.t_as" => cfg.fixed.dist_t_as = parse_dist(key, value)?,
        "model.t_sh" => cfg.fixed.dist_t_sh = parse_dist(key, value)?,
        "model.walk.r_sigma" => cfg.fixed.walk.r.sigma = f()?,
        "model.walk.p_hd_sigma" => cfg.fixed.walk.p_hd.sigma = f()?,
        "model.walk.p_hd_max" => cfg.fixed.walk.p_hd.hi = f()?,
        "model.walk.mean_t_h_sigma" => cfg.fixed.walk.mean_t_h.sigma = f()?,
        "model.walk.mean_t_h_min" => cfg.fixed.walk.mean_t_h.lo = f()?,
        "model.walk.mean_t_h_max" => cfg.fixed.walk.mean_t_h.hi = f()?,
        "obs.sim_start_date" => {
            cfg.sim_start_date = NaiveDate::parse_from_str(value, DATE_FORMAT).map_err(|e| {
                ConfigError::BadValue {
                    key: key.to_owned(),
                    value: value.to_owned(),
                    reason: e.to_string(),
                }
            })?
        }
        "obs.sigma_r" => cfg.errors.sigma_r = f()?,
        "obs.sigma_d" => cfg.errors.sigma_d = f()?,
        "obs.sigma_h_rel" => cfg.errors.sigma_h_rel = f()?,
        "obs.sigma_h_diff" => cfg.errors.sigma_h_diff = f()?,
        "obs.sigma_h_floor" => cfg.errors.sigma_h_floor = f()?,
        "output.ci_levels" => cfg.ci_levels = parse_list(key, value)?,
        _ => return Err(ConfigError::UnknownKey(key.to_owned())),
    }
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// Every key with its current value, in [`KEYS`] order.
pub fn settings(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    let fx = &cfg.fixed;
    let values = [
        cfg.master_seed.to_string(),
        cfg.n_particles.to_string(),
        cfg.free_run_days.to_string(),
        cfg.resample.fraction.to_string(),
        cfg.resample.forced_days.to_string(),
        cfg.init_infected.0.to_string(),
        cfg.init_infected.1.to_string(),
        cfg.init_r.0.to_string(),
        cfg.init_r.1.to_string(),
        cfg.init_mean_t_h.to_string(),
        cfg.init_p_hd.0.to_string(),
        cfg.init_p_hd.1.to_string(),
        fx.k.to_string(),
        fx.p_as.to_string(),
        fx.p_sh.to_string(),
        fx.t_e.to_string(),
        join(&fx.offspring),
        fx.dist_t_a_inf.to_string(),
        fx.dist_t_as.to_string(),
        fx.dist_t_sh.to_string(),
        fx.walk.r.sigma.to_string(),
        fx.walk.p_hd.sigma.to_string(),
        fx.walk.p_hd.hi.to_string(),
        fx.walk.mean_t_h.sigma.to_string(),
        fx.walk.mean_t_h.lo.to_string(),
        fx.walk.mean_t_h.hi.to_string(),
        cfg.sim_start_date.format(DATE_FORMAT).to_string(),
        cfg.errors.sigma_r.to_string(),
        cfg.errors.sigma_d.to_string(),
        cfg.errors.sigma_h_rel.to_string(),
        cfg.errors.sigma_h_diff.to_string(),
        cfg.errors.sigma_h_floor.to_string(),
        join(&cfg.ci_levels),
    ];
    KEYS.iter().copied().zip(values).collect()
}

pub fn render(cfg: &ExperimentConfig) -> String {
    settings(cfg)
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}
