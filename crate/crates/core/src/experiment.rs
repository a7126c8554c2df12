//! Full experiment orchestration: initial ensemble, free run, the daily
//! forecast / weight update / analysis / resampling cycle, sensitivity sweeps
//! and synthetic-twin data generation.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::assimilation::{
    effective_particles, resample, sort_order, summary_with_order, update_weights, ErrorModel,
    FilterError, Observation, ResamplePolicy, Summary, WeightVector,
};
use crate::epimodel::{
    rt_per_unit_r, step_particle, CompartmentState, DynamicParams, FixedParams, ModelError,
    Particle,
};
use crate::observations::{default_sim_start, ObservationError, ObservationSeries};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid model parameters: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("observations start on day {found}, but the free run ends on day {expected}")]
    Misaligned { expected: u64, found: u64 },
    #[error("invariant violated on day {day} in particle {index}: {what}")]
    Invariant {
        day: u64,
        index: u64,
        what: &'static str,
    },
    #[error(transparent)]
    Observations(#[from] ObservationError),
    #[error("sweep value {value}: {source}")]
    Sweep {
        value: String,
        #[source]
        source: Box<ExperimentError>,
    },
}

impl ExperimentError {
    /// The underlying error, with sweep annotations stripped.
    pub fn root(&self) -> &ExperimentError {
        match self {
            ExperimentError::Sweep { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_particles: usize,
    pub master_seed: u64,
    /// Days simulated before the first observation; also the day index the
    /// observation series must start at.
    pub free_run_days: u64,
    pub resample: ResamplePolicy,
    pub fixed: FixedParams,
    pub errors: ErrorModel,
    /// Inclusive range of initially infected agents per particle.
    pub init_infected: (u64, u64),
    pub init_r: (f64, f64),
    pub init_mean_t_h: f64,
    pub init_p_hd: (f64, f64),
    pub ci_levels: Vec<f64>,
    pub sim_start_date: NaiveDate,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_particles: 100_000,
            master_seed: 20200117,
            free_run_days: 49,
            resample: ResamplePolicy::default(),
            fixed: FixedParams::default(),
            errors: ErrorModel::default(),
            init_infected: (3, 7),
            init_r: (0.0, 1.0),
            init_mean_t_h: 15.0,
            init_p_hd: (0.0, 0.05),
            ci_levels: vec![0.68, 0.90],
            sim_start_date: default_sim_start(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        self.fixed.validate()?;
        self.errors.validate().map_err(ExperimentError::Config)?;
        if self.n_particles == 0 {
            return bad("n_particles must be at least 1".into());
        }
        let f = self.resample.fraction;
        if !(f > 0.0 && f < 1.0) {
            return bad(format!("resample fraction must lie in (0, 1), got {f}"));
        }
        if self.resample.forced_days == 0 {
            return bad("forced resampling interval must be at least one day".into());
        }
        if self.init_infected.0 > self.init_infected.1 {
            return bad(format!(
                "empty initial infected range {:?}",
                self.init_infected
            ));
        }
        let walk = &self.fixed.walk;
        let inside = |(lo, hi): (f64, f64), w: &crate::epimodel::Walk| {
            lo <= hi && w.contains(lo) && w.contains(hi)
        };
        if !inside(self.init_r, &walk.r) {
            return bad(format!(
                "initial r range {:?} outside [{}, {}]",
                self.init_r, walk.r.lo, walk.r.hi
            ));
        }
        if !inside(self.init_p_hd, &walk.p_hd) {
            return bad(format!(
                "initial p_hd range {:?} outside [{}, {}]",
                self.init_p_hd, walk.p_hd.lo, walk.p_hd.hi
            ));
        }
        if !walk.mean_t_h.contains(self.init_mean_t_h) {
            return bad(format!(
                "initial mean_t_h {} outside its walk bounds",
                self.init_mean_t_h
            ));
        }
        if self.ci_levels.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return bad(format!(
                "coverage levels must lie in (0, 1): {:?}",
                self.ci_levels
            ));
        }
        Ok(())
    }
}

/// Quantities reported every day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantity {
    Rt,
    R,
    H,
    RCum,
    DCum,
    Asym,
    PHd,
    MeanTH,
}

impl Quantity {
    pub const ALL: [Quantity; 8] = [
        Quantity::Rt,
        Quantity::R,
        Quantity::H,
        Quantity::RCum,
        Quantity::DCum,
        Quantity::Asym,
        Quantity::PHd,
        Quantity::MeanTH,
    ];

    /// Column prefix in `summaries.csv`.
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Rt => "rt",
            Quantity::R => "r",
            Quantity::H => "h",
            Quantity::RCum => "r_cum",
            Quantity::DCum => "d_cum",
            Quantity::Asym => "asym",
            Quantity::PHd => "p_hd",
            Quantity::MeanTH => "mean_t_h",
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    fn extract(self, p: &Particle, rt_scale: f64) -> f64 {
        let s = &p.state;
        match self {
            Quantity::Rt => rt_scale * p.dyn_params.r,
            Quantity::R => p.dyn_params.r,
            Quantity::H => s.h_stock() as f64,
            Quantity::RCum => s.r_cum as f64,
            Quantity::DCum => s.d_cum as f64,
            Quantity::Asym => s.asymptomatic() as f64,
            Quantity::PHd => p.dyn_params.p_hd,
            Quantity::MeanTH => p.dyn_params.mean_t_h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Before the first observation; weights are uniform.
    Free,
    /// After the day's step, under the previous day's weights.
    Forecast,
    /// After the day's weight update.
    Analysis,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Free => "free",
            Phase::Forecast => "forecast",
            Phase::Analysis => "analysis",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weighted ensemble statistics for one day and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySummary {
    pub day_index: u64,
    pub phase: Phase,
    /// Indexed like [`Quantity::ALL`].
    pub quantities: Vec<Summary>,
    pub n_eff: f64,
    pub resampled: bool,
}

impl DailySummary {
    pub fn get(&self, q: Quantity) -> &Summary {
        &self.quantities[q.index()]
    }
}

/// One view of the ensemble to summarize.
struct View<'a> {
    weights: &'a WeightVector,
    phase: Phase,
    n_eff: f64,
    resampled: bool,
}

/// Summaries of the same particles under several weight vectors; each
/// quantity is sorted once.
fn summarize(
    particles: &[Particle],
    views: &[View<'_>],
    levels: &[f64],
    rt_scale: f64,
    day_index: u64,
) -> Vec<DailySummary> {
    let per_quantity: Vec<Vec<Summary>> = Quantity::ALL
        .par_iter()
        .map(|&q| {
            let values: Vec<f64> = particles.iter().map(|p| q.extract(p, rt_scale)).collect();
            let order = sort_order(&values);
            views
                .iter()
                .map(|v| summary_with_order(&values, v.weights, levels, &order))
                .collect()
        })
        .collect();
    views
        .iter()
        .enumerate()
        .map(|(i, v)| DailySummary {
            day_index,
            phase: v.phase,
            quantities: per_quantity.iter().map(|qs| qs[i].clone()).collect(),
            n_eff: v.n_eff,
            resampled: v.resampled,
        })
        .collect()
}

/// Initial ensemble: each particle gets a uniform number of agents in E
/// (with the full incubation period to go), uniform r and p_hd, and the
/// configured E(T_h).
pub fn init_particles(config: &ExperimentConfig) -> Vec<Particle> {
    let (inf_lo, inf_hi) = config.init_infected;
    let (r_lo, r_hi) = config.init_r;
    let (p_lo, p_hi) = config.init_p_hd;
    (0..config.n_particles as u64)
        .into_par_iter()
        .map(|slot| {
            let mut rng = RngStream::for_task(config.master_seed, Purpose::Init, 0, slot);
            let seeded = rng.random_range(inf_lo..=inf_hi);
            let r = r_lo + (r_hi - r_lo) * rng.random::<f64>();
            let p_hd = p_lo + (p_hi - p_lo) * rng.random::<f64>();
            Particle {
                index: slot,
                state: CompartmentState::seeded_exposed(seeded, config.fixed.t_e),
                dyn_params: DynamicParams {
                    r,
                    p_hd,
                    mean_t_h: config.init_mean_t_h,
                },
            }
        })
        .collect()
}

fn step_all(
    config: &ExperimentConfig,
    particles: &mut [Particle],
    day: u64,
) -> Result<(), ExperimentError> {
    let seed = config.master_seed;
    let fixed = &config.fixed;
    particles
        .par_iter_mut()
        .for_each(|p| step_particle(seed, p, day, fixed));
    let bad = particles
        .par_iter()
        .find_first(|p| !p.state.is_conserved() || !p.dyn_params.within(&fixed.walk));
    match bad {
        None => Ok(()),
        Some(p) => Err(ExperimentError::Invariant {
            day,
            index: p.index,
            what: if p.state.is_conserved() {
                "dynamic parameter left its bounds"
            } else {
                "agent count not conserved"
            },
        }),
    }
}

/// Run the filter over `obs`, returning the chronological daily summaries.
///
/// Days `0..free_run_days` evolve freely and emit one `free` summary each.
/// Every observed day then emits a `forecast` summary (after the step, under
/// the previous weights) and an `analysis` summary (after the weight
/// update); resampling, if triggered, happens after the analysis summary.
pub fn run(
    config: &ExperimentConfig,
    obs: &ObservationSeries,
) -> Result<Vec<DailySummary>, ExperimentError> {
    config.validate()?;
    if let Some(first) = obs.first_day() {
        if first != config.free_run_days {
            return Err(ExperimentError::Misaligned {
                expected: config.free_run_days,
                found: first,
            });
        }
    }
    let n = config.n_particles;
    let levels = &config.ci_levels;
    let rt_scale = rt_per_unit_r(&config.fixed);
    let mut particles = init_particles(config);
    let mut weights = WeightVector::uniform(n);
    let mut summaries = Vec::with_capacity(config.free_run_days as usize + 2 * obs.len());

    for day in 0..config.free_run_days {
        step_all(config, &mut particles, day)?;
        let view = View {
            weights: &weights,
            phase: Phase::Free,
            n_eff: n as f64,
            resampled: false,
        };
        summaries.extend(summarize(&particles, &[view], levels, rt_scale, day));
    }

    let mut days_since_resample = 0u64;
    let mut prev_h: Option<u64> = None;
    for record in obs.records() {
        let day = record.day_index;
        step_all(config, &mut particles, day)?;
        let prior_n_eff = effective_particles(&weights);
        let posterior = update_weights(
            &weights,
            &particles,
            record,
            prev_h.unwrap_or(record.h_stock),
            &config.errors,
        )?;
        prev_h = Some(record.h_stock);
        let n_eff = effective_particles(&posterior);
        days_since_resample += 1;
        let resampled = config
            .resample
            .should_resample(n_eff, n, days_since_resample);
        let views = [
            View {
                weights: &weights,
                phase: Phase::Forecast,
                n_eff: prior_n_eff,
                resampled: false,
            },
            View {
                weights: &posterior,
                phase: Phase::Analysis,
                n_eff,
                resampled,
            },
        ];
        summaries.extend(summarize(&particles, &views, levels, rt_scale, day));
        weights = posterior;

        if resampled {
            let mut rng = RngStream::for_task(config.master_seed, Purpose::Resample, day, 0);
            (particles, weights) = resample(&mut rng, &particles, &weights)?;
            days_since_resample = 0;
        }
    }
    Ok(summaries)
}

/// [`run`] on a dedicated pool of `threads` workers.
pub fn run_with_threads(
    config: &ExperimentConfig,
    obs: &ObservationSeries,
    threads: usize,
) -> Result<Vec<DailySummary>, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| {
            ExperimentError::Config(format!("cannot start {threads} worker threads: {e}"))
        })?;
    pool.install(|| run(config, obs))
}

/// Relative gap `(forecast - analysis) / analysis` of the mean H per
/// observed day. Days with a zero analysis mean are skipped.
pub fn forecast_analysis_divergence(summaries: &[DailySummary]) -> Vec<(u64, f64)> {
    let mut out = Vec::new();
    let mut forecast: Option<(u64, f64)> = None;
    for s in summaries {
        match s.phase {
            Phase::Forecast => forecast = Some((s.day_index, s.get(Quantity::H).mean)),
            Phase::Analysis => {
                if let Some((day, f)) = forecast.take() {
                    let a = s.get(Quantity::H).mean;
                    if day == s.day_index && a != 0.0 {
                        out.push((day, (f - a) / a));
                    }
                }
            }
            Phase::Free => {}
        }
    }
    out
}

/// Parameter varied across a sensitivity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    /// Symptomatic fraction; the asymptomatic branch follows as `1 - p_as`.
    PAs,
    NParticles,
    MasterSeed,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::PAs => "p_as",
            SweepAxis::NParticles => "n_particles",
            SweepAxis::MasterSeed => "master_seed",
        }
    }

    /// Return `base` with this axis set to `value`.
    pub fn apply(
        self,
        base: &ExperimentConfig,
        value: &str,
    ) -> Result<ExperimentConfig, ExperimentError> {
        let bad = || {
            ExperimentError::Config(format!(
                "bad value `{value}` for sweep axis {}",
                self.name()
            ))
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::K => cfg.fixed.k = value.parse().map_err(|_| bad())?,
            SweepAxis::PAs => cfg.fixed.p_as = value.parse().map_err(|_| bad())?,
            SweepAxis::NParticles => cfg.n_particles = value.parse().map_err(|_| bad())?,
            SweepAxis::MasterSeed => cfg.master_seed = value.parse().map_err(|_| bad())?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k" | "model.k" => Ok(SweepAxis::K),
            "p_as" | "model.p_as" => Ok(SweepAxis::PAs),
            "n_particles" | "particles" | "filter.n_particles" => Ok(SweepAxis::NParticles),
            "master_seed" | "seed" | "run.seed" => Ok(SweepAxis::MasterSeed),
            other => Err(ExperimentError::Config(format!(
                "unknown sweep axis `{other}` (expected k, p_as, n_particles or master_seed)"
            ))),
        }
    }
}

/// One independent run per sweep value, in the given order.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    obs: &ObservationSeries,
) -> Result<Vec<(String, Vec<DailySummary>)>, ExperimentError> {
    values
        .iter()
        .map(|value| {
            let annotate = |e: ExperimentError| ExperimentError::Sweep {
                value: value.clone(),
                source: Box::new(e),
            };
            let cfg = axis.apply(base, value).map_err(annotate)?;
            let summaries = run(&cfg, obs).map_err(annotate)?;
            Ok((value.clone(), summaries))
        })
        .collect()
}

/// Ground truth for a synthetic-twin experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinScenario {
    pub seed_agents: u64,
    /// `(first_day, r)` pieces of a piecewise-constant contact factor,
    /// sorted by day; the first piece must start at day 0.
    pub r_pieces: Vec<(u64, f64)>,
    pub p_hd: f64,
    pub mean_t_h: f64,
    /// Simulated days, including the unobserved free run.
    pub days: u64,
    pub seed: u64,
}

impl TwinScenario {
    pub fn r_on(&self, day: u64) -> f64 {
        self.r_pieces
            .iter()
            .rev()
            .find(|(start, _)| *start <= day)
            .map(|&(_, r)| r)
            .unwrap_or(self.r_pieces[0].1)
    }
}

/// Output of [`synthetic_twin`].
#[derive(Debug, Clone)]
pub struct Twin {
    pub observations: ObservationSeries,
    /// State at the end of every simulated day.
    pub states: Vec<CompartmentState>,
}

/// Simulate one epidemic with known parameters and record its H, R and D
/// from day `first_obs_day` on as an observation series.
pub fn synthetic_twin(
    fixed: &FixedParams,
    scenario: &TwinScenario,
    first_obs_day: u64,
    start_date: NaiveDate,
) -> Result<Twin, ExperimentError> {
    fixed.validate()?;
    if scenario.r_pieces.first().map(|p| p.0) != Some(0) {
        return Err(ExperimentError::Config(
            "truth r path must start at day 0".into(),
        ));
    }
    let mut state = CompartmentState::seeded_exposed(scenario.seed_agents, fixed.t_e);
    let mut states = Vec::with_capacity(scenario.days as usize);
    let mut records = Vec::new();
    for day in 0..scenario.days {
        let dyn_params = DynamicParams {
            r: scenario.r_on(day),
            p_hd: scenario.p_hd,
            mean_t_h: scenario.mean_t_h,
        };
        let mut infect = RngStream::for_task(scenario.seed, Purpose::Synthetic, day, 0);
        let mut transit = RngStream::for_task(scenario.seed, Purpose::Synthetic, day, 1);
        state.simulate_day(&mut infect, &mut transit, &dyn_params, fixed);
        if day >= first_obs_day {
            records.push(Observation {
                day_index: day,
                h_stock: state.h_stock(),
                r_cum: state.r_cum,
                d_cum: state.d_cum,
            });
        }
        states.push(state.clone());
    }
    Ok(Twin {
        observations: ObservationSeries::new(start_date, records)?,
        states,
    })
}
