//! Agent-based extended SEIR epidemic model coupled with a particle filter.
//!
//! Each particle is an independent stochastic epidemic whose latent contact
//! factor `r_t`, hospital death probability and mean hospital stay follow
//! truncated-normal random walks. Daily observations of the hospitalized
//! stock and the cumulative recoveries and deaths reweight the ensemble,
//! giving posterior distributions of the effective reproduction number
//! `R_t` and the latent medical parameters.

pub mod assimilation;
pub mod cli;
pub mod config;
pub mod distributions;
pub mod epimodel;
pub mod experiment;
pub mod observations;
pub mod report;
pub mod rng;

pub use assimilation::{ErrorModel, Observation, WeightVector};
pub use epimodel::{compute_rt, CompartmentState, DynamicParams, FixedParams, Particle};
pub use experiment::{run, DailySummary, ExperimentConfig, ExperimentError, Phase, Quantity};
pub use observations::ObservationSeries;
pub use rng::RngStream;
