//! Agent-based extended SEIR model with compartments E, I_a, I_s, H, R, D.
//!
//! Agents inside a compartment are exchangeable, so each compartment is a
//! cohort queue: `queue[d]` holds the number of agents that leave after
//! `d + 1` more daily advances. All branching and duration draws are exact
//! binomial or multinomial splits of whole cohorts.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::distributions::{
    multinomial_into, sample_binomial, sample_truncated_normal, two_point_weights,
    DiscreteDistribution, DistributionError,
};
use crate::rng::{Purpose, RngStream};

/// Number of outcomes (0..=5 secondary cases) of the daily offspring draw.
pub const OFFSPRING_OUTCOMES: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} is not a probability")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("offspring distribution: {0}")]
    Offspring(DistributionError),
    #[error("{name}: durations must be at least one day, found {min}")]
    ShortDuration { name: &'static str, min: i64 },
    #[error("incubation period must be at least one day")]
    ZeroIncubation,
    #[error("random walk for {name}: {reason}")]
    Walk { name: &'static str, reason: String },
}

/// Truncated-normal random walk for one latent parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Walk {
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Walk {
    #[inline]
    fn step<R: Rng + ?Sized>(&self, rng: &mut R, current: f64) -> f64 {
        sample_truncated_normal(rng, current, self.sigma, self.lo, self.hi)
            .expect("walk parameters validated with FixedParams")
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn validate(&self, name: &'static str) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::Walk { name, reason });
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return bad(format!("bad interval [{}, {}]", self.lo, self.hi));
        }
        Ok(())
    }
}

/// Daily random-walk settings for the three latent parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub r: Walk,
    pub p_hd: Walk,
    pub mean_t_h: Walk,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            r: Walk {
                sigma: 0.05,
                lo: 0.0,
                hi: 1.0,
            },
            p_hd: Walk {
                sigma: 0.0025,
                lo: 0.0,
                hi: 0.05,
            },
            mean_t_h: Walk {
                sigma: 0.75,
                lo: 4.0,
                hi: 19.0,
            },
        }
    }
}

/// Static model constants.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedParams {
    /// I_a -> I_s (symptomatic). The asymptomatic branch is `1 - p_as`.
    pub p_as: f64,
    /// I_s -> H (contacts health authorities). Self-quarantine is `1 - p_sh`.
    pub p_sh: f64,
    /// Relative infectivity of asymptomatic agents.
    pub k: f64,
    /// Days in E.
    pub t_e: u32,
    pub dist_t_a_inf: DiscreteDistribution,
    pub dist_t_as: DiscreteDistribution,
    pub dist_t_sh: DiscreteDistribution,
    /// Daily offspring distribution `p_0..p_5`.
    pub offspring: [f64; OFFSPRING_OUTCOMES],
    pub walk: WalkParams,
}

impl Default for FixedParams {
    fn default() -> Self {
        let days = |probs: &[f64]| {
            DiscreteDistribution::from_consecutive(1, probs).expect("default table is valid")
        };
        Self {
            p_as: 0.83,
            p_sh: 0.78,
            k: 0.58,
            t_e: 3,
            dist_t_a_inf: days(&[0.0, 0.0, 0.0, 0.0, 0.05, 0.2, 0.5, 0.2, 0.05]),
            dist_t_as: days(&[0.0, 0.3, 0.6, 0.05, 0.05]),
            dist_t_sh: days(&[0.0, 0.1, 0.2, 0.5, 0.15, 0.05]),
            offspring: [0.5, 0.35, 0.12, 0.01, 0.01, 0.01],
            walk: WalkParams::default(),
        }
    }
}

impl FixedParams {
    pub fn p_a_inf(&self) -> f64 {
        1.0 - self.p_as
    }

    pub fn p_s_inf(&self) -> f64 {
        1.0 - self.p_sh
    }

    /// Expected number of secondary cases per day, `sum j * p_j`.
    pub fn e_sc(&self) -> f64 {
        self.offspring
            .iter()
            .enumerate()
            .map(|(j, p)| j as f64 * p)
            .sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, value) in [("p_as", self.p_as), ("p_sh", self.p_sh), ("k", self.k)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::NotAProbability { name, value });
            }
        }
        DiscreteDistribution::new(
            (0..OFFSPRING_OUTCOMES as i64).collect(),
            self.offspring.to_vec(),
        )
        .map_err(ModelError::Offspring)?;
        for (name, d) in [
            ("t_a_inf", &self.dist_t_a_inf),
            ("t_as", &self.dist_t_as),
            ("t_sh", &self.dist_t_sh),
        ] {
            if d.min_value() < 1 {
                return Err(ModelError::ShortDuration {
                    name,
                    min: d.min_value(),
                });
            }
        }
        if self.t_e == 0 {
            return Err(ModelError::ZeroIncubation);
        }
        self.walk.r.validate("r")?;
        self.walk.p_hd.validate("p_hd")?;
        self.walk.mean_t_h.validate("mean_t_h")?;
        if self.walk.r.lo < 0.0 || self.walk.r.hi > 1.0 {
            return Err(ModelError::Walk {
                name: "r",
                reason: "bounds must lie inside [0, 1]".into(),
            });
        }
        if self.walk.p_hd.lo < 0.0 || self.walk.p_hd.hi > 1.0 {
            return Err(ModelError::Walk {
                name: "p_hd",
                reason: "bounds must lie inside [0, 1]".into(),
            });
        }
        if self.walk.mean_t_h.lo < 1.0 {
            return Err(ModelError::Walk {
                name: "mean_t_h",
                reason: "lower bound must be at least one day".into(),
            });
        }
        Ok(())
    }
}

/// The three latent quantities that evolve every day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicParams {
    /// Contact-reduction factor in [0, 1].
    pub r: f64,
    /// Probability of dying once in H. Recovery is `1 - p_hd`.
    pub p_hd: f64,
    /// Expected length of stay in H, in days.
    pub mean_t_h: f64,
}

impl DynamicParams {
    pub fn p_hr(&self) -> f64 {
        1.0 - self.p_hd
    }

    pub fn within(&self, walk: &WalkParams) -> bool {
        walk.r.contains(self.r)
            && walk.p_hd.contains(self.p_hd)
            && walk.mean_t_h.contains(self.mean_t_h)
    }
}

/// One day of the truncated-normal walks for r, p_hd and E(T_h).
pub fn evolve_params<R: Rng + ?Sized>(
    rng: &mut R,
    dyn_params: &DynamicParams,
    walk: &WalkParams,
) -> DynamicParams {
    DynamicParams {
        r: walk.r.step(rng, dyn_params.r),
        p_hd: walk.p_hd.step(rng, dyn_params.p_hd),
        mean_t_h: walk.mean_t_h.step(rng, dyn_params.mean_t_h),
    }
}

/// Offspring probabilities scaled by `factor` (`k * r` or `r`): mass
/// `1 - factor` moves onto zero secondary cases.
#[inline]
fn scaled_offspring(
    offspring: &[f64; OFFSPRING_OUTCOMES],
    factor: f64,
) -> [f64; OFFSPRING_OUTCOMES] {
    let mut p = [0.0; OFFSPRING_OUTCOMES];
    for j in 1..OFFSPRING_OUTCOMES {
        p[j] = factor * offspring[j];
    }
    p[0] = (1.0 - factor) + factor * offspring[0];
    p
}

/// New infections produced today by `n_asym` asymptomatic and `n_sym`
/// symptomatic agents in I_a.
pub fn spawn_infections<R: Rng + ?Sized>(
    rng: &mut R,
    n_asym: u64,
    n_sym: u64,
    dyn_params: &DynamicParams,
    fixed: &FixedParams,
) -> u64 {
    let mut counts = [0u64; OFFSPRING_OUTCOMES];
    let mut total = 0u64;
    for (n, factor) in [(n_asym, fixed.k * dyn_params.r), (n_sym, dyn_params.r)] {
        if n == 0 || factor <= 0.0 {
            continue;
        }
        let probs = scaled_offspring(&fixed.offspring, factor.min(1.0));
        multinomial_into(rng, n, &probs, &mut counts);
        for (j, &c) in counts.iter().enumerate().skip(1) {
            total = total.saturating_add(c.saturating_mul(j as u64));
        }
    }
    total
}

/// Counts indexed by remaining days: slot `d` leaves after `d + 1` advances.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CohortQueue {
    slots: VecDeque<u64>,
}

impl CohortQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueue `count` agents with `remaining >= 1` days to go.
    #[inline]
    pub fn push(&mut self, remaining: usize, count: u64) {
        debug_assert!(remaining >= 1);
        if count == 0 {
            return;
        }
        let idx = remaining - 1;
        if self.slots.len() <= idx {
            self.slots.resize(idx + 1, 0);
        }
        self.slots[idx] += count;
    }

    /// Advance one day and return the agents whose time ran out.
    #[inline]
    pub fn advance(&mut self) -> u64 {
        self.slots.pop_front().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.slots.iter().sum()
    }

    /// Agents with exactly `remaining` days to go.
    pub fn at(&self, remaining: usize) -> u64 {
        remaining
            .checked_sub(1)
            .and_then(|i| self.slots.get(i))
            .copied()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(|&c| c == 0)
    }
}

/// Occupancy of every compartment of one epidemic realization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompartmentState {
    pub e_queue: CohortQueue,
    pub ia_asym_queue: CohortQueue,
    pub ia_sym_queue: CohortQueue,
    /// Only agents on the I_s -> H branch are queued.
    pub is_queue: CohortQueue,
    pub h_to_r_queue: CohortQueue,
    pub h_to_d_queue: CohortQueue,
    pub r_cum: u64,
    pub d_cum: u64,
    pub removed_asym_cum: u64,
    pub removed_selfq_cum: u64,
    pub infected_cum: u64,
    /// Agents placed in the model at initialization.
    pub seeded: u64,
}

impl CompartmentState {
    /// A state with `n` agents in E, each with `t_e` days to go.
    pub fn seeded_exposed(n: u64, t_e: u32) -> Self {
        let mut state = Self::default();
        state.e_queue.push(t_e as usize, n);
        state.seeded = n;
        state
    }

    /// Current stock in H.
    pub fn h_stock(&self) -> u64 {
        self.h_to_r_queue.total() + self.h_to_d_queue.total()
    }

    pub fn exposed(&self) -> u64 {
        self.e_queue.total()
    }

    pub fn asymptomatic(&self) -> u64 {
        self.ia_asym_queue.total()
    }

    pub fn presymptomatic(&self) -> u64 {
        self.ia_sym_queue.total()
    }

    pub fn symptomatic(&self) -> u64 {
        self.is_queue.total()
    }

    fn queued(&self) -> u64 {
        self.exposed()
            + self.asymptomatic()
            + self.presymptomatic()
            + self.symptomatic()
            + self.h_stock()
    }

    /// `infected_cum + seeded == queued + R + D + removed`.
    pub fn is_conserved(&self) -> bool {
        let lhs = self.infected_cum as u128 + self.seeded as u128;
        let rhs = self.queued() as u128
            + self.r_cum as u128
            + self.d_cum as u128
            + self.removed_asym_cum as u128
            + self.removed_selfq_cum as u128;
        lhs == rhs
    }

    /// No agent left anywhere in the infectious chain.
    pub fn is_extinct(&self) -> bool {
        self.queued() == 0
    }

    /// Enqueue a cohort of `n` agents with durations drawn from `dist`.
    fn enqueue_cohort<R: Rng + ?Sized>(
        queue: &mut CohortQueue,
        rng: &mut R,
        n: u64,
        dist: &DiscreteDistribution,
    ) {
        if n == 0 {
            return;
        }
        let values = dist.values();
        let mut counts = [0u64; 32];
        let counts = if values.len() <= counts.len() {
            &mut counts[..values.len()]
        } else {
            // Only reachable with unusually long custom tables.
            return Self::enqueue_cohort_slow(queue, rng, n, dist);
        };
        dist.sample_counts(rng, n, counts);
        for (&days, &c) in values.iter().zip(counts.iter()) {
            queue.push(days as usize, c);
        }
    }

    fn enqueue_cohort_slow<R: Rng + ?Sized>(
        queue: &mut CohortQueue,
        rng: &mut R,
        n: u64,
        dist: &DiscreteDistribution,
    ) {
        let mut counts = vec![0u64; dist.values().len()];
        dist.sample_counts(rng, n, &mut counts);
        for (&days, &c) in dist.values().iter().zip(&counts) {
            queue.push(days as usize, c);
        }
    }

    /// Advance every queue by one day and route the agents whose time ran
    /// out. Compartments are processed downstream first so an agent moves
    /// at most once per day.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        dyn_params: &DynamicParams,
        fixed: &FixedParams,
    ) {
        self.r_cum += self.h_to_r_queue.advance();
        self.d_cum += self.h_to_d_queue.advance();

        // I_s -> H: fate and stay length fixed by today's parameters.
        let to_h = self.is_queue.advance();
        if to_h > 0 {
            let deaths = sample_binomial(rng, to_h, dyn_params.p_hd);
            let (lo, p_lo, hi) = two_point_weights(dyn_params.mean_t_h);
            for (queue, n) in [
                (&mut self.h_to_d_queue, deaths),
                (&mut self.h_to_r_queue, to_h - deaths),
            ] {
                let short = if lo == hi {
                    n
                } else {
                    sample_binomial(rng, n, p_lo)
                };
                queue.push(lo as usize, short);
                queue.push(hi as usize, n - short);
            }
        }

        // I_a -> I_s or S.
        let sym_out = self.ia_sym_queue.advance();
        if sym_out > 0 {
            let to_is = sample_binomial(rng, sym_out, fixed.p_sh);
            self.removed_selfq_cum += sym_out - to_is;
            Self::enqueue_cohort(&mut self.is_queue, rng, to_is, &fixed.dist_t_sh);
        }
        self.removed_asym_cum += self.ia_asym_queue.advance();

        // E -> I_a, split into symptomatic and asymptomatic on entry.
        let to_ia = self.e_queue.advance();
        if to_ia > 0 {
            let sym = sample_binomial(rng, to_ia, fixed.p_as);
            Self::enqueue_cohort(&mut self.ia_sym_queue, rng, sym, &fixed.dist_t_as);
            Self::enqueue_cohort(
                &mut self.ia_asym_queue,
                rng,
                to_ia - sym,
                &fixed.dist_t_a_inf,
            );
        }
    }

    /// Infections from the current I_a occupancy followed by the queue
    /// advance, with the day's parameters held fixed.
    pub fn simulate_day<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        &mut self,
        infection_rng: &mut R1,
        transition_rng: &mut R2,
        dyn_params: &DynamicParams,
        fixed: &FixedParams,
    ) -> u64 {
        let new = spawn_infections(
            infection_rng,
            self.asymptomatic(),
            self.presymptomatic(),
            dyn_params,
            fixed,
        );
        if new > 0 {
            self.e_queue.push(fixed.t_e as usize, new);
            self.infected_cum = self.infected_cum.saturating_add(new);
        }
        self.advance(transition_rng, dyn_params, fixed);
        new
    }
}

/// One independent epidemic realization carried by the filter.
///
/// Importance weights live in the ensemble's weight vector, indexed like the
/// particles.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    /// Slot in the ensemble; part of every random stream derivation path.
    pub index: u64,
    pub state: CompartmentState,
    pub dyn_params: DynamicParams,
}

/// Simulate `day` for one particle: parameter walk (skipped on day 0, whose
/// parameters are the initial ones), infections, then queue advance.
pub fn step_particle(master_seed: u64, particle: &mut Particle, day: u64, fixed: &FixedParams) {
    if day > 0 {
        let mut walk_rng =
            RngStream::for_task(master_seed, Purpose::ParamWalk, day, particle.index);
        particle.dyn_params = evolve_params(&mut walk_rng, &particle.dyn_params, &fixed.walk);
    }
    let mut infection_rng =
        RngStream::for_task(master_seed, Purpose::Infection, day, particle.index);
    let mut transition_rng =
        RngStream::for_task(master_seed, Purpose::Transition, day, particle.index);
    particle.state.simulate_day(
        &mut infection_rng,
        &mut transition_rng,
        &particle.dyn_params,
        fixed,
    );
}

/// Effective reproduction number for the given contact factor.
pub fn compute_rt(dyn_params: &DynamicParams, fixed: &FixedParams) -> f64 {
    rt_per_unit_r(fixed) * dyn_params.r
}

/// `R_t / r_t`: the infectious-period-weighted offspring expectation.
pub fn rt_per_unit_r(fixed: &FixedParams) -> f64 {
    (fixed.k * fixed.p_a_inf() * fixed.dist_t_a_inf.mean() + fixed.p_as * fixed.dist_t_as.mean())
        * fixed.e_sc()
}
