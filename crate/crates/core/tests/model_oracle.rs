//! The cohort engine against the per-agent reference simulator and against
//! closed-form expectations of the infection process.

mod common;

use common::{simulate_agents, z_score, AgentParams, Moments};
use seir_filter::epimodel::{spawn_infections, CompartmentState, DynamicParams, FixedParams};
use seir_filter::rng::{Purpose, RngStream};

fn cohort_run(
    seed_agents: u64,
    dyn_params: DynamicParams,
    days: u64,
    replicate: u64,
) -> Vec<CompartmentState> {
    let fixed = FixedParams::default();
    let mut state = CompartmentState::seeded_exposed(seed_agents, fixed.t_e);
    (0..days)
        .map(|day| {
            let mut a = RngStream::for_task(replicate, Purpose::Infection, day, 0);
            let mut b = RngStream::for_task(replicate, Purpose::Transition, day, 0);
            state.simulate_day(&mut a, &mut b, &dyn_params, &fixed);
            assert!(state.is_conserved());
            state.clone()
        })
        .collect()
}

/// Variance of the daily secondary cases of one agent with factor `f`.
fn offspring_variance(fixed: &FixedParams, factor: f64) -> f64 {
    let m1: f64 = (1..6).map(|j| j as f64 * factor * fixed.offspring[j]).sum();
    let m2: f64 = (1..6)
        .map(|j| (j * j) as f64 * factor * fixed.offspring[j])
        .sum();
    m2 - m1 * m1
}

#[test]
fn symptomatic_infection_expectation() {
    let fixed = FixedParams::default();
    let dyn_params = DynamicParams {
        r: 1.0,
        p_hd: 0.0,
        mean_t_h: 10.0,
    };
    let n = 1_000_000u64;
    let mut rng = RngStream::new(201, &[]);
    let reps = 20;
    let mean = (0..reps)
        .map(|_| spawn_infections(&mut rng, 0, n, &dyn_params, &fixed) as f64)
        .sum::<f64>()
        / reps as f64;
    let se = (n as f64 * offspring_variance(&fixed, 1.0) / reps as f64).sqrt();
    assert!((mean - 0.71 * n as f64).abs() < 3.0 * se, "{mean}");
}

#[test]
fn asymptomatic_infection_expectation() {
    let fixed = FixedParams::default();
    let dyn_params = DynamicParams {
        r: 1.0,
        p_hd: 0.0,
        mean_t_h: 10.0,
    };
    let n = 1_000_000u64;
    let mut rng = RngStream::new(202, &[]);
    let reps = 20;
    let mean = (0..reps)
        .map(|_| spawn_infections(&mut rng, n, 0, &dyn_params, &fixed) as f64)
        .sum::<f64>()
        / reps as f64;
    let expected = 0.58 * 0.71 * n as f64;
    let se = (n as f64 * offspring_variance(&fixed, 0.58) / reps as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected}");
}

#[test]
fn cohort_matches_agent_oracle_small_seed() {
    // 50 agents, fixed parameters, 60 days.
    let dyn_params = DynamicParams {
        r: 0.6,
        p_hd: 0.02,
        mean_t_h: 12.0,
    };
    let params = AgentParams::defaults_with(0.6, 0.02, 12.0);
    let reps = 4_000u64;
    let days = 60;
    let mut cohort = vec![[Moments::default(), Moments::default(), Moments::default()]; days];
    let mut agent = vec![[Moments::default(), Moments::default(), Moments::default()]; days];
    for rep in 0..reps {
        for (day, s) in cohort_run(50, dyn_params, days as u64, rep)
            .iter()
            .enumerate()
        {
            cohort[day][0].push(s.h_stock() as f64);
            cohort[day][1].push(s.r_cum as f64);
            cohort[day][2].push(s.d_cum as f64);
        }
        for (day, c) in simulate_agents(50, params, days as u32, 10_000 + rep)
            .iter()
            .enumerate()
        {
            agent[day][0].push(c.h as f64);
            agent[day][1].push(c.r_cum as f64);
            agent[day][2].push(c.d_cum as f64);
        }
    }
    // Checkpoints every ten days keep the number of simultaneous 3-sigma
    // comparisons small.
    for day in (9..days).step_by(10) {
        for q in 0..3 {
            let (c, a) = (&cohort[day][q], &agent[day][q]);
            let z = z_score(c.mean(), c.se_mean(), a.mean(), a.se_mean());
            assert!(
                z < 3.0,
                "day {day} quantity {q}: means {} vs {} (z={z})",
                c.mean(),
                a.mean()
            );
        }
    }
}

#[test]
fn cumulative_infections_match_agent_oracle_over_200_days() {
    let dyn_params = DynamicParams {
        r: 0.6,
        p_hd: 0.02,
        mean_t_h: 12.0,
    };
    let params = AgentParams::defaults_with(0.6, 0.02, 12.0);
    let reps = 100u64;
    let mut cohort = Moments::default();
    let mut agent = Moments::default();
    for rep in 0..reps {
        let states = cohort_run(5, dyn_params, 200, 50_000 + rep);
        cohort.push(states.last().unwrap().infected_cum as f64);
        let counts = simulate_agents(5, params, 200, 90_000 + rep);
        agent.push(counts.last().unwrap().infected_cum as f64);
    }
    let z = z_score(
        cohort.mean(),
        cohort.se_mean(),
        agent.mean(),
        agent.se_mean(),
    );
    assert!(
        z < 3.0,
        "cohort {} vs agent {} (z = {z})",
        cohort.mean(),
        agent.mean()
    );
}
