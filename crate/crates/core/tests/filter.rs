//! Statistical and end-to-end properties of the particle filter.

use rand::Rng;
use seir_filter::assimilation::{effective_particles, resample, resample_counts, WeightVector};
use seir_filter::experiment::{init_particles, run, synthetic_twin, TwinScenario};
use seir_filter::observations::default_sim_start;
use seir_filter::rng::RngStream;
use seir_filter::{ExperimentConfig, FixedParams, ObservationSeries, Phase, Quantity};

/// Weights spread over a factor of six, large enough that every particle's
/// copy count is well inside the normal regime over many resamplings.
fn random_weights(rng: &mut impl Rng, n: usize) -> WeightVector {
    let raw: Vec<f64> = (0..n).map(|_| 0.2 + rng.random::<f64>()).collect();
    WeightVector::from_unnormalized(raw).unwrap()
}

#[test]
fn expected_copies_equal_n_times_weight() {
    let n = 100;
    let reps = 10_000;
    let mut rng = RngStream::new(301, &[]);
    let w = random_weights(&mut rng, n);
    let mut totals = vec![0u64; n];
    for _ in 0..reps {
        let counts = resample_counts(&mut rng, &w);
        assert_eq!(counts.iter().sum::<u64>(), n as u64);
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    for (i, (&t, &wi)) in totals.iter().zip(w.as_slice()).enumerate() {
        let expected = n as f64 * wi;
        let mean = t as f64 / reps as f64;
        let se = (n as f64 * wi * (1.0 - wi) / reps as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 4.0 * se,
            "particle {i}: {mean} vs {expected}"
        );
    }
}

#[test]
fn resampling_preserves_the_weighted_mean() {
    let n = 10_000;
    let config = ExperimentConfig {
        n_particles: n,
        ..ExperimentConfig::default()
    };
    let particles = init_particles(&config);
    let mut rng = RngStream::new(302, &[]);
    let w = random_weights(&mut rng, n);
    let value = |p: &seir_filter::Particle| p.dyn_params.r;
    let target: f64 = particles
        .iter()
        .zip(w.as_slice())
        .map(|(p, w)| value(p) * w)
        .sum();
    let var: f64 = particles
        .iter()
        .zip(w.as_slice())
        .map(|(p, w)| (value(p) - target).powi(2) * w)
        .sum();

    let reps = 100;
    let mut diffs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let (copies, uniform) = resample(&mut rng, &particles, &w).unwrap();
        assert!(uniform.is_uniform());
        assert!(copies.iter().enumerate().all(|(i, p)| p.index == i as u64));
        let mean = copies.iter().map(value).sum::<f64>() / n as f64;
        diffs.push(mean - target);
    }
    let avg = diffs.iter().sum::<f64>() / reps as f64;
    // Each resampled mean has variance at most var / n.
    let se = (var / n as f64 / reps as f64).sqrt();
    assert!(avg.abs() < 3.0 * se, "bias {avg}, se {se}");
}

fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n_particles: 500,
        master_seed: seed,
        ..ExperimentConfig::default()
    }
}

fn small_twin() -> ObservationSeries {
    let scenario = TwinScenario {
        seed_agents: 20,
        r_pieces: vec![(0, 0.6), (70, 0.3)],
        p_hd: 0.02,
        mean_t_h: 12.0,
        days: 110,
        seed: 11,
    };
    synthetic_twin(&FixedParams::default(), &scenario, 49, default_sim_start())
        .unwrap()
        .observations
}

#[test]
fn empty_observations_give_a_pure_free_run() {
    let obs = ObservationSeries::empty(default_sim_start());
    let summaries = run(&small_config(5), &obs).unwrap();
    assert_eq!(summaries.len(), 49);
    assert!(summaries
        .iter()
        .all(|s| s.phase == Phase::Free && !s.resampled));
    assert!(summaries.iter().all(|s| s.n_eff == 500.0));
}

#[test]
fn same_seed_same_summaries() {
    let obs = small_twin();
    let a = run(&small_config(9), &obs).unwrap();
    let b = run(&small_config(9), &obs).unwrap();
    assert_eq!(a, b);
    let c = run(&small_config(10), &obs).unwrap();
    assert_ne!(a, c);
}

#[test]
fn filter_log_layout() {
    let obs = small_twin();
    let summaries = run(&small_config(12), &obs).unwrap();
    assert_eq!(summaries.len(), 49 + 2 * obs.len());
    for pair in summaries[49..].chunks(2) {
        assert_eq!(pair[0].phase, Phase::Forecast);
        assert_eq!(pair[1].phase, Phase::Analysis);
        assert_eq!(pair[0].day_index, pair[1].day_index);
        assert!(pair[1].n_eff >= 1.0 - 1e-9 && pair[1].n_eff <= 500.0 + 1e-9);
        for q in Quantity::ALL {
            let s = pair[1].get(q);
            let (i68, i90) = (s.interval(0.68).unwrap(), s.interval(0.9).unwrap());
            assert!(i90.lo <= i68.lo && i68.lo <= i68.hi && i68.hi <= i90.hi);
        }
    }
}

#[test]
fn analysis_tracks_the_observed_hospital_stock() {
    let obs = small_twin();
    let summaries = run(&small_config(13), &obs).unwrap();
    let last = obs.records().last().unwrap();
    let analysis = summaries
        .iter()
        .rev()
        .find(|s| s.phase == Phase::Analysis)
        .unwrap();
    let h = analysis.get(Quantity::H);
    let ci = h.interval(0.9).unwrap();
    assert!(
        ci.lo <= last.h_stock as f64 + 1.0 && last.h_stock as f64 - 1.0 <= ci.hi,
        "{ci:?} vs {}",
        last.h_stock
    );
    assert!(
        (h.mean - last.h_stock as f64).abs() <= 0.5 * last.h_stock.max(20) as f64,
        "mean {} vs {}",
        h.mean,
        last.h_stock
    );
}

#[test]
fn degenerate_weights_collapse_the_effective_size() {
    let mut raw = vec![0.0; 64];
    raw[3] = 2.5;
    let w = WeightVector::from_unnormalized(raw).unwrap();
    assert_eq!(effective_particles(&w), 1.0);
    assert_eq!(effective_particles(&WeightVector::uniform(64)), 64.0);
}
