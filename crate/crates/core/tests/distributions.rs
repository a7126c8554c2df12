//! Large-sample statistical checks of the sampling primitives against
//! independent reference samplers or closed forms.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use seir_filter::distributions::{sample_discrete, sample_multinomial, sample_truncated_normal};
use seir_filter::epimodel::FixedParams;
use seir_filter::rng::RngStream;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const DRAWS: usize = 1_000_000;

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Reference: plain normal draws, rejected outside the interval.
fn rejection_truncated_normal(rng: &mut impl Rng, mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let x = mu + sigma * z;
        if x >= lo && x <= hi {
            return x;
        }
    }
}

#[test]
fn truncated_normal_with_inactive_bounds_matches_normal() {
    let mut rng = RngStream::new(101, &[]);
    let xs: Vec<f64> = (0..DRAWS)
        .map(|_| sample_truncated_normal(&mut rng, 15.0, 0.75, 4.0, 19.0).unwrap())
        .collect();
    let (mean, se) = mean_and_se(&xs);
    assert!((mean - 15.0).abs() < 3.0 * se, "mean {mean}, se {se}");

    let mut reference = Xoshiro256PlusPlus::seed_from_u64(7);
    let ys: Vec<f64> = (0..DRAWS)
        .map(|_| rejection_truncated_normal(&mut reference, 15.0, 0.75, 4.0, 19.0))
        .collect();
    let (ref_mean, ref_se) = mean_and_se(&ys);
    assert!((mean - ref_mean).abs() < 3.0 * (se * se + ref_se * ref_se).sqrt());
}

#[test]
fn truncated_normal_at_boundary_is_half_normal() {
    let mut rng = RngStream::new(102, &[]);
    let xs: Vec<f64> = (0..DRAWS)
        .map(|_| sample_truncated_normal(&mut rng, 0.0, 0.05, 0.0, 1.0).unwrap())
        .collect();
    let (mean, se) = mean_and_se(&xs);
    let half_normal = 0.05 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((half_normal - 0.0399).abs() < 1e-4);
    assert!(
        (mean - half_normal).abs() < 3.0 * se,
        "mean {mean} vs {half_normal}"
    );

    let mut reference = Xoshiro256PlusPlus::seed_from_u64(8);
    let ys: Vec<f64> = (0..DRAWS)
        .map(|_| rejection_truncated_normal(&mut reference, 0.0, 0.05, 0.0, 1.0))
        .collect();
    let (ref_mean, ref_se) = mean_and_se(&ys);
    assert!((mean - ref_mean).abs() < 3.0 * (se * se + ref_se * ref_se).sqrt());
}

#[test]
fn truncated_normal_quartiles_match_rejection_sampler() {
    // Asymmetric truncation: mu near the upper bound.
    let (mu, sigma, lo, hi) = (0.97, 0.05, 0.0, 1.0);
    let mut rng = RngStream::new(103, &[]);
    let mut reference = Xoshiro256PlusPlus::seed_from_u64(9);
    let n = 200_000;
    let mut xs: Vec<f64> = (0..n)
        .map(|_| sample_truncated_normal(&mut rng, mu, sigma, lo, hi).unwrap())
        .collect();
    let mut ys: Vec<f64> = (0..n)
        .map(|_| rejection_truncated_normal(&mut reference, mu, sigma, lo, hi))
        .collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let i = (q * n as f64) as usize;
        assert!((xs[i] - ys[i]).abs() < 2e-3, "q{q}: {} vs {}", xs[i], ys[i]);
    }
}

#[test]
fn multinomial_table4_outcome_one() {
    let offspring = FixedParams::default().offspring;
    let mut rng = RngStream::new(104, &[]);
    let counts = sample_multinomial(&mut rng, 1_000_000, &offspring).unwrap();
    assert_eq!(counts.iter().sum::<u64>(), 1_000_000);
    let sd = (1e6f64 * 0.35 * 0.65).sqrt();
    assert!(
        (counts[1] as f64 - 350_000.0).abs() < 3.0 * sd,
        "{counts:?}"
    );
}

#[test]
fn multinomial_chi_square_over_many_seeds() {
    let probs = FixedParams::default().offspring;
    let critical = ChiSquared::new((probs.len() - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    let n = 1_000_000u64;
    let mut failures = Vec::new();
    for seed in 0..100 {
        let mut rng = RngStream::new(seed, &[105]);
        let counts = sample_multinomial(&mut rng, n, &probs).unwrap();
        assert_eq!(counts.iter().sum::<u64>(), n);
        let chi2: f64 = counts
            .iter()
            .zip(&probs)
            .map(|(&c, &p)| {
                let e = n as f64 * p;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        if chi2 > critical {
            failures.push((seed, chi2));
        }
    }
    assert!(
        failures.is_empty(),
        "chi-square above {critical}: {failures:?}"
    );
}

#[test]
fn duration_tables_have_expected_means() {
    let f = FixedParams::default();
    for (dist, expected, support) in [
        (&f.dist_t_as, 2.85f64, 2..=5),
        (&f.dist_t_a_inf, 7.0, 5..=9),
        (&f.dist_t_sh, 3.85, 2..=6),
    ] {
        let mut rng = RngStream::new(106, &[expected.to_bits()]);
        let xs: Vec<f64> = (0..DRAWS)
            .map(|_| {
                let v = sample_discrete(&mut rng, dist);
                assert!(support.contains(&v));
                v as f64
            })
            .collect();
        let (mean, se) = mean_and_se(&xs);
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs {expected}"
        );
    }
}

#[test]
fn discrete_frequencies_converge() {
    let f = FixedParams::default();
    let dist = &f.dist_t_sh;
    let mut rng = RngStream::new(107, &[]);
    let mut hist = [0u64; 10];
    for _ in 0..DRAWS {
        hist[sample_discrete(&mut rng, dist) as usize] += 1;
    }
    for (&day, &p) in dist.values().iter().zip(dist.probs()) {
        let freq = hist[day as usize] as f64 / DRAWS as f64;
        let sd = (p * (1.0 - p) / DRAWS as f64).sqrt();
        assert!((freq - p).abs() <= 4.0 * sd, "day {day}: {freq} vs {p}");
    }
}
