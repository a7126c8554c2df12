//! Sampling primitives: truncated normal, binomial/multinomial, finite
//! discrete distributions and the two-point integer distribution used for
//! hospital stay lengths.

use std::f64::consts::SQRT_2;
use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("truncated normal needs sigma > 0, got {0}")]
    NonPositiveSigma(f64),
    #[error("truncated normal needs lo < hi, got [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("non-finite parameter {name} = {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("negative probability {value} at index {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1")]
    BadSum { sum: f64 },
    #[error("values and probabilities differ in length ({values} vs {probs})")]
    LengthMismatch { values: usize, probs: usize },
    #[error("distribution has no support")]
    Empty,
    #[error("two-point distribution needs a non-negative mean, got {0}")]
    NegativeMean(f64),
}

/// Tolerance on the total mass of a [`DiscreteDistribution`].
pub const DISCRETE_SUM_TOL: f64 = 1e-12;
/// Tolerance on the total mass passed to [`sample_multinomial`].
pub const MULTINOMIAL_SUM_TOL: f64 = 1e-9;

/// Standard normal CDF, accurate in the lower tail down to about -38.
#[inline]
fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

#[inline]
fn norm_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Draw from `N(mu, sigma^2)` restricted to `[lo, hi]`.
///
/// `mu` is the location of the parent normal; it may lie outside the
/// interval. Sampling is by inverse CDF so the cost per draw is constant.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
) -> Result<f64, DistributionError> {
    for (name, value) in [("mu", mu), ("sigma", sigma), ("lo", lo), ("hi", hi)] {
        if !value.is_finite() {
            return Err(DistributionError::NonFinite { name, value });
        }
    }
    if sigma <= 0.0 {
        return Err(DistributionError::NonPositiveSigma(sigma));
    }
    if lo >= hi {
        return Err(DistributionError::EmptyInterval { lo, hi });
    }

    let mut a = (lo - mu) / sigma;
    let mut b = (hi - mu) / sigma;
    // Work on whichever side of the mode keeps the CDF values small, where
    // they carry full relative precision.
    let flip = a + b > 0.0;
    if flip {
        (a, b) = (-b, -a);
    }
    let u: f64 = rng.random();
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    let z = if pb - pa > 0.0 && pb > 1e-300 {
        norm_quantile(pa + u * (pb - pa)).clamp(a, b)
    } else {
        // Entire interval lies beyond ~37 sd: the density there is
        // exp(-t^2/2) ~ exp(-c t) near the closer bound c, so sample the
        // truncated exponential.
        let (c, d) = (-b, -a);
        let span = d - c;
        let tail = -(-c * span).exp_m1();
        let t = c - (-u * tail).ln_1p() / c;
        -(t.clamp(c, d))
    };
    let x = if flip { mu - sigma * z } else { mu + sigma * z };
    Ok(x.clamp(lo, hi))
}

/// Exact binomial draw with the degenerate cases short-circuited.
#[inline]
pub fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability checked to lie in (0, 1)")
        .sample(rng)
}

fn check_probabilities(probs: &[f64], tol: f64) -> Result<(), DistributionError> {
    if probs.is_empty() {
        return Err(DistributionError::Empty);
    }
    let mut sum = 0.0;
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() {
            return Err(DistributionError::NonFinite {
                name: "probability",
                value,
            });
        }
        if value < 0.0 {
            return Err(DistributionError::NegativeProbability { index, value });
        }
        sum += value;
    }
    if (sum - 1.0).abs() > tol {
        return Err(DistributionError::BadSum { sum });
    }
    Ok(())
}

/// Multinomial draw of `n` trials over `probs`, written into `counts`.
///
/// Uses conditional binomials `X_j ~ Bin(n - sum_{i<j} X_i, p_j / sum_{i>=j} p_i)`.
/// The caller guarantees `probs` is a valid probability vector (entries
/// `>= 0`, positive total). `probs` need not be normalised exactly.
pub fn multinomial_into<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64], counts: &mut [u64]) {
    debug_assert_eq!(probs.len(), counts.len());
    counts.iter_mut().for_each(|c| *c = 0);
    if n == 0 {
        return;
    }
    let Some(last) = probs.iter().rposition(|&p| p > 0.0) else {
        return;
    };

    const STACK: usize = 32;
    let mut stack_buf = [0.0f64; STACK];
    let mut heap_buf = Vec::new();
    let suffix: &mut [f64] = if probs.len() <= STACK {
        &mut stack_buf[..probs.len()]
    } else {
        heap_buf.resize(probs.len(), 0.0);
        &mut heap_buf
    };
    let mut acc = 0.0;
    for j in (0..probs.len()).rev() {
        acc += probs[j];
        suffix[j] = acc;
    }

    let mut remaining = n;
    for j in 0..last {
        if remaining == 0 {
            return;
        }
        let p = probs[j];
        if p <= 0.0 {
            continue;
        }
        let x = sample_binomial(rng, remaining, (p / suffix[j]).min(1.0));
        counts[j] = x;
        remaining -= x;
    }
    counts[last] = remaining;
}

/// Validated multinomial draw: counts sum to `n`, `E[count_j] = n * probs[j]`.
pub fn sample_multinomial<R: Rng + ?Sized>(
    rng: &mut R,
    n: u64,
    probs: &[f64],
) -> Result<Vec<u64>, DistributionError> {
    check_probabilities(probs, MULTINOMIAL_SUM_TOL)?;
    let mut counts = vec![0; probs.len()];
    multinomial_into(rng, n, probs, &mut counts);
    Ok(counts)
}

/// A finite distribution over integer values (days or counts).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    values: Vec<i64>,
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(values: Vec<i64>, probs: Vec<f64>) -> Result<Self, DistributionError> {
        if values.len() != probs.len() {
            return Err(DistributionError::LengthMismatch {
                values: values.len(),
                probs: probs.len(),
            });
        }
        check_probabilities(&probs, DISCRETE_SUM_TOL)?;
        Ok(Self { values, probs })
    }

    /// Distribution over `first, first + 1, ...` with the given masses.
    pub fn from_consecutive(first: i64, probs: &[f64]) -> Result<Self, DistributionError> {
        let values = (0..probs.len() as i64).map(|i| first + i).collect();
        Self::new(values, probs.to_vec())
    }

    pub fn point(value: i64) -> Self {
        Self {
            values: vec![value],
            probs: vec![1.0],
        }
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(&v, &p)| v as f64 * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(&v, &p)| p * (v as f64 - m).powi(2))
            .sum()
    }

    pub fn min_value(&self) -> i64 {
        *self.values.iter().min().expect("non-empty by construction")
    }

    pub fn max_value(&self) -> i64 {
        *self.values.iter().max().expect("non-empty by construction")
    }

    /// Single draw by inverse CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
                acc += p;
                if u < acc {
                    return self.values[i];
                }
            }
        }
        self.values[last_positive]
    }

    /// Split a cohort of `n` draws into per-value counts in one multinomial.
    pub fn sample_counts<R: Rng + ?Sized>(&self, rng: &mut R, n: u64, counts: &mut [u64]) {
        multinomial_into(rng, n, &self.probs, counts);
    }
}

impl fmt::Display for DiscreteDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (v, p)) in self.values.iter().zip(&self.probs).enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}:{p}")?;
        }
        Ok(())
    }
}

/// Free function form of [`DiscreteDistribution::sample`].
pub fn sample_discrete<R: Rng + ?Sized>(rng: &mut R, dist: &DiscreteDistribution) -> i64 {
    dist.sample(rng)
}

/// Two-point integer weights `(floor, p_floor, ceil)` with expectation `mean`.
///
/// Returns `p_floor = 1` and `floor == ceil` when `mean` is an integer.
#[inline]
pub fn two_point_weights(mean: f64) -> (i64, f64, i64) {
    let lo = mean.floor();
    let frac = mean - lo;
    if frac == 0.0 {
        (lo as i64, 1.0, lo as i64)
    } else {
        (lo as i64, 1.0 - frac, lo as i64 + 1)
    }
}

/// Distribution on `{floor(mean), ceil(mean)}` whose expectation is `mean`.
pub fn two_point_integer_distribution(
    mean: f64,
) -> Result<DiscreteDistribution, DistributionError> {
    if !mean.is_finite() {
        return Err(DistributionError::NonFinite {
            name: "mean",
            value: mean,
        });
    }
    if mean < 0.0 {
        return Err(DistributionError::NegativeMean(mean));
    }
    let (lo, p_lo, hi) = two_point_weights(mean);
    if lo == hi {
        Ok(DiscreteDistribution::point(lo))
    } else {
        DiscreteDistribution::new(vec![lo, hi], vec![p_lo, 1.0 - p_lo])
    }
}
