//! Particle-filter machinery: Gaussian observation errors, the weight
//! recursion, effective sample size, multinomial resampling and weighted
//! ensemble statistics.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::distributions::multinomial_into;
use crate::epimodel::Particle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("filter diverged on day {day}: no particle is compatible with the observation")]
    Divergence { day: u64 },
    #[error("{particles} particles but {weights} weights")]
    SizeMismatch { particles: usize, weights: usize },
    #[error("empty ensemble")]
    EmptyEnsemble,
}

/// One day of observed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    /// Days since the simulation start date.
    pub day_index: u64,
    /// Agents currently in H.
    pub h_stock: u64,
    /// Cumulative recoveries out of H.
    pub r_cum: u64,
    /// Cumulative deaths out of H.
    pub d_cum: u64,
}

/// Standard deviations of the Gaussian likelihood terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel {
    pub sigma_r: f64,
    pub sigma_d: f64,
    /// Coefficient on the current H level.
    pub sigma_h_rel: f64,
    /// Coefficient on the day-to-day change of H.
    pub sigma_h_diff: f64,
    /// Additive variance term under the square root.
    pub sigma_h_floor: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            sigma_r: 2000.0,
            sigma_d: 100.0,
            sigma_h_rel: 0.3,
            sigma_h_diff: 4.0,
            sigma_h_floor: 400.0,
        }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("sigma_r", self.sigma_r),
            ("sigma_d", self.sigma_d),
            ("sigma_h_rel", self.sigma_h_rel),
            ("sigma_h_diff", self.sigma_h_diff),
            ("sigma_h_floor", self.sigma_h_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Observation error on H, widened on days where H moves a lot.
pub fn sigma_h(h_t: u64, h_prev: u64, err: &ErrorModel) -> f64 {
    let h = h_t as f64;
    let diff = (h - h_prev as f64).abs();
    let spread = err.sigma_h_rel * h + err.sigma_h_diff * diff;
    (spread * spread + err.sigma_h_floor).sqrt()
}

/// Log of the likelihood factor for one particle's `(H, R, D)`.
#[inline]
pub fn log_likelihood(
    h: u64,
    r: u64,
    d: u64,
    obs: &Observation,
    sigma_h: f64,
    err: &ErrorModel,
) -> f64 {
    let term = |sim: u64, observed: u64, sigma: f64| {
        let z = (sim as f64 - observed as f64) / sigma;
        0.5 * z * z
    };
    -(term(h, obs.h_stock, sigma_h)
        + term(r, obs.r_cum, err.sigma_r)
        + term(d, obs.d_cum, err.sigma_d))
}

/// Normalised importance weights, one per particle.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Normalise arbitrary non-negative weights. Returns `None` if they sum
    /// to zero or contain a non-finite value.
    pub fn from_unnormalized(mut raw: Vec<f64>) -> Option<Self> {
        let total: f64 = raw.iter().sum();
        if !(total.is_finite() && total > 0.0) || raw.iter().any(|w| w.is_nan() || *w < 0.0) {
            return None;
        }
        raw.iter_mut().for_each(|w| *w /= total);
        Some(Self(raw))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// Multiply the previous weights by the Gaussian likelihood of today's
/// observation and renormalise.
///
/// Log-weights are shifted by their maximum before exponentiation, which
/// cancels in the normalisation but keeps the best particle at `exp(0)`.
pub fn update_weights(
    prev: &WeightVector,
    particles: &[Particle],
    obs: &Observation,
    obs_prev_h: u64,
    err: &ErrorModel,
) -> Result<WeightVector, FilterError> {
    if particles.is_empty() {
        return Err(FilterError::EmptyEnsemble);
    }
    if particles.len() != prev.len() {
        return Err(FilterError::SizeMismatch {
            particles: particles.len(),
            weights: prev.len(),
        });
    }
    let s_h = sigma_h(obs.h_stock, obs_prev_h, err);
    let log_w: Vec<f64> = particles
        .par_iter()
        .zip(prev.as_slice().par_iter())
        .map(|(p, &w)| {
            if w > 0.0 {
                let s = &p.state;
                w.ln() + log_likelihood(s.h_stock(), s.r_cum, s.d_cum, obs, s_h, err)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    normalize_log_weights(log_w).ok_or(FilterError::Divergence { day: obs.day_index })
}

/// `exp(l_i - max l) / sum_j exp(l_j - max l)`.
pub fn normalize_log_weights(mut log_w: Vec<f64>) -> Option<WeightVector> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    log_w.iter_mut().for_each(|l| *l = (*l - max).exp());
    WeightVector::from_unnormalized(log_w)
}

/// `1 / sum w_i^2`.
pub fn effective_particles(w: &WeightVector) -> f64 {
    1.0 / w.as_slice().iter().map(|x| x * x).sum::<f64>()
}

/// When to resample: weight collapse below a fraction of the ensemble, or
/// a fixed number of days since the last resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplePolicy {
    pub fraction: f64,
    pub forced_days: u64,
}

impl Default for ResamplePolicy {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            forced_days: 15,
        }
    }
}

impl ResamplePolicy {
    pub fn should_resample(&self, n_eff: f64, n: usize, days_since_last: u64) -> bool {
        n_eff < n as f64 * self.fraction || days_since_last >= self.forced_days
    }
}

/// Default policy: `n_eff < n / 10` or at least 15 days since the last resampling.
pub fn should_resample(n_eff: f64, n: usize, days_since_last: u64) -> bool {
    ResamplePolicy::default().should_resample(n_eff, n, days_since_last)
}

/// Copy counts `X ~ MN(N; w)`.
pub fn resample_counts<R: Rng + ?Sized>(rng: &mut R, w: &WeightVector) -> Vec<u64> {
    let mut counts = vec![0; w.len()];
    multinomial_into(rng, w.len() as u64, w.as_slice(), &mut counts);
    counts
}

/// Replace the ensemble by `X_i` copies of each particle `i` (in index
/// order) and reset the weights to `1/N`. Copies are re-indexed by their new
/// slot, so their future random streams diverge.
pub fn resample<R: Rng + ?Sized>(
    rng: &mut R,
    particles: &[Particle],
    w: &WeightVector,
) -> Result<(Vec<Particle>, WeightVector), FilterError> {
    if particles.len() != w.len() {
        return Err(FilterError::SizeMismatch {
            particles: particles.len(),
            weights: w.len(),
        });
    }
    if particles.is_empty() {
        return Err(FilterError::EmptyEnsemble);
    }
    let counts = resample_counts(rng, w);
    let mut out = Vec::with_capacity(particles.len());
    for (p, &c) in particles.iter().zip(&counts) {
        for _ in 0..c {
            let mut copy = p.clone();
            copy.index = out.len() as u64;
            out.push(copy);
        }
    }
    debug_assert_eq!(out.len(), particles.len());
    let n = out.len();
    Ok((out, WeightVector::uniform(n)))
}

/// A central interval at one coverage level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Weighted mean plus central intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub intervals: Vec<Interval>,
}

impl Summary {
    pub fn interval(&self, level: f64) -> Option<&Interval> {
        self.intervals
            .iter()
            .find(|i| (i.level - level).abs() < 1e-12)
    }
}

/// Weighted quantile function of a sample.
///
/// Equal values are merged; each distinct value `x_k` with mass `m_k` sits
/// at the mid-point of its CDF step, `F(x_{k-1}) + m_k / 2`, and quantiles
/// interpolate linearly between neighbouring distinct values. Below the
/// first (above the last) mid-point the minimum (maximum) is returned.
/// Zero-weight entries are ignored.
#[derive(Debug, Clone)]
pub struct WeightedQuantiles {
    values: Vec<f64>,
    positions: Vec<f64>,
}

impl WeightedQuantiles {
    pub fn new(values: &[f64], weights: &[f64]) -> Option<Self> {
        Self::from_order(values, weights, &sort_order(values))
    }

    /// Like [`WeightedQuantiles::new`], reusing an ascending `order` of
    /// `values` from [`sort_order`].
    pub fn from_order(values: &[f64], weights: &[f64], order: &[usize]) -> Option<Self> {
        let mut merged_values: Vec<f64> = Vec::new();
        let mut merged_mass: Vec<f64> = Vec::new();
        for &i in order {
            let (v, w) = (values[i], weights[i]);
            if w <= 0.0 {
                continue;
            }
            match merged_values.last() {
                Some(&last) if last == v => *merged_mass.last_mut().unwrap() += w,
                _ => {
                    merged_values.push(v);
                    merged_mass.push(w);
                }
            }
        }
        if merged_values.is_empty() {
            return None;
        }
        let total: f64 = merged_mass.iter().sum();
        let mut positions = Vec::with_capacity(merged_mass.len());
        let mut cum = 0.0;
        for m in merged_mass {
            positions.push((cum + 0.5 * m) / total);
            cum += m;
        }
        Some(Self {
            values: merged_values,
            positions,
        })
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        if p <= self.positions[0] {
            return self.values[0];
        }
        if p >= self.positions[n - 1] {
            return self.values[n - 1];
        }
        // first position strictly greater than p
        let k = self.positions.partition_point(|&x| x <= p);
        let (p0, p1) = (self.positions[k - 1], self.positions[k]);
        let (x0, x1) = (self.values[k - 1], self.values[k]);
        let t = (p - p0) / (p1 - p0);
        x0 + t * (x1 - x0)
    }
}

/// Indices of `values` in ascending order (ties by index).
pub fn sort_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Weighted mean and central `[(1-c)/2, (1+c)/2]` quantile intervals.
pub fn weighted_summary(values: &[f64], w: &WeightVector, levels: &[f64]) -> Summary {
    summary_with_order(values, w, levels, &sort_order(values))
}

/// [`weighted_summary`] with a precomputed [`sort_order`] of `values`.
pub fn summary_with_order(
    values: &[f64],
    w: &WeightVector,
    levels: &[f64],
    order: &[usize],
) -> Summary {
    assert_eq!(values.len(), w.len(), "one value per weight");
    let weights = w.as_slice();
    let total: f64 = weights.iter().sum();
    // Centering on one sample keeps a constant vector's mean exact.
    let pivot = values.first().copied().unwrap_or(0.0);
    let mean = pivot
        + values
            .iter()
            .zip(weights)
            .map(|(v, w)| (v - pivot) * w)
            .sum::<f64>()
            / total;
    let q = WeightedQuantiles::from_order(values, weights, order)
        .expect("normalised weights have positive mass");
    let intervals = levels
        .iter()
        .map(|&level| Interval {
            level,
            lo: q.quantile((1.0 - level) / 2.0),
            hi: q.quantile((1.0 + level) / 2.0),
        })
        .collect();
    Summary { mean, intervals }
}
