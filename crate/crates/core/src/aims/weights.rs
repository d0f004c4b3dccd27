//! Importance weights between consecutive tempered targets, the
//! effective-sample-size temperature solver, weighted covariances and the
//! coefficient of variation used by the stopping rule.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const BISECTION_REL_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;
const COVARIANCE_RIDGE: f64 = 1e-10;

/// `1 / tau`, with `tau = inf` mapping to exactly zero.
pub fn inverse_temperature(tau: f64) -> f64 {
    if tau.is_infinite() {
        0.0
    } else {
        1.0 / tau
    }
}

/// Streaming log-sum-exp; `-inf` terms are skipped and an empty or all
/// `-inf` input gives `-inf`.
pub fn log_sum_exp(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for t in terms {
        if t == f64::NEG_INFINITY {
            continue;
        }
        if t > max {
            sum = sum * (max - t).exp() + 1.0;
            max = t;
        } else {
            sum += (t - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        max
    } else {
        max + sum.ln()
    }
}

fn finite_min(h: &[f64]) -> Option<f64> {
    h.iter().copied().filter(|v| v.is_finite()).min_by(f64::total_cmp)
}

/// Unnormalized log weights `-(H_j - min H) * delta`; non-finite `H` maps to `-inf`.
fn log_weights(h: &[f64], h_min: f64, delta: f64) -> impl Iterator<Item = f64> + '_ {
    h.iter().map(move |v| {
        if v.is_finite() {
            -(v - h_min) * delta
        } else {
            f64::NEG_INFINITY
        }
    })
}

/// Normalized importance weights `w_j ∝ exp(-H_j (1/tau_new - 1/tau_old))`.
pub fn importance_weights(h_values: &[f64], tau_new: f64, tau_old: f64) -> Result<Vec<f64>> {
    if !(tau_new > 0.0 && tau_old > 0.0) || tau_new.is_nan() || tau_old.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "temperatures must be positive, got {tau_new} and {tau_old}"
        )));
    }
    if tau_new > tau_old {
        return Err(Error::InvalidArgument(format!(
            "new temperature {tau_new} exceeds previous {tau_old}"
        )));
    }
    let delta = (inverse_temperature(tau_new) - inverse_temperature(tau_old)).max(0.0);
    let h_min = finite_min(h_values).ok_or(Error::DegeneratePopulation)?;
    let unnorm: Vec<f64> = log_weights(h_values, h_min, delta).map(f64::exp).collect();
    let total: f64 = unnorm.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegeneratePopulation);
    }
    Ok(unnorm.into_iter().map(|w| w / total).collect())
}

/// `sum_j w_j^2` of the normalized weights at exponent gap `delta`.
pub fn weight_square_sum(h_values: &[f64], delta: f64) -> f64 {
    let Some(h_min) = finite_min(h_values) else {
        return f64::NAN;
    };
    let lse1 = log_sum_exp(log_weights(h_values, h_min, delta));
    let lse2 = log_sum_exp(log_weights(h_values, h_min, delta).map(|v| 2.0 * v));
    (lse2 - 2.0 * lse1).exp()
}

/// Next temperature from the effective-sample-size condition
/// `sum w^2 = 1 / (gamma N)`, solved by bisection on
/// `delta = 1/tau_new - 1/tau_old`.
///
/// Returns `tau_floor` when the population is flat or when even the floor
/// keeps the effective sample size above `gamma N`.
pub fn solve_temperature(h_values: &[f64], tau_old: f64, gamma: f64, tau_floor: f64) -> f64 {
    let n = h_values.len() as f64;
    let target = 1.0 / (gamma * n);
    let finite: Vec<f64> = h_values.iter().copied().filter(|v| v.is_finite()).collect();
    let distinct = finite.first().is_some_and(|f| finite.iter().any(|v| v != f));
    if !distinct {
        return tau_floor;
    }
    let inv_old = inverse_temperature(tau_old);
    let delta_max = inverse_temperature(tau_floor) - inv_old;
    if !(delta_max > 0.0) {
        return tau_floor;
    }
    let excess = |d: f64| weight_square_sum(h_values, d) - target;
    if excess(delta_max) <= 0.0 {
        return tau_floor;
    }
    let (mut lo, mut hi) = (0.0f64, delta_max);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = excess(mid);
        if f == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECTION_REL_TOL * hi {
            break;
        }
    }
    let delta = 0.5 * (lo + hi);
    let tau = 1.0 / (inv_old + delta);
    if tau < tau_floor {
        tau_floor
    } else {
        tau
    }
}

/// `sum_j w_j (z_j - m)(z_j - m)^T` around the weighted mean `m`,
/// symmetrized, with a `1e-10 I` ridge when the smallest eigenvalue falls
/// below `1e-10`.
pub fn weighted_covariance(samples: &[Vec<f64>], weights: &[f64]) -> DMatrix<f64> {
    assert_eq!(samples.len(), weights.len(), "one weight per sample");
    let d = samples.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for (z, w) in samples.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        for (m, v) in mean.iter_mut().zip(z) {
            *m += w * v;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (z, w) in samples.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = z[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += w * da * (z[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let min_eig = cov.clone().symmetric_eigenvalues().min();
    if !(min_eig >= COVARIANCE_RIDGE) {
        for a in 0..d {
            cov[(a, a)] += COVARIANCE_RIDGE;
        }
    }
    cov
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// COV of the finite `H` values shifted by `1 - running_min`, so the
/// shifted sample is bounded below by one.
pub fn shifted_cov(h_values: &[f64], running_min: f64) -> f64 {
    let shifted: Vec<f64> = h_values
        .iter()
        .filter(|v| v.is_finite())
        .map(|v| v - running_min + 1.0)
        .collect();
    if shifted.is_empty() {
        return f64::INFINITY;
    }
    coefficient_of_variation(&shifted)
}
