//! Mixture-of-emulators predictive distribution built from sampled
//! hyper-parameters, plus standardized residuals and RMSE.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::aims::{importance_weights, SamplerResult};
use crate::error::{Error, Result};
use crate::gp::{GpFactorization, HyperParams, TrainingSet};

/// How the final-level samples are weighted in the mixture.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Weighting {
    /// `1/N` per sample, duplicates kept with their multiplicity.
    #[default]
    Uniform,
    /// Reweighted from the final temperature to the posterior at `tau = 1`.
    Importance,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Uniform => "uniform",
            Weighting::Importance => "importance",
        })
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(Weighting::Uniform),
            "importance" => Ok(Weighting::Importance),
            other => Err(Error::InvalidArgument(format!("unknown weighting '{other}'"))),
        }
    }
}

/// `(h - 1/tau) `-style reweighting of samples at `tau_final` towards
/// `tau = 1`, `w_j ∝ exp(-H_j (1 - 1/tau_final))`.
pub fn posterior_weights(h_values: &[f64], tau_final: f64) -> Result<Vec<f64>> {
    if tau_final >= 1.0 {
        // p_1 / p_tau with tau >= 1 is an ordinary downward step.
        return importance_weights(h_values, 1.0, tau_final);
    }
    // Upward step: flip signs so the same routine handles the exponent.
    let flipped: Vec<f64> = h_values
        .iter()
        .map(|v| if v.is_finite() { -v } else { f64::INFINITY })
        .collect();
    importance_weights(&flipped, tau_final, 1.0)
}

#[derive(Clone, Debug)]
pub struct MixtureEmulator {
    data: TrainingSet,
    weights: Vec<f64>,
    components: Vec<GpFactorization>,
    include_nugget: bool,
}

impl MixtureEmulator {
    /// Weights are normalized to sum to one.
    pub fn new(data: TrainingSet, components: Vec<(f64, HyperParams)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if components.iter().any(|(w, _)| !(*w >= 0.0 && w.is_finite())) || !(total > 0.0) {
            return Err(Error::InvalidArgument(
                "mixture weights must be non-negative with positive sum".into(),
            ));
        }
        let factors: Vec<GpFactorization> = components
            .par_iter()
            .map(|(_, phi)| GpFactorization::new(&data, phi))
            .collect::<Result<_>>()?;
        Ok(Self {
            weights: components.iter().map(|(w, _)| w / total).collect(),
            components: factors,
            data,
            include_nugget: true,
        })
    }

    /// Single emulator at `phi`.
    pub fn single(data: TrainingSet, phi: HyperParams) -> Result<Self> {
        Self::new(data, vec![(1.0, phi)])
    }

    /// All final-level samples of a sampler run.
    pub fn from_result(data: TrainingSet, result: &SamplerResult, weighting: Weighting) -> Result<Self> {
        let phis = result.final_samples();
        let weights = match weighting {
            Weighting::Uniform => vec![1.0; phis.len()],
            Weighting::Importance => posterior_weights(result.final_h_values(), result.final_level.tau)?,
        };
        Self::new(data, weights.into_iter().zip(phis).collect())
    }

    /// Whether component variances carry the `sigma2_hat * phi_delta` term
    /// at coincident points (default on).
    pub fn with_nugget_in_variance(mut self, include: bool) -> Self {
        self.include_nugget = include;
        self
    }

    pub fn data(&self) -> &TrainingSet {
        &self.data
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GpFactorization] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `(mu_i(xs), mu_i(ws), cov_i(xs, ws))` for every component.
    pub fn component_moments(&self, xs: &[f64], ws: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        // canonical argument order so the result is exactly symmetric
        let swap = xs
            .iter()
            .zip(ws)
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            == Some(Ordering::Greater);
        let (a, b) = if swap { (ws, xs) } else { (xs, ws) };
        self.components
            .iter()
            .map(|c| {
                let (ma, mb, cov) = c.predictive_moments(&self.data, a, b, self.include_nugget)?;
                Ok(if swap { (mb, ma, cov) } else { (ma, mb, cov) })
            })
            .collect()
    }

    pub fn mean(&self, xs: &[f64]) -> Result<f64> {
        let mut m = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            m += w * c.predictive_mean(&self.data, xs)?;
        }
        Ok(m)
    }

    /// `sum_i w_i [(mu_i(x) - mu(x)) (mu_i(w) - mu(w)) + cov_i(x, w)]`.
    pub fn cov(&self, xs: &[f64], ws: &[f64]) -> Result<f64> {
        let moments = self.component_moments(xs, ws)?;
        let mu_x: f64 = self.weights.iter().zip(&moments).map(|(w, m)| w * m.0).sum();
        let mu_w: f64 = self.weights.iter().zip(&moments).map(|(w, m)| w * m.1).sum();
        let c: f64 = self
            .weights
            .iter()
            .zip(&moments)
            .map(|(w, m)| w * ((m.0 - mu_x) * (m.1 - mu_w) + m.2))
            .sum();
        Ok(if xs == ws { c.max(0.0) } else { c })
    }

    /// Mixture mean and variance at one point.
    pub fn predict(&self, xs: &[f64]) -> Result<(f64, f64)> {
        let moments = self.component_moments(xs, xs)?;
        let mu: f64 = self.weights.iter().zip(&moments).map(|(w, m)| w * m.0).sum();
        let var: f64 = self
            .weights
            .iter()
            .zip(&moments)
            .map(|(w, m)| w * ((m.0 - mu) * (m.0 - mu) + m.2))
            .sum();
        Ok((mu, var.max(0.0)))
    }
}

/// Hyper-parameters of the smallest-`H` final sample.
pub fn map_component(result: &SamplerResult) -> HyperParams {
    result.map_candidate().0
}

/// Standardized residuals `(y - mu) / sqrt(var)` on a test set.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    /// `None` where the predictive variance was zero.
    pub residuals: Vec<Option<f64>>,
    pub within_band: usize,
    pub computed: usize,
}

impl ResidualReport {
    pub const BAND: f64 = 1.96;

    pub fn from_moments(means: &[f64], variances: &[f64], actuals: &[f64]) -> Result<Self> {
        if means.len() != actuals.len() || variances.len() != actuals.len() {
            return Err(Error::InvalidArgument("prediction and actual lengths differ".into()));
        }
        let residuals: Vec<Option<f64>> = means
            .iter()
            .zip(variances)
            .zip(actuals)
            .map(|((m, v), y)| (*v > 0.0).then(|| (y - m) / v.sqrt()))
            .collect();
        let computed = residuals.iter().flatten().count();
        let within_band = residuals.iter().flatten().filter(|r| r.abs() <= Self::BAND).count();
        Ok(Self {
            residuals,
            within_band,
            computed,
        })
    }

    pub fn fraction_within(&self) -> f64 {
        if self.computed == 0 {
            0.0
        } else {
            self.within_band as f64 / self.computed as f64
        }
    }
}

pub fn standardized_residuals(
    emulator: &MixtureEmulator,
    test_inputs: &[Vec<f64>],
    test_outputs: &[f64],
) -> Result<ResidualReport> {
    let moments: Vec<(f64, f64)> = test_inputs.iter().map(|x| emulator.predict(x)).collect::<Result<_>>()?;
    let (means, vars): (Vec<f64>, Vec<f64>) = moments.into_iter().unzip();
    ResidualReport::from_moments(&means, &vars, test_outputs)
}

pub fn rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.len() != actuals.len() || predictions.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            predictions.len(),
            actuals.len()
        )));
    }
    let mse = predictions
        .iter()
        .zip(actuals)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse.sqrt())
}
