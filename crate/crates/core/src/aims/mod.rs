//! Parallel AIMS-OPT: annealed importance sampling over a temperature ladder
//! chosen by effective sample size, with adaptive Gaussian proposals,
//! two-stage local/global acceptance, delayed rejection and TMCMC-style
//! multinomial chain allocation.
//!
//! The sampler works on any [`Objective`] defined over the unconstrained
//! coordinates `(log phi_1..log phi_p, z_delta)`; [`GpObjective`] is the
//! integrated negative log-posterior of a Gaussian process.

mod kernel;
mod level;
mod weights;

use std::fmt;
use std::str::FromStr;

pub use kernel::{
    delayed_accept_prob, global_accept_prob, local_accept_prob, ChainState, GaussianProposal, LevelKernel, StepCounts,
};
pub use level::{allocate_chains, initial_level, next_temperature, run_level, stream_rng, AnnealingLevel};
pub use weights::{
    coefficient_of_variation, importance_weights, inverse_temperature, log_sum_exp, shifted_cov, solve_temperature,
    weight_square_sum, weighted_covariance,
};

use crate::error::{Error, Result};
use crate::gp::{neg_log_posterior, HyperParams, TrainingSet};
use crate::prior::LogPrior;
use crate::transform::{from_coords, meta_prior_sample, META_PRIOR_HALF_WIDTH};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Objective `H(z)` on unconstrained coordinates; `+inf` marks points the
/// sampler must reject.
pub trait Objective: Sync {
    /// Number of coordinates, `p + 1`.
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;

    /// Level-0 draw. Defaults to uniform on the practical support
    /// `[-7, 7]^dim`.
    fn initial_sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let w = META_PRIOR_HALF_WIDTH;
        (0..self.dim()).map(|_| rng.random_range(-w..=w)).collect()
    }
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }
}

/// `H(from_unconstrained(z) | D)` for a training set and prior.
pub struct GpObjective<'a> {
    data: &'a TrainingSet,
    prior: &'a dyn LogPrior,
}

impl<'a> GpObjective<'a> {
    pub fn new(data: &'a TrainingSet, prior: &'a dyn LogPrior) -> Self {
        Self { data, prior }
    }
}

impl Objective for GpObjective<'_> {
    fn dim(&self) -> usize {
        self.data.p() + 1
    }

    fn value(&self, z: &[f64]) -> f64 {
        if z.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        neg_log_posterior(self.data, &from_coords(z), self.prior).unwrap_or(f64::INFINITY)
    }

    /// The hyper-parameter meta-prior: uniform log length-scales, Beta(1/2, 1/2)
    /// nugget.
    fn initial_sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        meta_prior_sample(rng, self.data.p()).into_inner()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Anneal towards zero temperature until the COV stopping rule fires.
    Optimize,
    /// Stop the ladder at temperature one.
    Sample,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Optimize => "optimize",
            Mode::Sample => "sample",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "optimize" => Ok(Mode::Optimize),
            "sample" => Ok(Mode::Sample),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Samples per level, `N`.
    pub sample_count: usize,
    /// Target effective fraction `gamma` of the importance weights.
    pub ess_gamma: f64,
    /// Spread decay `nu`: `c_k = c_0 nu^k`.
    pub spread_decay: f64,
    pub initial_spread: f64,
    /// Stop once `delta_k < stop_ratio * delta_0`.
    pub stop_ratio: f64,
    pub tau_floor: f64,
    pub mode: Mode,
    pub max_levels: usize,
    pub master_seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            sample_count: 2000,
            ess_gamma: 0.5,
            spread_decay: 0.5,
            initial_spread: 1.0,
            stop_ratio: 0.1,
            tau_floor: 1e-6,
            mode: Mode::Optimize,
            max_levels: 50,
            master_seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !open_unit(self.ess_gamma) {
            return bad(format!("ess_gamma {} not in (0, 1)", self.ess_gamma));
        }
        if !open_unit(self.spread_decay) {
            return bad(format!("spread_decay {} not in (0, 1)", self.spread_decay));
        }
        if !open_unit(self.stop_ratio) {
            return bad(format!("stop_ratio {} not in (0, 1)", self.stop_ratio));
        }
        if self.sample_count < 10 {
            return bad(format!("sample_count {} below 10", self.sample_count));
        }
        if !(self.initial_spread > 0.0 && self.initial_spread.is_finite()) {
            return bad(format!("initial_spread {} must be positive", self.initial_spread));
        }
        if !(self.tau_floor > 0.0 && self.tau_floor.is_finite()) {
            return bad(format!("tau_floor {} must be positive", self.tau_floor));
        }
        if self.mode == Mode::Sample && self.tau_floor > 1.0 {
            return bad("tau_floor above 1 in sample mode".into());
        }
        if self.max_levels == 0 {
            return bad("max_levels must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-level record, also the progress event handed to observers.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSummary {
    pub index: usize,
    pub tau: f64,
    pub cov_delta: f64,
    pub spread: f64,
    pub local_rate: f64,
    pub global_rate: f64,
    pub delayed_rate: f64,
    pub min_h: f64,
}

impl LevelSummary {
    fn of(level: &AnnealingLevel) -> Self {
        Self {
            index: level.index,
            tau: level.tau,
            cov_delta: level.cov_delta,
            spread: level.spread,
            local_rate: level.counts.local_rate(),
            global_rate: level.counts.global_rate(),
            delayed_rate: level.counts.delayed_rate(),
            min_h: level
                .h_values
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// `delta_k < stop_ratio * delta_0`.
    CovTarget,
    /// Reached temperature one in sampling mode.
    UnitTemperature,
    /// The temperature ladder hit `tau_floor`.
    TemperatureFloor,
    MaxLevels,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::CovTarget => "cov_target",
            StopReason::UnitTemperature => "unit_temperature",
            StopReason::TemperatureFloor => "temperature_floor",
            StopReason::MaxLevels => "max_levels",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SamplerResult {
    /// Level 0 first.
    pub levels: Vec<LevelSummary>,
    pub final_level: AnnealingLevel,
    pub stop_reason: StopReason,
}

impl SamplerResult {
    pub fn converged(&self) -> bool {
        matches!(self.stop_reason, StopReason::CovTarget | StopReason::UnitTemperature)
    }

    pub fn temperature_trace(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.tau).collect()
    }

    /// Number of annealing levels after the level-0 population.
    pub fn annealing_levels(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn final_h_values(&self) -> &[f64] {
        &self.final_level.h_values
    }

    pub fn final_samples(&self) -> Vec<HyperParams> {
        self.final_level.samples.iter().map(|z| from_coords(z)).collect()
    }

    /// Index of the smallest `H` in the final level, first occurrence on ties.
    pub fn map_index(&self) -> usize {
        let h = &self.final_level.h_values;
        let mut best = 0;
        for (i, v) in h.iter().enumerate() {
            if *v < h[best] {
                best = i;
            }
        }
        best
    }

    pub fn map_candidate(&self) -> (HyperParams, f64) {
        let i = self.map_index();
        (from_coords(&self.final_level.samples[i]), self.final_level.h_values[i])
    }
}

pub fn run<O: Objective + ?Sized>(objective: &O, cfg: &SamplerConfig) -> Result<SamplerResult> {
    run_with_observer(objective, cfg, &mut |_| {})
}

/// Runs the full ladder, reporting each finished level to `observer`.
pub fn run_with_observer<O: Objective + ?Sized>(
    objective: &O,
    cfg: &SamplerConfig,
    observer: &mut dyn FnMut(&LevelSummary),
) -> Result<SamplerResult> {
    cfg.validate()?;
    if objective.dim() < 2 {
        return Err(Error::InvalidArgument(
            "objective needs at least two coordinates".into(),
        ));
    }
    let mut level = initial_level(objective, cfg)?;
    let delta_0 = level.cov_delta;
    let mut levels = vec![LevelSummary::of(&level)];
    observer(&levels[0]);
    log::debug!("level 0: delta_0 = {delta_0:.4}");

    let stop_reason = loop {
        let next = run_level(&level, objective, cfg)?;
        let summary = LevelSummary::of(&next);
        log::debug!(
            "level {}: tau = {:.4e}, delta = {:.4}, rates {:.3}/{:.3}/{:.3}",
            summary.index,
            summary.tau,
            summary.cov_delta,
            summary.local_rate,
            summary.global_rate,
            summary.delayed_rate
        );
        observer(&summary);
        levels.push(summary);
        level = next;

        if cfg.mode == Mode::Optimize && level.cov_delta < cfg.stop_ratio * delta_0 {
            break StopReason::CovTarget;
        }
        if cfg.mode == Mode::Sample && level.tau <= 1.0 {
            break StopReason::UnitTemperature;
        }
        if level.tau <= cfg.tau_floor {
            break StopReason::TemperatureFloor;
        }
        if level.index >= cfg.max_levels {
            break StopReason::MaxLevels;
        }
    };
    Ok(SamplerResult {
        levels,
        final_level: level,
        stop_reason,
    })
}

/// Samples `phi` for a Gaussian process on `data` under `prior`.
pub fn fit(data: &TrainingSet, cfg: &SamplerConfig, prior: &dyn LogPrior) -> Result<SamplerResult> {
    run(&GpObjective::new(data, prior), cfg)
}
