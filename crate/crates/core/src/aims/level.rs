use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use super::kernel::{LevelKernel, StepCounts};
use super::weights::{importance_weights, shifted_cov, solve_temperature, weighted_covariance};
use super::{Mode, Objective, SamplerConfig};
use crate::error::{Error, Result};

/// Stream tag for the per-level multinomial chain allocation.
const ALLOCATION_STREAM: u64 = u64::MAX;

/// Random stream for `(seed, level, stream)`, independent of scheduling.
pub fn stream_rng(seed: u64, level: usize, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(level as u64).to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key[24..].copy_from_slice(b"aims-gp\0");
    ChaCha8Rng::from_seed(key)
}

/// One rung of the temperature ladder.
#[derive(Clone, Debug)]
pub struct AnnealingLevel {
    pub index: usize,
    pub tau: f64,
    /// Unconstrained coordinates of the `N` samples.
    pub samples: Vec<Vec<f64>>,
    pub h_values: Vec<f64>,
    /// Importance weights over the previous level's samples that built this
    /// level (uniform at level 0).
    pub norm_weights: Vec<f64>,
    pub proposal_cov: DMatrix<f64>,
    pub spread: f64,
    pub cov_delta: f64,
    /// Smallest finite objective value seen on this or any earlier level.
    pub running_min: f64,
    pub counts: StepCounts,
    /// Chain lengths `M_j` per previous-level marker.
    pub chain_lengths: Vec<usize>,
}

/// Level 0: `N` draws from the objective's initial distribution, treated as
/// the `tau = inf` limit.
pub fn initial_level<O: Objective + ?Sized>(objective: &O, cfg: &SamplerConfig) -> Result<AnnealingLevel> {
    let mut rng = stream_rng(cfg.master_seed, 0, 0);
    let samples: Vec<Vec<f64>> = (0..cfg.sample_count)
        .map(|_| objective.initial_sample(&mut rng))
        .collect();
    let h_values: Vec<f64> = samples.par_iter().map(|z| objective.value(z)).collect();
    let running_min = h_values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .min_by(f64::total_cmp)
        .ok_or(Error::DegeneratePopulation)?;
    let d = objective.dim();
    Ok(AnnealingLevel {
        index: 0,
        tau: f64::INFINITY,
        cov_delta: shifted_cov(&h_values, running_min),
        samples,
        h_values,
        norm_weights: vec![1.0 / cfg.sample_count as f64; cfg.sample_count],
        proposal_cov: DMatrix::identity(d, d),
        spread: cfg.initial_spread,
        running_min,
        counts: StepCounts::default(),
        chain_lengths: Vec::new(),
    })
}

/// Next temperature, clamped at one in sampling mode.
pub fn next_temperature(prev: &AnnealingLevel, cfg: &SamplerConfig) -> f64 {
    let tau = solve_temperature(&prev.h_values, prev.tau, cfg.ess_gamma, cfg.tau_floor);
    match cfg.mode {
        Mode::Optimize => tau,
        Mode::Sample => tau.max(1.0),
    }
}

/// Multinomial chain lengths `(M_1..M_N) ~ Mult(N; w)`.
pub fn allocate_chains(weights: &[f64], total: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let picker = WeightedIndex::new(weights).map_err(|_| Error::DegeneratePopulation)?;
    let mut counts = vec![0usize; weights.len()];
    for _ in 0..total {
        counts[picker.sample(rng)] += 1;
    }
    Ok(counts)
}

/// Builds level `k = prev.index + 1`: temperature, weights, adapted proposal,
/// multinomial chain allocation, then one chain per marker with `M_j > 0`,
/// each seeded at its own marker and run for `M_j` steps in parallel.
pub fn run_level<O: Objective + ?Sized>(
    prev: &AnnealingLevel,
    objective: &O,
    cfg: &SamplerConfig,
) -> Result<AnnealingLevel> {
    let k = prev.index + 1;
    let tau = next_temperature(prev, cfg);
    let weights = importance_weights(&prev.h_values, tau, prev.tau)?;
    let cov = weighted_covariance(&prev.samples, &weights);
    let spread = cfg.initial_spread * cfg.spread_decay.powi(k as i32);
    let kernel = LevelKernel::new(
        objective,
        &prev.samples,
        &prev.h_values,
        &weights,
        tau,
        &cov,
        spread,
        cfg.initial_spread,
    )?;

    let mut alloc_rng = stream_rng(cfg.master_seed, k, ALLOCATION_STREAM);
    let chain_lengths = allocate_chains(&weights, cfg.sample_count, &mut alloc_rng)?;
    let seeds: Vec<(usize, usize)> = chain_lengths
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0)
        .map(|(j, m)| (j, *m))
        .collect();

    let chains: Vec<(Vec<(Vec<f64>, f64)>, StepCounts)> = seeds
        .par_iter()
        .map(|&(j, len)| {
            let mut rng = stream_rng(cfg.master_seed, k, j as u64);
            let mut state = kernel.state_at(prev.samples[j].clone(), prev.h_values[j]);
            let mut counts = StepCounts::default();
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                kernel.step(&mut state, &mut rng, &mut counts);
                out.push((state.z.clone(), state.h));
            }
            (out, counts)
        })
        .collect();

    let mut samples = Vec::with_capacity(cfg.sample_count);
    let mut h_values = Vec::with_capacity(cfg.sample_count);
    let mut counts = StepCounts::default();
    for (chain, c) in chains {
        counts.merge(&c);
        for (z, h) in chain {
            samples.push(z);
            h_values.push(h);
        }
    }
    let level_min = h_values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let running_min = prev.running_min.min(level_min);
    Ok(AnnealingLevel {
        index: k,
        tau,
        cov_delta: shifted_cov(&h_values, running_min),
        samples,
        h_values,
        norm_weights: weights,
        proposal_cov: cov,
        spread,
        running_min,
        counts,
        chain_lengths,
    })
}
