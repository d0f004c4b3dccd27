//! One annealing level's Markov kernel: a random-walk local step around an
//! importance-weighted marker, an independence-type global correction
//! against the marker mixture `p_hat`, and a delayed-rejection retry from
//! the current state after a global rejection.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::weights::log_sum_exp;
use super::Objective;
use crate::error::{Error, Result};

/// Reject probabilities below this are treated as zero in the delayed stage.
const MIN_REJECT_PROB: f64 = 1e-300;

/// Multivariate Gaussian `N(center, cov)` with a cached lower Cholesky factor.
#[derive(Clone, Debug)]
pub struct GaussianProposal {
    dim: usize,
    /// Row-major lower factor.
    lower: Vec<f64>,
    log_norm: f64,
}

impl GaussianProposal {
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || cov.ncols() != dim {
            return Err(Error::InvalidArgument("proposal covariance must be square".into()));
        }
        let mut ridge = 0.0;
        let scale = cov.diagonal().abs().max().max(1e-300);
        for _ in 0..8 {
            let m = cov + DMatrix::identity(dim, dim) * ridge;
            if let Some(ch) = m.cholesky() {
                let l = ch.unpack();
                let log_det_half: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
                let lower = (0..dim)
                    .flat_map(|i| (0..dim).map(move |j| (i, j)))
                    .map(|(i, j)| l[(i, j)])
                    .collect();
                return Ok(Self {
                    dim,
                    lower,
                    log_norm: -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half,
                });
            }
            ridge = if ridge == 0.0 { 1e-12 * scale } else { ridge * 100.0 };
        }
        Err(Error::InvalidArgument(
            "proposal covariance is not positive definite".into(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Vec<f64> {
        let e: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
        (0..self.dim)
            .map(|i| center[i] + (0..=i).map(|j| self.lower[i * self.dim + j] * e[j]).sum::<f64>())
            .collect()
    }

    pub fn log_density(&self, x: &[f64], center: &[f64]) -> f64 {
        // forward substitution L u = x - center, at most a handful of coordinates
        let mut u = [0.0f64; 16];
        let mut heap;
        let u: &mut [f64] = if self.dim <= 16 {
            &mut u[..self.dim]
        } else {
            heap = vec![0.0; self.dim];
            &mut heap
        };
        let mut quad = 0.0;
        for i in 0..self.dim {
            let row = &self.lower[i * self.dim..i * self.dim + i + 1];
            let mut s = x[i] - center[i];
            for j in 0..i {
                s -= row[j] * u[j];
            }
            u[i] = s / row[i];
            quad += u[i] * u[i];
        }
        self.log_norm - 0.5 * quad
    }
}

/// `min{1, exp(-(H_candidate - H_current) / tau)}`.
pub fn local_accept_prob(h_candidate: f64, h_current: f64, tau: f64) -> f64 {
    if h_candidate == f64::INFINITY || h_candidate.is_nan() {
        return 0.0;
    }
    let log_ratio = -(h_candidate - h_current) / tau;
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

fn global_log_ratio(h_cand: f64, lp_cand: f64, h_curr: f64, lp_curr: f64, tau: f64) -> f64 {
    if h_cand == f64::INFINITY || lp_cand == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if lp_curr == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    (h_curr - h_cand) / tau + lp_curr - lp_cand
}

/// `min{1, p_k(cand) p_hat(curr) / (p_k(curr) p_hat(cand))}` from objective
/// values and marker-mixture log densities.
///
/// A candidate with `log p_hat = -inf` is rejected; a current state with
/// `log p_hat = -inf` accepts any admissible candidate.
pub fn global_accept_prob(h_cand: f64, lp_cand: f64, h_curr: f64, lp_curr: f64, tau: f64) -> f64 {
    let r = global_log_ratio(h_cand, lp_cand, h_curr, lp_curr, tau);
    if r >= 0.0 {
        1.0
    } else {
        r.exp()
    }
}

/// `1 - global_accept_prob`, without cancellation when acceptance is near one.
fn global_reject_prob(h_cand: f64, lp_cand: f64, h_curr: f64, lp_curr: f64, tau: f64) -> f64 {
    let r = global_log_ratio(h_cand, lp_cand, h_curr, lp_curr, tau);
    if r >= 0.0 {
        0.0
    } else {
        -r.exp_m1()
    }
}

fn delayed_from_rejections(h0: f64, h2: f64, reject0: f64, reject2: f64, tau: f64) -> f64 {
    if reject0 < MIN_REJECT_PROB {
        log::warn!("delayed rejection: first-stage reject probability {reject0:e} underflows, rejecting");
        return 0.0;
    }
    if reject2 <= 0.0 || h2 == f64::INFINITY || h2.is_nan() {
        return 0.0;
    }
    let log_ratio = (h0 - h2) / tau + reject2.ln() - reject0.ln();
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Second-stage acceptance after a rejected global candidate `z1`:
/// `min{1, p_k(z2) (1 - a_g(z1|z2)) / (p_k(z0) (1 - a_g(z1|z0)))}`.
pub fn delayed_accept_prob(h0: f64, h2: f64, global_from_current: f64, global_from_second: f64, tau: f64) -> f64 {
    delayed_from_rejections(h0, h2, 1.0 - global_from_current, 1.0 - global_from_second, tau)
}

/// Position, objective value and marker-mixture log density of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub z: Vec<f64>,
    pub h: f64,
    pub log_phat: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub steps: u64,
    pub local_accepted: u64,
    pub global_accepted: u64,
    pub delayed_attempts: u64,
    pub delayed_accepted: u64,
}

impl StepCounts {
    pub fn merge(&mut self, other: &StepCounts) {
        self.steps += other.steps;
        self.local_accepted += other.local_accepted;
        self.global_accepted += other.global_accepted;
        self.delayed_attempts += other.delayed_attempts;
        self.delayed_accepted += other.delayed_accepted;
    }

    fn ratio(a: u64, b: u64) -> f64 {
        if b == 0 {
            0.0
        } else {
            a as f64 / b as f64
        }
    }

    /// Locally accepted over all steps.
    pub fn local_rate(&self) -> f64 {
        Self::ratio(self.local_accepted, self.steps)
    }

    /// Globally accepted over locally accepted.
    pub fn global_rate(&self) -> f64 {
        Self::ratio(self.global_accepted, self.local_accepted)
    }

    /// Accepted second-stage candidates over attempts.
    pub fn delayed_rate(&self) -> f64 {
        Self::ratio(self.delayed_accepted, self.delayed_attempts)
    }
}

#[derive(Clone, Debug)]
struct Marker {
    z: Vec<f64>,
    h: f64,
    log_weight: f64,
}

/// Frozen kernel for one level: markers with their weights, temperature and
/// the two Gaussian proposals (`c_k Sigma_k` local, `c_0 Sigma_k` delayed).
pub struct LevelKernel<'a, O: ?Sized> {
    objective: &'a O,
    tau: f64,
    markers: Vec<Marker>,
    picker: WeightedIndex<f64>,
    local: GaussianProposal,
    delayed: GaussianProposal,
}

impl<'a, O: Objective + ?Sized> LevelKernel<'a, O> {
    /// Markers with zero weight are dropped; they contribute nothing to
    /// either the local draw or `p_hat`.
    pub fn new(
        objective: &'a O,
        markers: &[Vec<f64>],
        h_values: &[f64],
        weights: &[f64],
        tau: f64,
        covariance: &DMatrix<f64>,
        spread: f64,
        initial_spread: f64,
    ) -> Result<Self> {
        if markers.len() != h_values.len() || markers.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "markers, values and weights differ in length".into(),
            ));
        }
        let active: Vec<Marker> = markers
            .iter()
            .zip(h_values)
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|((z, h), w)| Marker {
                z: z.clone(),
                h: *h,
                log_weight: w.ln(),
            })
            .collect();
        if active.is_empty() {
            return Err(Error::DegeneratePopulation);
        }
        let picker =
            WeightedIndex::new(active.iter().map(|m| m.log_weight.exp())).map_err(|_| Error::DegeneratePopulation)?;
        Ok(Self {
            objective,
            tau,
            markers: active,
            picker,
            local: GaussianProposal::new(&(covariance * spread))?,
            delayed: GaussianProposal::new(&(covariance * initial_spread))?,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `log sum_j w_j q_k(z | z_j) min{1, exp(-(H(z) - H_j) / tau)}`.
    pub fn log_proposal_density(&self, z: &[f64], h_z: f64) -> f64 {
        if h_z == f64::INFINITY || h_z.is_nan() {
            return f64::NEG_INFINITY;
        }
        log_sum_exp(self.markers.iter().map(|m| {
            let log_local = ((m.h - h_z) / self.tau).min(0.0);
            m.log_weight + self.local.log_density(z, &m.z) + log_local
        }))
    }

    pub fn state_at(&self, z: Vec<f64>, h: f64) -> ChainState {
        let log_phat = self.log_proposal_density(&z, h);
        ChainState { z, h, log_phat }
    }

    pub fn evaluate(&self, z: Vec<f64>) -> ChainState {
        let h = self.objective.value(&z);
        self.state_at(z, h)
    }

    /// One transition of the chain. Local rejections leave the state as is.
    pub fn step<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R, counts: &mut StepCounts) {
        counts.steps += 1;
        let marker = &self.markers[self.picker.sample(rng)];
        let xi = self.local.sample(&marker.z, rng);
        let h_xi = self.objective.value(&xi);
        let a_local = local_accept_prob(h_xi, marker.h, self.tau);
        if !(rng.random::<f64>() < a_local) {
            return;
        }
        counts.local_accepted += 1;

        let lp_xi = self.log_proposal_density(&xi, h_xi);
        let a_global = global_accept_prob(h_xi, lp_xi, state.h, state.log_phat, self.tau);
        if rng.random::<f64>() < a_global {
            counts.global_accepted += 1;
            *state = ChainState {
                z: xi,
                h: h_xi,
                log_phat: lp_xi,
            };
            return;
        }

        counts.delayed_attempts += 1;
        let z2 = self.delayed.sample(&state.z, rng);
        let h2 = self.objective.value(&z2);
        if h2 == f64::INFINITY || h2.is_nan() {
            return;
        }
        let lp2 = self.log_proposal_density(&z2, h2);
        let reject0 = global_reject_prob(h_xi, lp_xi, state.h, state.log_phat, self.tau);
        let reject2 = global_reject_prob(h_xi, lp_xi, h2, lp2, self.tau);
        let a2 = delayed_from_rejections(state.h, h2, reject0, reject2, self.tau);
        if rng.random::<f64>() < a2 {
            counts.delayed_accepted += 1;
            *state = ChainState {
                z: z2,
                h: h2,
                log_phat: lp2,
            };
        }
    }
}
