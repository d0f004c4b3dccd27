//! Map between constrained hyper-parameters and the unconstrained space the
//! sampler walks in: log length-scales plus a logit-type nugget coordinate
//! `phi_delta = (1 - l_b) / (1 + exp(-z_delta)) + l_b`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Uniform};

use crate::error::{Error, Result};
use crate::gp::{HyperParams, NUGGET_LOWER};

/// Half-width of the level-0 box for the log length-scales.
pub const META_PRIOR_HALF_WIDTH: f64 = 7.0;

/// Log length-scales are saturated here so `exp` stays finite and non-zero.
const LOG_LENGTH_LIMIT: f64 = 700.0;

/// `(z_1..z_p, z_delta)`: log length-scales followed by the pre-sigmoid
/// nugget coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct UnconstrainedVector(Vec<f64>);

impl UnconstrainedVector {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least one log length-scale and the nugget coordinate".into(),
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite coordinate in {z:?}")));
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn log_lengths(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn nugget_coord(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn nugget_from_coord(z: f64) -> f64 {
    ((1.0 - NUGGET_LOWER) * sigmoid(z) + NUGGET_LOWER).clamp(NUGGET_LOWER, 1.0)
}

/// Inverse of [`nugget_from_coord`]; the nugget must lie strictly inside
/// `(l_b, 1)`.
pub fn nugget_to_coord(nugget: f64) -> Result<f64> {
    if !(nugget > NUGGET_LOWER && nugget < 1.0) {
        return Err(Error::Boundary(nugget));
    }
    let u = (nugget - NUGGET_LOWER) / (1.0 - NUGGET_LOWER);
    Ok(u.ln() - (-u).ln_1p())
}

pub fn to_unconstrained(phi: &HyperParams) -> Result<UnconstrainedVector> {
    let mut z: Vec<f64> = phi.lengths().iter().map(|l| l.ln()).collect();
    z.push(nugget_to_coord(phi.nugget())?);
    UnconstrainedVector::new(z)
}

pub fn from_unconstrained(z: &UnconstrainedVector) -> HyperParams {
    from_coords(z.as_slice())
}

/// Same as [`from_unconstrained`] on a raw slice of finite coordinates.
pub(crate) fn from_coords(z: &[f64]) -> HyperParams {
    let (logs, last) = z.split_at(z.len() - 1);
    let lengths = logs
        .iter()
        .map(|v| v.clamp(-LOG_LENGTH_LIMIT, LOG_LENGTH_LIMIT).exp())
        .collect();
    HyperParams::new(lengths, nugget_from_coord(last[0]))
        .expect("transformed coordinates always satisfy the hyper-parameter invariants")
}

/// Level-0 draw: log length-scales uniform on `[-7, 7]`, nugget from a
/// Beta(1/2, 1/2) truncated to `[l_b, 1]` and mapped to its coordinate.
pub fn meta_prior_sample<R: Rng + ?Sized>(rng: &mut R, p: usize) -> UnconstrainedVector {
    assert!(p >= 1, "need at least one input dimension");
    let box_dist = Uniform::new_inclusive(-META_PRIOR_HALF_WIDTH, META_PRIOR_HALF_WIDTH).expect("finite bounds");
    let beta = Beta::new(0.5, 0.5).expect("valid shape parameters");
    let mut z: Vec<f64> = (0..p).map(|_| box_dist.sample(rng)).collect();
    // Truncation by rejection. Draws on the exact bounds are also redrawn so
    // the coordinate stays finite; both events have negligible mass.
    let coord = loop {
        let v: f64 = beta.sample(rng);
        if let Ok(c) = nugget_to_coord(v) {
            break c;
        }
    };
    z.push(coord);
    UnconstrainedVector(z)
}
