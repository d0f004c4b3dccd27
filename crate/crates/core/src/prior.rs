//! Log-prior densities `log p(phi)` over the correlation hyper-parameters.
//!
//! Every built-in prior restricts the nugget to its uniform support
//! `[l_b, 1]`. Custom priors plug in through [`LogPrior`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::gp::{HyperParams, NUGGET_LOWER, NUGGET_UPPER};

/// `log p(phi)`, possibly `-inf` outside the support; never `+inf` or NaN.
pub trait LogPrior: Send + Sync {
    fn log_density(&self, phi: &HyperParams) -> f64;
}

fn nugget_in_support(phi: &HyperParams) -> bool {
    (NUGGET_LOWER..=NUGGET_UPPER).contains(&phi.nugget())
}

/// Flat on the length-scales, uniform on the nugget.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatPrior;

impl LogPrior for FlatPrior {
    fn log_density(&self, phi: &HyperParams) -> f64 {
        if nugget_in_support(phi) && phi.lengths().iter().all(|l| *l > 0.0 && l.is_finite()) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Independent log-normal length-scales, `log phi_i ~ N(mu, sigma^2)`.
#[derive(Clone, Copy, Debug)]
pub struct LogNormalPrior {
    pub mu: f64,
    pub sigma: f64,
}

impl LogPrior for LogNormalPrior {
    fn log_density(&self, phi: &HyperParams) -> f64 {
        if !nugget_in_support(phi) {
            return f64::NEG_INFINITY;
        }
        let norm = -self.sigma.ln() - 0.5 * (2.0 * PI).ln();
        phi.lengths()
            .iter()
            .map(|l| {
                let z = (l.ln() - self.mu) / self.sigma;
                norm - l.ln() - 0.5 * z * z
            })
            .sum()
    }
}

/// Named prior choice, as selected from configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriorSpec {
    Flat,
    LogNormal { mu: f64, sigma: f64 },
}

impl PriorSpec {
    pub fn build(self) -> Box<dyn LogPrior> {
        match self {
            PriorSpec::Flat => Box::new(FlatPrior),
            PriorSpec::LogNormal { mu, sigma } => Box::new(LogNormalPrior { mu, sigma }),
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Flat => write!(f, "flat"),
            PriorSpec::LogNormal { mu, sigma } => write!(f, "lognormal:{mu},{sigma}"),
        }
    }
}

/// Accepts `flat`, `lognormal:mu,sigma` and `lognormal(mu,sigma)`.
impl FromStr for PriorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "flat" {
            return Ok(PriorSpec::Flat);
        }
        let args = s
            .strip_prefix("lognormal:")
            .or_else(|| s.strip_prefix("lognormal(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown prior '{s}'")))?;
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("prior '{s}' needs two numbers mu,sigma"));
        if parts.len() != 2 {
            return Err(bad());
        }
        let mu: f64 = parts[0].parse().map_err(|_| bad())?;
        let sigma: f64 = parts[1].parse().map_err(|_| bad())?;
        if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(bad());
        }
        Ok(PriorSpec::LogNormal { mu, sigma })
    }
}
