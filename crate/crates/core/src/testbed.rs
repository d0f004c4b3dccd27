//! Built-in test functions and Latin hypercube designs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Branin function on the unit square, `x1 -> 15 x1 - 5`, `x2 -> 15 x2`,
/// with the extra `5 x1` term that leaves a single global minimum.
pub fn branin_modified(x: &[f64]) -> f64 {
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        log::warn!("branin evaluated outside the unit square at {x:?}");
    }
    let a = 15.0 * x[0] - 5.0;
    let b = 15.0 * x[1];
    let t = b - 5.1 / (4.0 * PI * PI) * a * a + 5.0 / PI * a - 6.0;
    t * t + 10.0 * ((1.0 - 1.0 / (8.0 * PI)) * a.cos() + 1.0) + 5.0 * a
}

/// Denominator of the 2-D test model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Denominator {
    /// `100 x^2 + 500 x^2 + 4 x + 20`.
    #[default]
    Verbatim,
    /// `100 x^3 + 500 x^2 + 4 x + 20`.
    Cubic,
}

impl Denominator {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Denominator::Verbatim => 100.0 * x * x + 500.0 * x * x + 4.0 * x + 20.0,
            Denominator::Cubic => 100.0 * x * x * x + 500.0 * x * x + 4.0 * x + 20.0,
        }
    }
}

impl fmt::Display for Denominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Denominator::Verbatim => "verbatim",
            Denominator::Cubic => "cubic",
        })
    }
}

impl FromStr for Denominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "verbatim" => Ok(Denominator::Verbatim),
            "cubic" => Ok(Denominator::Cubic),
            other => Err(Error::InvalidArgument(format!("unknown denominator '{other}'"))),
        }
    }
}

/// `[1 - exp(-0.5 / x2)] (2300 x1^3 + 1900 x1^2 + 2092 x1 + 60) / den(x1)`.
pub fn model_2d(x: &[f64], denominator: Denominator) -> Result<f64> {
    let (x1, x2) = (x[0], x[1]);
    if x2 == 0.0 {
        return Err(Error::Domain("model_2d requires x2 != 0".into()));
    }
    let den = denominator.eval(x1);
    if den == 0.0 {
        return Err(Error::Domain(format!("model_2d denominator vanishes at x1 = {x1}")));
    }
    let num = ((2300.0 * x1 + 1900.0) * x1 + 2092.0) * x1 + 60.0;
    Ok(-(-0.5 / x2).exp_m1() * num / den)
}

/// `5 + x + cos x + 0.5 sin 3x`.
pub fn toy_1d(x: f64) -> f64 {
    5.0 + x + x.cos() + 0.5 * (3.0 * x).sin()
}

/// `n x p` Latin hypercube in `[0, 1)^p`: each column has exactly one point
/// in every stratum `[j/n, (j+1)/n)`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, p);
    let width = 1.0 / n as f64;
    let mut strata: Vec<usize> = (0..n).collect();
    for c in 0..p {
        strata.shuffle(rng);
        for (r, &j) in strata.iter().enumerate() {
            let mut v = (j as f64 + rng.random::<f64>()) * width;
            // rounding can push v across a stratum boundary
            loop {
                let s = (v * n as f64).floor();
                if s > j as f64 || v >= 1.0 {
                    v = v.next_down();
                } else if s < j as f64 {
                    v = v.next_up();
                } else {
                    break;
                }
            }
            out[(r, c)] = v;
        }
    }
    out
}
