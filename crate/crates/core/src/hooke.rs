//! Weighted Hooke energy `H_w(x) = sum w_i |x - a_i|^2`, which is an affine
//! transform of the squared distance to the weighted centroid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;
use crate::mechanism::SpiderMechanism;
use crate::morse::{dualize, enumerate_critical, CriticalSet, MorseError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HookeError {
    #[error("total weight is zero: the energy is affine in x and has no Morse theory here")]
    ZeroTotalWeight,
    #[error("{weights} weights for {feet} feet")]
    WeightCountMismatch { weights: usize, feet: usize },
    #[error(transparent)]
    Morse(#[from] MorseError),
}

/// `H_w(x) = scale * |x - centroid|^2 + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HookeReduction {
    pub centroid: Point,
    pub scale: f64,
    pub offset: f64,
}

impl HookeReduction {
    pub fn energy(feet: &[Point], weights: &[f64], x: Point) -> f64 {
        feet.iter().zip(weights).map(|(&a, &w)| w * (x - a).norm2()).sum()
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.scale * (x - self.centroid).norm2() + self.offset
    }
}

/// `tol` is relative to the total absolute weight.
pub fn reduce(feet: &[Point], weights: &[f64], tol: f64) -> Result<HookeReduction, HookeError> {
    if feet.len() != weights.len() {
        return Err(HookeError::WeightCountMismatch { weights: weights.len(), feet: feet.len() });
    }
    let s: f64 = weights.iter().sum();
    let mass: f64 = weights.iter().map(|w| w.abs()).sum();
    if s.abs() <= tol * mass.max(f64::MIN_POSITIVE) {
        return Err(HookeError::ZeroTotalWeight);
    }
    let m = feet.iter().zip(weights).fold(Point::ORIGIN, |acc, (&a, &w)| acc + a * w);
    let centroid = m * (1.0 / s);
    let second: f64 = feet.iter().zip(weights).map(|(&a, &w)| w * a.norm2()).sum();
    Ok(HookeReduction { centroid, scale: s, offset: second - s * centroid.norm2() })
}

/// Critical manifolds of `H_w`: those of the squared distance to the
/// centroid, with indices dualized when the total weight is negative.
pub fn hooke_critical(mech: &SpiderMechanism, weights: &[f64], certified: bool) -> Result<CriticalSet, HookeError> {
    let red = reduce(mech.feet(), weights, mech.tol())?;
    let mut set = enumerate_critical(mech, red.centroid, certified)?;
    if red.scale < 0.0 {
        set.components = dualize(&set.components, mech.dim());
    }
    Ok(set)
}
