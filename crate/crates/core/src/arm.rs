//! Single-leg (robot arm) analysis.
//!
//! A leg with edge lengths `l_1..l_p` can lie on a line through its foot in
//! `2^p` sign patterns. The distance from foot to tip in such an aligned
//! configuration is `|sum eps_j l_j|`, which gives the critical circles of the
//! work map. Sign vectors are always stored relative to the direction from the
//! foot to the tip, so that their signed sum is non-negative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArmError {
    #[error("aligned configuration has zero radius; the direction foot->tip is undefined")]
    DegenerateAlignment,
    #[error("sign vector has {got} entries but the leg has {expected} edges")]
    LengthMismatch { expected: usize, got: usize },
    #[error("genericity violation: {0}")]
    GenericityViolation(&'static str),
    #[error("points are not collinear (offset {0:e})")]
    NotCollinear(f64),
}

/// Edge directions of an aligned leg, `+1` along foot->tip and `-1` against.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Self {
        assert!(signs.iter().all(|&s| s == 1 || s == -1), "sign entries must be +1 or -1");
        SignVector(signs)
    }

    /// Decode the low `p` bits of `mask`; bit set means `+1`.
    pub fn from_mask(mask: u64, p: usize) -> Self {
        SignVector((0..p).map(|j| if mask >> j & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of positively directed edges.
    pub fn positives(&self) -> usize {
        self.0.iter().filter(|&&s| s > 0).count()
    }

    pub fn negated(&self) -> Self {
        SignVector(self.0.iter().map(|s| -s).collect())
    }

    pub fn signed_sum(&self, lengths: &[f64]) -> f64 {
        self.0.iter().zip(lengths).map(|(&s, &l)| f64::from(s) * l).sum()
    }
}

/// A circle about a foot on which the leg can be aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalCircle {
    pub foot: usize,
    pub radius: f64,
    /// Every sign vector (normalized to a non-negative signed sum) whose
    /// aligned configuration reaches this radius.
    pub sign_vectors: Vec<SignVector>,
    pub degenerate: bool,
}

/// Reachable region of a free leg: `inner <= |x - a| <= outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub foot: usize,
    pub inner: f64,
    pub outer: f64,
}

impl Zone {
    pub fn is_disc(&self) -> bool {
        self.inner == 0.0
    }

    pub fn contains_radius(&self, d: f64, slack: f64) -> bool {
        d >= self.inner - slack && d <= self.outer + slack
    }
}

/// Distinct alignment radii of a leg, ascending, each with its realizing sign
/// vectors. Radii closer than `tol * sum(l)` are merged.
pub fn critical_radii(leg: &[f64], tol: f64) -> Vec<CriticalCircle> {
    let p = leg.len();
    assert!(p < 63, "leg too long for exhaustive sign enumeration");
    let total: f64 = leg.iter().sum();
    let eps = tol * total;
    let mut entries: Vec<(f64, SignVector)> = Vec::with_capacity(1 << p);
    for mask in 0..(1u64 << p) {
        let sv = SignVector::from_mask(mask, p);
        let s = sv.signed_sum(leg);
        if s > eps {
            entries.push((s, sv));
        } else if s.abs() <= eps {
            // zero radius: both orientations realize it
            entries.push((0.0, sv));
        }
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut out: Vec<CriticalCircle> = Vec::new();
    for (r, sv) in entries {
        match out.last_mut() {
            Some(c) if (r - c.radius).abs() <= eps => c.sign_vectors.push(sv),
            _ => out.push(CriticalCircle { foot: 0, radius: r, sign_vectors: vec![sv], degenerate: r == 0.0 }),
        }
    }
    out
}

/// Work space of a single free leg.
pub fn zone(leg: &[f64]) -> Zone {
    let total: f64 = leg.iter().sum();
    let longest = leg.iter().copied().fold(0.0, f64::max);
    Zone { foot: 0, inner: (2.0 * longest - total).max(0.0), outer: total }
}

/// Normalize `eps` against the direction foot->tip and count its positive edges.
fn oriented_positives(leg: &[f64], eps: &SignVector, tol: f64) -> Result<usize, ArmError> {
    if eps.len() != leg.len() {
        return Err(ArmError::LengthMismatch { expected: leg.len(), got: eps.len() });
    }
    let total: f64 = leg.iter().sum();
    let s = eps.signed_sum(leg);
    if s.abs() <= tol * total {
        return Err(ArmError::DegenerateAlignment);
    }
    Ok(if s > 0.0 { eps.positives() } else { eps.len() - eps.positives() })
}

/// Morse index of `|a - x|^2` at an aligned configuration of a free arm,
/// counted modulo rotation about the foot: `Pos - 1`.
pub fn aligned_index(leg: &[f64], eps: &SignVector, tol: f64) -> Result<usize, ArmError> {
    Ok(oriented_positives(leg, eps, tol)? - 1)
}

/// Which of foot `A`, tip `X` and target `Z` lies between the other two on
/// their common line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Betweenness {
    XBetween,
    ZBetween,
    ABetween,
}

/// Morse index of `|x - z|^2` on a one-leg spider at an aligned configuration
/// whose line passes through `z`.
pub fn one_leg_index(leg: &[f64], eps: &SignVector, between: Betweenness, tol: f64) -> Result<usize, ArmError> {
    let pos = oriented_positives(leg, eps, tol)?;
    Ok(match between {
        Betweenness::XBetween => leg.len() - pos,
        Betweenness::ZBetween => pos - 1,
        Betweenness::ABetween => pos,
    })
}

/// Classify three collinear points. `eps` is an absolute length tolerance.
pub fn betweenness(a: Point, x: Point, z: Point, eps: f64) -> Result<Betweenness, ArmError> {
    let ax = x - a;
    let d = ax.norm();
    if d <= eps {
        return Err(ArmError::GenericityViolation("tip coincides with foot"));
    }
    if z.dist(a) <= eps {
        return Err(ArmError::GenericityViolation("target coincides with foot"));
    }
    if z.dist(x) <= eps {
        return Err(ArmError::GenericityViolation("target coincides with tip"));
    }
    let u = ax * (1.0 / d);
    let off = u.cross(z - a).abs();
    if off > eps.max(1e-9 * d) {
        return Err(ArmError::NotCollinear(off));
    }
    let s = u.dot(z - a);
    Ok(if s < 0.0 {
        Betweenness::ABetween
    } else if s > d {
        Betweenness::XBetween
    } else {
        Betweenness::ZBetween
    })
}
