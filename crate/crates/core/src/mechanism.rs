//! Spider mechanisms: feet, articulated legs, validation, random instances and
//! the strong-genericity audit.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{self, CriticalCircle, Zone};
use crate::geom::{circle_intersections, dist_to_line, Point};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_SEED: u64 = 0x5eed;

/// Above this many edges in one leg, exhaustive subset and sign enumeration
/// is refused.
pub const MAX_EDGES: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("a spider needs at least one leg")]
    NoLegs,
    #[error("{feet} feet but {legs} legs")]
    LegCountMismatch { feet: usize, legs: usize },
    #[error("feet {0} and {1} coincide")]
    DuplicateFeet(usize, usize),
    #[error("leg {leg} has {edges} edge(s); at least 2 are required")]
    LegTooShort { leg: usize, edges: usize },
    #[error("leg {leg} has {edges} edges; at most {MAX_EDGES} are supported")]
    LegTooLong { leg: usize, edges: usize },
    #[error("edge {edge} of leg {leg} has non-positive length {length}")]
    NonpositiveLength { leg: usize, edge: usize, length: f64 },
    #[error("non-finite coordinate or length")]
    NonFinite,
    #[error("tolerance must be positive and finite")]
    BadTolerance,
}

/// The JSON input document. Field names are part of the external interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismDocument {
    pub feet: Vec<[f64; 2]>,
    pub legs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MechanismDocument {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// A validated spider mechanism. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpiderMechanism {
    feet: Vec<Point>,
    legs: Vec<Vec<f64>>,
    tol: f64,
    seed: u64,
    #[serde(skip)]
    circles: Vec<Vec<CriticalCircle>>,
    #[serde(skip)]
    zones: Vec<Zone>,
}

impl SpiderMechanism {
    pub fn new(feet: Vec<Point>, legs: Vec<Vec<f64>>) -> Result<Self, MechanismError> {
        Self::with_policy(feet, legs, DEFAULT_TOL, DEFAULT_SEED)
    }

    pub fn with_policy(feet: Vec<Point>, legs: Vec<Vec<f64>>, tol: f64, seed: u64) -> Result<Self, MechanismError> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(MechanismError::BadTolerance);
        }
        if legs.is_empty() || feet.is_empty() {
            return Err(MechanismError::NoLegs);
        }
        if feet.len() != legs.len() {
            return Err(MechanismError::LegCountMismatch { feet: feet.len(), legs: legs.len() });
        }
        if feet.iter().any(|f| !f.is_finite()) || legs.iter().flatten().any(|l| !l.is_finite()) {
            return Err(MechanismError::NonFinite);
        }
        for (i, leg) in legs.iter().enumerate() {
            if leg.len() < 2 {
                return Err(MechanismError::LegTooShort { leg: i, edges: leg.len() });
            }
            if leg.len() > MAX_EDGES {
                return Err(MechanismError::LegTooLong { leg: i, edges: leg.len() });
            }
            if let Some((j, &l)) = leg.iter().enumerate().find(|(_, &l)| l <= 0.0) {
                return Err(MechanismError::NonpositiveLength { leg: i, edge: j, length: l });
            }
        }
        let scale = scale_of(&feet, &legs);
        for i in 0..feet.len() {
            for j in i + 1..feet.len() {
                if feet[i].dist(feet[j]) <= tol * scale {
                    return Err(MechanismError::DuplicateFeet(i, j));
                }
            }
        }
        let circles = legs
            .iter()
            .enumerate()
            .map(|(i, leg)| {
                arm::critical_radii(leg, tol)
                    .into_iter()
                    .map(|mut c| {
                        c.foot = i;
                        c
                    })
                    .collect()
            })
            .collect();
        let zones = legs.iter().enumerate().map(|(i, leg)| Zone { foot: i, ..arm::zone(leg) }).collect();
        Ok(SpiderMechanism { feet, legs, tol, seed, circles, zones })
    }

    /// Validate an input document.
    pub fn from_document(doc: &MechanismDocument) -> Result<Self, MechanismError> {
        let feet = doc.feet.iter().map(|&p| Point::from(p)).collect();
        Self::with_policy(feet, doc.legs.clone(), doc.tol.unwrap_or(DEFAULT_TOL), doc.seed.unwrap_or(DEFAULT_SEED))
    }

    pub fn to_document(&self) -> MechanismDocument {
        MechanismDocument {
            feet: self.feet.iter().map(|&p| p.into()).collect(),
            legs: self.legs.clone(),
            z: None,
            weights: None,
            tol: Some(self.tol),
            seed: Some(self.seed),
        }
    }

    pub fn feet(&self) -> &[Point] {
        &self.feet
    }

    pub fn foot(&self, i: usize) -> Point {
        self.feet[i]
    }

    pub fn legs(&self) -> &[Vec<f64>] {
        &self.legs
    }

    pub fn leg(&self, i: usize) -> &[f64] {
        &self.legs[i]
    }

    pub fn n_legs(&self) -> usize {
        self.legs.len()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Dimension of the spider space, `2 - 2n + sum p_i`.
    pub fn dim(&self) -> usize {
        2 + self.legs.iter().map(|l| l.len()).sum::<usize>() - 2 * self.n_legs()
    }

    /// Length scale used to turn the relative tolerance into an absolute one:
    /// the diameter of the feet together with every leg's reach.
    pub fn scale(&self) -> f64 {
        scale_of(&self.feet, &self.legs)
    }

    /// Absolute tolerance for equality predicates.
    pub fn eps(&self) -> f64 {
        self.tol * self.scale()
    }

    pub fn circles(&self, leg: usize) -> &[CriticalCircle] {
        &self.circles[leg]
    }

    /// Non-degenerate critical circles of every leg.
    pub fn all_circles(&self) -> impl Iterator<Item = &CriticalCircle> {
        self.circles.iter().flatten().filter(|c| !c.degenerate)
    }

    pub fn zone(&self, leg: usize) -> &Zone {
        &self.zones[leg]
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    /// Whether `x` lies in the work space, with `slack` on every zone.
    pub fn in_workspace(&self, x: Point, slack: f64) -> bool {
        self.zones.iter().all(|z| z.contains_radius(x.dist(self.feet[z.foot]), slack))
    }

    /// Strict interior test against the zones of all legs not in `skip`.
    pub fn strictly_inside_zones(&self, x: Point, skip: &[usize], margin: f64) -> bool {
        self.zones.iter().filter(|z| !skip.contains(&z.foot)).all(|z| {
            let d = x.dist(self.feet[z.foot]);
            d > z.inner + margin && d < z.outer - margin
        })
    }

    /// Distance from `x` to the nearest critical circle of `leg`, and that circle.
    pub fn nearest_circle(&self, leg: usize, x: Point) -> Option<(f64, &CriticalCircle)> {
        let d = x.dist(self.feet[leg]);
        self.circles[leg].iter().map(|c| ((d - c.radius).abs(), c)).min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Uniformly random feet in `[lo, hi]^2`, leg lengths log-uniform in
    /// `lengths`, with `edges` edges per leg.
    pub fn random<R: Rng>(rng: &mut R, edges: &[usize], boxed: (f64, f64), lengths: (f64, f64)) -> Self {
        let (lo, hi) = boxed;
        let (lmin, lmax) = (lengths.0.ln(), lengths.1.ln());
        let feet = edges.iter().map(|_| Point::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi))).collect();
        let legs = edges.iter().map(|&p| (0..p).map(|_| rng.gen_range(lmin..lmax).exp()).collect()).collect();
        Self::new(feet, legs).expect("random instance is valid with probability one")
    }
}

fn scale_of(feet: &[Point], legs: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for a in feet {
        for b in feet {
            d = d.max(a.dist(*b));
        }
    }
    let reach = legs.iter().map(|l| l.iter().sum::<f64>()).fold(0.0, f64::max);
    d.max(reach).max(f64::MIN_POSITIVE)
}

/// Strong-genericity clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationCode {
    /// A leg can close exactly and its foot lies in the work space.
    #[serde(rename = "0")]
    ZeroRadius,
    /// Three critical circles of different legs meet inside the work space.
    #[serde(rename = "1a")]
    TripleConcurrency,
    /// Two aligned legs on one line (tangent critical circles).
    #[serde(rename = "1b")]
    ParallelAligned,
    /// `z` on the line of an aligned leg at a two-aligned point.
    #[serde(rename = "2")]
    TargetOnAlignedLine,
    /// `z` equals a foot.
    #[serde(rename = "3")]
    TargetAtFoot,
    /// `z` on a critical circle.
    #[serde(rename = "4")]
    TargetOnCircle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub severity: Severity,
    /// Geometric witness: the offending point.
    pub witness: Point,
    /// Legs involved.
    pub legs: Vec<usize>,
    /// Size of the near-coincidence, in length units.
    pub gap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenericityReport {
    pub violations: Vec<Violation>,
}

impl GenericityReport {
    pub fn is_certified(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.violations.iter().any(|v| v.severity == Severity::Error)
    }

    pub fn codes(&self) -> Vec<ViolationCode> {
        let mut c: Vec<_> = self.violations.iter().map(|v| v.code).collect();
        c.sort();
        c.dedup();
        c
    }

    fn push(&mut self, code: ViolationCode, gap: f64, band: f64, witness: Point, legs: Vec<usize>) {
        let severity = if gap <= band {
            Severity::Error
        } else if gap <= 10.0 * band {
            Severity::Warning
        } else {
            return;
        };
        self.violations.push(Violation { code, severity, witness, legs, gap });
    }
}

/// A point where two legs are aligned simultaneously.
#[derive(Debug, Clone)]
pub(crate) struct TwoAligned<'a> {
    pub legs: (usize, usize),
    pub circles: (&'a CriticalCircle, &'a CriticalCircle),
    pub point: Point,
}

/// All pairwise intersections of non-degenerate critical circles of distinct
/// legs, regardless of work-space membership.
pub(crate) fn two_aligned_points(mech: &SpiderMechanism) -> Vec<TwoAligned<'_>> {
    let eps = mech.eps();
    let mut out = Vec::new();
    for i in 0..mech.n_legs() {
        for j in i + 1..mech.n_legs() {
            for ci in mech.circles(i).iter().filter(|c| !c.degenerate) {
                for cj in mech.circles(j).iter().filter(|c| !c.degenerate) {
                    for x in circle_intersections(mech.foot(i), ci.radius, mech.foot(j), cj.radius, eps) {
                        out.push(TwoAligned { legs: (i, j), circles: (ci, cj), point: x });
                    }
                }
            }
        }
    }
    out
}

/// Audit the pair (mechanism, target point) against every strong-genericity
/// clause; `z = None` audits only the smoothness clauses. Violations within
/// the tolerance band are errors, within ten bands warnings.
pub fn strong_genericity_report(mech: &SpiderMechanism, z: Option<Point>) -> GenericityReport {
    let band = mech.eps();
    let near = 10.0 * band;
    let mut report = GenericityReport::default();
    let n = mech.n_legs();

    for i in 0..n {
        if mech.circles(i).iter().any(|c| c.degenerate) && mech.in_workspace(mech.foot(i), near) {
            report.push(ViolationCode::ZeroRadius, 0.0, band, mech.foot(i), vec![i]);
        }
    }

    // 1b: tangency of circle pairs, witnessed at the touching point.
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (mech.foot(i), mech.foot(j));
            let d = a.dist(b);
            let u = (b - a) * (1.0 / d);
            for ci in mech.circles(i).iter().filter(|c| !c.degenerate) {
                for cj in mech.circles(j).iter().filter(|c| !c.degenerate) {
                    let outer = (d - (ci.radius + cj.radius)).abs();
                    let inner = (d - (ci.radius - cj.radius).abs()).abs();
                    let (gap, w) = if outer <= inner {
                        (outer, a + u * ci.radius)
                    } else if ci.radius >= cj.radius {
                        (inner, a + u * ci.radius)
                    } else {
                        (inner, a - u * ci.radius)
                    };
                    if gap <= near && mech.in_workspace(w, near) {
                        report.push(ViolationCode::ParallelAligned, gap, band, w, vec![i, j]);
                    }
                }
            }
        }
    }

    let pairs = two_aligned_points(mech);
    for t in &pairs {
        if !mech.in_workspace(t.point, near) {
            continue;
        }
        // 1a: a third leg aligned at the same point
        for k in (0..n).filter(|&k| k != t.legs.0 && k != t.legs.1) {
            if let Some((gap, _)) = mech.nearest_circle(k, t.point) {
                if gap <= near && (t.legs.0 < k && t.legs.1 < k || k > t.legs.1) {
                    report.push(ViolationCode::TripleConcurrency, gap, band, t.point, vec![t.legs.0, t.legs.1, k]);
                }
            }
        }
        // 2: z on either aligned line
        if let Some(z) = z {
            for leg in [t.legs.0, t.legs.1] {
                let gap = dist_to_line(z, mech.foot(leg), t.point);
                report.push(ViolationCode::TargetOnAlignedLine, gap, band, t.point, vec![leg]);
            }
        }
    }

    if let Some(z) = z {
        for i in 0..n {
            let d = z.dist(mech.foot(i));
            report.push(ViolationCode::TargetAtFoot, d, band, mech.foot(i), vec![i]);
            for c in mech.circles(i).iter().filter(|c| !c.degenerate) {
                report.push(ViolationCode::TargetOnCircle, (d - c.radius).abs(), band, z, vec![i]);
            }
        }
    }
    report.violations.sort_by(|a, b| a.code.cmp(&b.code).then(a.legs.cmp(&b.legs)).then(a.severity.cmp(&b.severity)));
    report
}
