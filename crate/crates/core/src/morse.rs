//! Critical manifolds of the squared distance `|X - z|^2` on the spider
//! space, their Morse–Bott indices, and the resulting polynomials.
//!
//! Critical points come in three kinds: the body sits on `z`; one leg is
//! aligned and its line passes through `z`; two legs are aligned. The
//! remaining legs are free, so each critical set is a product of closures of
//! those legs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{self, ArmError, Betweenness, SignVector};
use crate::geom::Point;
use crate::mechanism::{strong_genericity_report, two_aligned_points, GenericityReport, SpiderMechanism};
use crate::poly::Poly;
use crate::polyspace::closure_descriptor;
use crate::workspace::FiberFactor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorseError {
    #[error("mechanism and target are not strongly generic: {0:?}")]
    GenericityViolation(Vec<crate::mechanism::ViolationCode>),
    #[error("critical manifold at ({}, {}) has a closure factor of unknown topology", .0.x, .0.y)]
    MissingBetti(Point),
    #[error(transparent)]
    Arm(#[from] ArmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    BodyAtTarget,
    OneAligned,
    TwoAligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedLeg {
    pub leg: usize,
    pub radius: f64,
    pub signs: SignVector,
}

/// Where an index came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexSource {
    /// Index formula for the smooth squared distance.
    Theorem,
    /// Read off from the one-sided smooth data next to a Voronoi wall.
    Inferred,
}

/// One critical manifold: a product of leg closures sitting over `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalComponent {
    pub case: Case,
    pub x: Point,
    pub aligned: Vec<AlignedLeg>,
    pub index: usize,
    pub index_source: IndexSource,
    /// Closures of the legs that are not aligned.
    pub manifold: Vec<FiberFactor>,
    pub dim: usize,
    pub poincare: Option<Poly>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betweenness: Option<Betweenness>,
    /// Quadrant signs of the target for the two aligned legs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<[i8; 2]>,
}

impl CriticalComponent {
    /// Number of connected pieces, `b_0` of the manifold.
    pub fn pieces(&self) -> Option<i64> {
        self.poincare.as_ref().map(|p| p.coeff(0))
    }

    /// Contribution `P_Sigma(t) t^index` to the Morse–Bott polynomial.
    pub fn contribution(&self) -> Option<Poly> {
        self.poincare.as_ref().map(|p| p.shift(self.index))
    }

    /// Sort and deduplication key.
    pub fn key(&self, grid: f64) -> ComponentKey {
        ComponentKey {
            case: self.case,
            legs: self.aligned.iter().map(|a| (a.leg, a.signs.clone())).collect(),
            cell: ((self.x.x / grid).round() as i64, (self.x.y / grid).round() as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentKey {
    pub case: Case,
    pub legs: Vec<(usize, SignVector)>,
    pub cell: (i64, i64),
}

/// Product of closures of every leg not in `aligned`.
pub(crate) fn manifold_at(mech: &SpiderMechanism, x: Point, aligned: &[usize]) -> (Vec<FiberFactor>, usize, Option<Poly>) {
    let factors: Vec<FiberFactor> = (0..mech.n_legs())
        .filter(|i| !aligned.contains(i))
        .map(|i| {
            let closing = x.dist(mech.foot(i));
            let rotation_circle = closing <= mech.eps();
            FiberFactor { leg: i, closing, rotation_circle, polygon: closure_descriptor(mech.leg(i), closing, mech.tol()) }
        })
        .collect();
    let dim = factors.iter().map(|f| mech.leg(f.leg).len() - 2).sum();
    let poincare = factors.iter().map(|f| f.poincare()).product::<Option<Poly>>();
    (factors, dim, poincare)
}

/// Quadrant of `z` at a two-aligned point `x` with feet `a_i`, `a_j`: the
/// signs of the coefficients of `x - z` in the basis of unit vectors along
/// `a_i -> x` and `a_j -> x`. Near `x` the radii `|X - a_i|`, `|X - a_j|` are
/// coordinates, and these are the signs of the partial derivatives of the
/// squared distance in them.
pub fn quadrant_signs(ai: Point, aj: Point, x: Point, z: Point) -> [i8; 2] {
    let ni = (x - ai).normalized();
    let nj = (x - aj).normalized();
    let w = x - z;
    let det = ni.cross(nj);
    let alpha = w.cross(nj) / det;
    let beta = ni.cross(w) / det;
    [if alpha > 0.0 { 1 } else { -1 }, if beta > 0.0 { 1 } else { -1 }]
}

/// Index contribution of one aligned leg at a two-aligned point, given its
/// quadrant sign: `Pos - 1` when the squared distance grows as the leg
/// extends, `p - Pos` otherwise.
pub fn two_aligned_leg_index(leg: &[f64], signs: &SignVector, sigma: i8, tol: f64) -> Result<usize, ArmError> {
    let m = arm::aligned_index(leg, signs, tol)?;
    Ok(if sigma > 0 { m } else { leg.len() - 1 - m })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Candidates outside the work space.
    pub outside: usize,
    /// Candidates within the tolerance band of a zone boundary, dropped.
    pub boundary: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSet {
    pub z: Point,
    pub components: Vec<CriticalComponent>,
    pub genericity: GenericityReport,
    /// All genericity clauses hold; the indices are backed by theory.
    pub certified: bool,
    pub diagnostics: Diagnostics,
}

impl CriticalSet {
    pub fn polynomial(&self) -> Result<Poly, MorseError> {
        morse_bott_polynomial(&self.components)
    }
}

/// Body-at-target component, if `z` lies in the work space.
pub(crate) fn body_at_target(mech: &SpiderMechanism, z: Point) -> Option<CriticalComponent> {
    if !mech.strictly_inside_zones(z, &[], 0.0) {
        return None;
    }
    let (manifold, dim, poincare) = manifold_at(mech, z, &[]);
    Some(CriticalComponent {
        case: Case::BodyAtTarget,
        x: z,
        aligned: Vec::new(),
        index: 0,
        index_source: IndexSource::Theorem,
        manifold,
        dim,
        poincare,
        betweenness: None,
        sigma: None,
    })
}

/// One-aligned critical points of leg `i` for the target `z`: the leg's
/// critical circles met by the line through its foot and `z`.
pub(crate) fn one_aligned(mech: &SpiderMechanism, i: usize, z: Point, diag: &mut Diagnostics) -> Result<Vec<CriticalComponent>, MorseError> {
    let eps = mech.eps();
    let a = mech.foot(i);
    let d = z.dist(a);
    if d <= eps {
        return Ok(Vec::new());
    }
    let u = (z - a) * (1.0 / d);
    let mut out = Vec::new();
    for c in mech.circles(i).iter().filter(|c| !c.degenerate) {
        for s in [1.0, -1.0] {
            let x = a + u * (s * c.radius);
            if !mech.strictly_inside_zones(x, &[i], eps) {
                if mech.strictly_inside_zones(x, &[i], -eps) {
                    diag.boundary += 1;
                } else {
                    diag.outside += 1;
                }
                continue;
            }
            if x.dist(z) <= eps {
                diag.boundary += 1;
                continue;
            }
            let between = arm::betweenness(a, x, z, eps)?;
            let (manifold, dim, poincare) = manifold_at(mech, x, &[i]);
            for sv in &c.sign_vectors {
                out.push(CriticalComponent {
                    case: Case::OneAligned,
                    x,
                    aligned: vec![AlignedLeg { leg: i, radius: c.radius, signs: sv.clone() }],
                    index: arm::one_leg_index(mech.leg(i), sv, between, mech.tol())?,
                    index_source: IndexSource::Theorem,
                    manifold: manifold.clone(),
                    dim,
                    poincare: poincare.clone(),
                    betweenness: Some(between),
                    sigma: None,
                });
            }
        }
    }
    Ok(out)
}

/// Two-aligned critical points (any circle intersection inside the work
/// space), with indices for the target `z`. `keep` filters by location.
pub(crate) fn two_aligned(
    mech: &SpiderMechanism,
    z: Point,
    keep: impl Fn(Point, (usize, usize)) -> bool,
    diag: &mut Diagnostics,
) -> Result<Vec<CriticalComponent>, MorseError> {
    let eps = mech.eps();
    let mut out = Vec::new();
    for t in two_aligned_points(mech) {
        let (i, j) = t.legs;
        let x = t.point;
        if !mech.strictly_inside_zones(x, &[i, j], eps) {
            if mech.strictly_inside_zones(x, &[i, j], -eps) {
                diag.boundary += 1;
            } else {
                diag.outside += 1;
            }
            continue;
        }
        if !keep(x, (i, j)) {
            continue;
        }
        let sig = quadrant_signs(mech.foot(i), mech.foot(j), x, z);
        let (manifold, dim, poincare) = manifold_at(mech, x, &[i, j]);
        for si in &t.circles.0.sign_vectors {
            for sj in &t.circles.1.sign_vectors {
                let index = two_aligned_leg_index(mech.leg(i), si, sig[0], mech.tol())? + two_aligned_leg_index(mech.leg(j), sj, sig[1], mech.tol())?;
                out.push(CriticalComponent {
                    case: Case::TwoAligned,
                    x,
                    aligned: vec![
                        AlignedLeg { leg: i, radius: t.circles.0.radius, signs: si.clone() },
                        AlignedLeg { leg: j, radius: t.circles.1.radius, signs: sj.clone() },
                    ],
                    index,
                    index_source: IndexSource::Theorem,
                    manifold: manifold.clone(),
                    dim,
                    poincare: poincare.clone(),
                    betweenness: None,
                    sigma: Some(sig),
                });
            }
        }
    }
    Ok(out)
}

pub(crate) fn sort_components(mech: &SpiderMechanism, v: &mut [CriticalComponent]) {
    let grid = mech.eps().max(f64::MIN_POSITIVE);
    v.sort_by(|a, b| a.key(grid).cmp(&b.key(grid)).then(a.index.cmp(&b.index)));
}

/// Enumerate the critical manifolds of `|X - z|^2`. In certified mode any
/// genericity violation is an error; otherwise the set is flagged.
pub fn enumerate_critical(mech: &SpiderMechanism, z: Point, certified: bool) -> Result<CriticalSet, MorseError> {
    let genericity = strong_genericity_report(mech, Some(z));
    if certified && !genericity.is_certified() {
        return Err(MorseError::GenericityViolation(genericity.codes()));
    }
    let mut diag = Diagnostics::default();
    let mut components: Vec<CriticalComponent> = body_at_target(mech, z).into_iter().collect();
    for i in 0..mech.n_legs() {
        components.extend(one_aligned(mech, i, z, &mut diag)?);
    }
    components.extend(two_aligned(mech, z, |_, _| true, &mut diag)?);
    sort_components(mech, &mut components);
    Ok(CriticalSet { z, certified: genericity.is_certified(), components, genericity, diagnostics: diag })
}

/// `sum P_Sigma(t) t^index`.
pub fn morse_bott_polynomial(components: &[CriticalComponent]) -> Result<Poly, MorseError> {
    components.iter().map(|c| c.contribution().ok_or(MorseError::MissingBetti(c.x))).sum()
}

/// Euler characteristic of the spider space, `P(-1)`.
pub fn euler_from_morse(poly: &Poly) -> i64 {
    poly.at_minus_one()
}

/// Indices for `-|X - z|^2`: `dim S - dim Sigma - index`.
pub fn dualize(components: &[CriticalComponent], dim_s: usize) -> Vec<CriticalComponent> {
    components.iter().map(|c| CriticalComponent { index: dim_s - c.dim - c.index, ..c.clone() }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettiBounds {
    /// Coefficientwise minimum of the Morse–Bott polynomials, degrees
    /// `0..=dim S`.
    pub bounds: Vec<i64>,
    /// Whether some target gave a polynomial equal to the reference Betti
    /// numbers (a perfect function). `None` without reference data.
    pub perfect: Option<bool>,
}

/// Upper bounds for the Betti numbers of the spider space from several
/// targets.
pub fn betti_bounds(mech: &SpiderMechanism, zs: &[Point], reference: Option<&[i64]>) -> Result<BettiBounds, MorseError> {
    let len = mech.dim() + 1;
    let mut bounds: Option<Vec<i64>> = None;
    let mut perfect = false;
    for &z in zs {
        let p = enumerate_critical(mech, z, false)?.polynomial()?.padded(len);
        if let Some(r) = reference {
            let mut r = r.to_vec();
            r.resize(len, 0);
            perfect |= p == r;
        }
        bounds = Some(match bounds {
            None => p,
            Some(b) => b.iter().zip(&p).map(|(x, y)| *x.min(y)).collect(),
        });
    }
    Ok(BettiBounds { bounds: bounds.unwrap_or_else(|| vec![0; len]), perfect: reference.map(|_| perfect) })
}
