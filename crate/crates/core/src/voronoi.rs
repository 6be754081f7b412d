//! Voronoi distance `V(x) = min_i |x - s_i|^2` to a set of sites, its planar
//! critical points, and its lift to the spider space.
//!
//! On the spider space `V` is a min of smooth functions `f_i = |X - s_i|^2`.
//! At a configuration with active sites `J`, criticality means some convex
//! combination `c = sum l_j s_j` makes the configuration critical for the
//! smooth `|X - c|^2`; the index is `|J| - 1` plus the index of that squared
//! distance on the directions that keep the active values equal.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{self, ArmError, SignVector};
use crate::geom::{circumcenter, line_circle_params, Point};
use crate::mechanism::{strong_genericity_report, two_aligned_points, SpiderMechanism, ViolationCode};
use crate::morse::{self, manifold_at, AlignedLeg, Case, CriticalComponent, Diagnostics, IndexSource, MorseError};
use crate::poly::Poly;

pub const MAX_SITES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoronoiError {
    #[error("need at least {need} sites, got {got}")]
    TooFewSites { need: usize, got: usize },
    #[error("{0} sites; brute-force construction is capped at {MAX_SITES}")]
    TooManySites(usize),
    #[error("sites {0:?} lie on one empty circle")]
    FourCocircular([usize; 4]),
    #[error("cone rays are collinear")]
    DegenerateCone,
    #[error("not Voronoi generic: {clause:?} at ({}, {})", .witness.x, .witness.y)]
    NotVoronoiGeneric { clause: VoronoiClause, witness: Point },
    #[error("offsets cross a wall after {attempts} attempt(s): {reason}")]
    OffsetTooLarge { attempts: usize, reason: String },
    #[error("{0} non-isolated piece(s) remain after perturbation")]
    NonIsolatedRemaining(usize),
    #[error("{offsets} offsets for {sites} sites")]
    OffsetCountMismatch { offsets: usize, sites: usize },
    #[error(transparent)]
    Morse(#[from] MorseError),
    #[error(transparent)]
    Arm(#[from] ArmError),
}

/// Segment, ray or line of points equidistant from two sites and farther
/// from all others: `origin + t * dir` for `t` in `(t0, t1)`, where `origin`
/// is the midpoint of the sites and a missing bound is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiEdge {
    pub sites: (usize, usize),
    pub origin: Point,
    pub dir: Point,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
}

impl VoronoiEdge {
    pub fn at(&self, t: f64) -> Point {
        self.origin + self.dir * t
    }

    pub fn contains_param(&self, t: f64, margin: f64) -> bool {
        self.t0.is_none_or(|a| t > a + margin) && self.t1.is_none_or(|b| t < b - margin)
    }

    /// The Delaunay edge `[s_i, s_j]` crosses this Voronoi edge.
    pub fn crosses_dual(&self, margin: f64) -> bool {
        self.contains_param(0.0, margin)
    }
}

/// Empty-circumcircle triangle; its circumcenter is a Voronoi vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaunayTriangle {
    pub sites: [usize; 3],
    pub center: Point,
    pub radius: f64,
}

/// Power cell of one site: the intersection of the half-planes closer to it
/// than to each neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub site: usize,
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Location {
    Cell(usize),
    Edge(usize, usize),
    Vertex(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiStructure {
    pub sites: Vec<Point>,
    pub cells: Vec<PowerCell>,
    pub edges: Vec<VoronoiEdge>,
    pub triangles: Vec<DelaunayTriangle>,
    /// No four sites on an empty circle.
    pub vc_generic: bool,
    eps: f64,
}

/// Admissible parameter interval on the line `m + t d` for being closer to
/// `si` than to `sk`; `None` if empty.
fn clip(m: Point, d: Point, si: Point, sk: Point, t0: &mut f64, t1: &mut f64, eps: f64) -> bool {
    // |x - si|^2 < |x - sk|^2  <=>  2 x.(sk - si) < |sk|^2 - |si|^2
    let g = sk - si;
    let a = 2.0 * d.dot(g);
    let b = sk.norm2() - si.norm2() - 2.0 * m.dot(g);
    if a.abs() <= eps * g.norm() {
        return b > 0.0;
    }
    let t = b / a;
    if a > 0.0 {
        *t1 = t1.min(t);
    } else {
        *t0 = t0.max(t);
    }
    true
}

impl VoronoiStructure {
    /// Brute force over pairs and triples. `tol` is relative to the spread
    /// of the sites.
    pub fn new(sites: &[Point], tol: f64) -> Result<Self, VoronoiError> {
        let n = sites.len();
        if n == 0 {
            return Err(VoronoiError::TooFewSites { need: 1, got: 0 });
        }
        if n > MAX_SITES {
            return Err(VoronoiError::TooManySites(n));
        }
        let spread = sites.iter().flat_map(|a| sites.iter().map(move |b| a.dist(*b))).fold(0.0, f64::max);
        let eps = tol * spread.max(1.0);

        let mut triangles = Vec::new();
        let mut vc_generic = true;
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (sites[i], sites[j], sites[k]);
                    if (b - a).cross(c - a).abs() <= eps * spread {
                        continue;
                    }
                    let Some(center) = circumcenter(a, b, c) else { continue };
                    let radius = center.dist(a);
                    let others = (0..n).filter(|&l| l != i && l != j && l != k);
                    if others.clone().any(|l| sites[l].dist(center) < radius - eps) {
                        continue;
                    }
                    if others.clone().any(|l| (sites[l].dist(center) - radius).abs() <= eps) {
                        vc_generic = false;
                        continue;
                    }
                    triangles.push(DelaunayTriangle { sites: [i, j, k], center, radius });
                }
            }
        }

        let mut edges = Vec::new();
        let mut cells: Vec<PowerCell> = (0..n).map(|site| PowerCell { site, neighbors: Vec::new() }).collect();
        for i in 0..n {
            for j in i + 1..n {
                let (si, sj) = (sites[i], sites[j]);
                let m = (si + sj) * 0.5;
                let d = (sj - si).perp().normalized();
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let alive = (0..n).filter(|&k| k != i && k != j).all(|k| clip(m, d, si, sites[k], &mut t0, &mut t1, eps));
                if !alive || t1 - t0 <= eps {
                    continue;
                }
                let fin = |t: f64| t.is_finite().then_some(t);
                edges.push(VoronoiEdge { sites: (i, j), origin: m, dir: d, t0: fin(t0), t1: fin(t1) });
                cells[i].neighbors.push(j);
                cells[j].neighbors.push(i);
            }
        }
        Ok(VoronoiStructure { sites: sites.to_vec(), cells, edges, triangles, vc_generic, eps })
    }

    /// As `new`, but four sites on an empty circle are an error.
    pub fn generic(sites: &[Point], tol: f64) -> Result<Self, VoronoiError> {
        let s = Self::new(sites, tol)?;
        if !s.vc_generic {
            return Err(VoronoiError::FourCocircular(s.cocircular_quadruple().unwrap_or_default()));
        }
        Ok(s)
    }

    fn cocircular_quadruple(&self) -> Option<[usize; 4]> {
        let n = self.sites.len();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let Some(c) = circumcenter(self.sites[i], self.sites[j], self.sites[k]) else { continue };
                    let r = c.dist(self.sites[i]);
                    let others = (0..n).filter(|&l| l != i && l != j && l != k);
                    if others.clone().any(|l| self.sites[l].dist(c) < r - self.eps) {
                        continue;
                    }
                    if let Some(l) = others.clone().find(|&l| (self.sites[l].dist(c) - r).abs() <= self.eps) {
                        let mut q = [i, j, k, l];
                        q.sort_unstable();
                        return Some(q);
                    }
                }
            }
        }
        None
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Nearest site and the gap to the second nearest, in distance.
    pub fn nearest(&self, x: Point) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        let mut second = f64::INFINITY;
        for (i, s) in self.sites.iter().enumerate() {
            let d = x.dist(*s);
            if d < best.1 {
                second = best.1;
                best = (i, d);
            } else if d < second {
                second = d;
            }
        }
        (best.0, second - best.1)
    }

    /// Which stratum of the diagram `x` is in, `margin` being the distance
    /// gap below which sites count as tied.
    pub fn locate(&self, x: Point, margin: f64) -> Location {
        let mut d: Vec<(f64, usize)> = self.sites.iter().enumerate().map(|(i, s)| (x.dist(*s), i)).collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tied: Vec<usize> = d.iter().take_while(|(v, _)| *v - d[0].0 <= margin).map(|p| p.1).collect();
        match tied.len() {
            1 => Location::Cell(tied[0]),
            2 => Location::Edge(tied[0].min(tied[1]), tied[0].max(tied[1])),
            _ => {
                let t = self.triangles.iter().enumerate().min_by(|a, b| a.1.center.dist(x).total_cmp(&b.1.center.dist(x))).map_or(0, |t| t.0);
                Location::Vertex(t)
            }
        }
    }

    /// Distance-gap of `x` to the diagram: 0 on it.
    pub fn wall_gap(&self, x: Point) -> f64 {
        if self.sites.len() < 2 {
            return f64::INFINITY;
        }
        self.nearest(x).1
    }
}

/// A critical point of the planar Voronoi distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: Point,
    pub value: f64,
    /// Dimension of the dual Delaunay cell.
    pub index: usize,
    pub sites: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneCritical {
    pub minima: Vec<PlanePoint>,
    pub saddles: Vec<PlanePoint>,
    pub maxima: Vec<PlanePoint>,
    /// Voronoi vertices on an edge of their Delaunay triangle: saddle and
    /// maximum collide, so the point is not Morse.
    pub degenerate: Vec<Point>,
}

impl PlaneCritical {
    pub fn all(&self) -> impl Iterator<Item = &PlanePoint> {
        self.minima.iter().chain(&self.saddles).chain(&self.maxima)
    }

    /// `#minima - #saddles + #maxima`.
    pub fn euler(&self) -> i64 {
        self.minima.len() as i64 - self.saddles.len() as i64 + self.maxima.len() as i64
    }
}

fn plane_of(s: &VoronoiStructure) -> PlaneCritical {
    let eps = s.eps;
    let minima = s.sites.iter().enumerate().map(|(i, &x)| PlanePoint { x, value: 0.0, index: 0, sites: vec![i] }).collect();
    let mut saddles = Vec::new();
    let mut degenerate: Vec<Point> = Vec::new();
    for e in &s.edges {
        let (i, j) = e.sites;
        if e.crosses_dual(eps) {
            saddles.push(PlanePoint { x: e.origin, value: s.sites[i].dist(s.sites[j]).powi(2) / 4.0, index: 1, sites: vec![i, j] });
        } else if e.contains_param(0.0, -eps) {
            degenerate.push(e.origin);
        }
    }
    let mut maxima = Vec::new();
    for t in &s.triangles {
        let [a, b, c] = t.sites.map(|k| s.sites[k]);
        let area = (b - a).cross(c - a);
        // barycentric coordinates, scaled to lengths
        let w = [(b - t.center).cross(c - t.center), (c - t.center).cross(a - t.center), (a - t.center).cross(b - t.center)];
        let scale = area.abs().sqrt();
        let rel: Vec<f64> = w.iter().map(|v| v / area * scale).collect();
        if rel.iter().all(|&v| v > eps) {
            maxima.push(PlanePoint { x: t.center, value: t.radius * t.radius, index: 2, sites: t.sites.to_vec() });
        } else if rel.iter().all(|&v| v > -eps) && !degenerate.iter().any(|p| p.dist(t.center) <= 10.0 * eps) {
            degenerate.push(t.center);
        }
    }
    PlaneCritical { minima, saddles, maxima, degenerate }
}

/// Critical points of `min_i |x - a_i|^2` in the plane: minima at the sites,
/// saddles where a Voronoi edge crosses its Delaunay edge, maxima at Voronoi
/// vertices inside their Delaunay triangle.
pub fn plane_critical(feet: &[Point], tol: f64) -> Result<PlaneCritical, VoronoiError> {
    if feet.len() < 2 {
        return Err(VoronoiError::TooFewSites { need: 2, got: feet.len() });
    }
    Ok(plane_of(&VoronoiStructure::generic(feet, tol)?))
}

/// Whether the ray `x -> a_k` lies strictly inside the cone spanned by the
/// rays `x -> a_i` and `x -> a_j`.
pub fn cone_test(x: Point, ai: Point, aj: Point, ak: Point) -> Result<bool, VoronoiError> {
    Ok(matches!(cone_side(x, ai, aj, ak)?, Some(ConeSide::Ray)))
}

/// Which of the two rays of the line `x a_k` lies inside the cone, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConeSide {
    Ray,
    Antipode,
}

const CONE_TOL: f64 = 1e-12;

fn cone_side(x: Point, ai: Point, aj: Point, ak: Point) -> Result<Option<ConeSide>, VoronoiError> {
    let (u, v, w) = ((ai - x).normalized(), (aj - x).normalized(), (ak - x).normalized());
    let det = u.cross(v);
    if det.abs() <= CONE_TOL || !det.is_finite() || !w.is_finite() {
        return Err(VoronoiError::DegenerateCone);
    }
    let alpha = w.cross(v) / det;
    let beta = u.cross(w) / det;
    if alpha.abs() <= CONE_TOL || beta.abs() <= CONE_TOL {
        return Err(VoronoiError::DegenerateCone);
    }
    Ok(match (alpha > 0.0, beta > 0.0) {
        (true, true) => Some(ConeSide::Ray),
        (false, false) => Some(ConeSide::Antipode),
        _ => None,
    })
}

/// Clauses of Voronoi genericity on top of strong genericity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoronoiClause {
    StrongGenericity,
    FourCocircular,
    DegeneratePlaneCritical,
    PlaneCriticalOnCircle,
    TwoAlignedOnDiagram,
    /// A critical circle through a Voronoi vertex inside the work space.
    CircleThroughVertex,
    /// A critical circle tangent to a Voronoi edge.
    WallTangency,
    /// An aligned leg's line along a cone ray at a wall point.
    ConeBoundary,
    /// A cell critical point on a Voronoi edge.
    CellPointOnWall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiViolation {
    pub clause: VoronoiClause,
    pub witness: Point,
    pub legs: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub codes: Vec<ViolationCode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoronoiKind {
    /// Planar critical point of `V` off the critical circles.
    Minimum,
    Saddle,
    Maximum,
    /// One aligned leg, body inside a power cell.
    CellOneAligned,
    /// Two aligned legs, body inside a power cell.
    CellTwoAligned,
    /// One aligned leg, body on a Voronoi edge.
    WallOneAligned,
}

/// An isolated critical manifold of the lifted Voronoi distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiComponent {
    pub kind: VoronoiKind,
    /// Active sites.
    pub sites: Vec<usize>,
    /// Convex combination of the active sites for which the configuration
    /// is critical for the smooth squared distance.
    pub target: Point,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeSide>,
    /// Index of the unperturbed non-isolated piece this replaces.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replaces: Option<usize>,
    #[serde(flatten)]
    pub critical: CriticalComponent,
}

/// Arcs of a critical circle of leg `leg` inside the cell of its own foot:
/// every point is critical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonIsolatedPiece {
    pub leg: usize,
    pub radius: f64,
    pub signs: Vec<SignVector>,
    pub full: bool,
    /// Angle intervals `[from, to]` around the foot, `to > from`.
    pub arcs: Vec<[f64; 2]>,
}

/// A critical circle crossing a Voronoi edge inside the work space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeRecord {
    pub x: Point,
    pub wall: (usize, usize),
    pub leg: usize,
    pub radius: f64,
    /// `None`: the line of the leg misses the cone, not critical.
    pub side: Option<ConeSide>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Morsification {
    pub offsets: Vec<Point>,
    pub bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub attempts: usize,
    /// Non-isolated pieces of the unperturbed potential.
    pub replaced: Vec<NonIsolatedPiece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoronoiCriticalReport {
    pub structure: VoronoiStructure,
    pub plane: PlaneCritical,
    pub components: Vec<VoronoiComponent>,
    pub non_isolated: Vec<NonIsolatedPiece>,
    pub cone_tests: Vec<ConeRecord>,
    pub violations: Vec<VoronoiViolation>,
    pub certified: bool,
    pub diagnostics: Diagnostics,
    /// Sum over the isolated components.
    pub isolated_polynomial: Option<Poly>,
    /// Morse–Bott polynomial, once nothing non-isolated is left.
    pub polynomial: Option<Poly>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub morsification: Option<Morsification>,
}

impl VoronoiCriticalReport {
    pub fn sites(&self) -> &[Point] {
        &self.structure.sites
    }
}

fn is_foot(mech: &SpiderMechanism, sites: &[Point], site: usize, leg: usize) -> bool {
    sites[site].dist(mech.foot(leg)) <= mech.eps()
}

/// Meeting point of the lines `p + s u` and `q + t v`.
fn line_meet(p: Point, u: Point, q: Point, v: Point) -> Option<Point> {
    let det = u.cross(v);
    if det.abs() < 1e-300 {
        return None;
    }
    Some(p + u * ((q - p).cross(v) / det))
}

fn genericity(mech: &SpiderMechanism, s: &VoronoiStructure, plane: &PlaneCritical) -> Vec<VoronoiViolation> {
    let near = 10.0 * mech.eps();
    let mut out = Vec::new();
    let strong = strong_genericity_report(mech, None);
    if !strong.is_certified() {
        let v = &strong.violations[0];
        out.push(VoronoiViolation { clause: VoronoiClause::StrongGenericity, witness: v.witness, legs: v.legs.clone(), codes: strong.codes() });
    }
    if !s.vc_generic {
        out.push(VoronoiViolation { clause: VoronoiClause::FourCocircular, witness: s.sites[0], legs: vec![], codes: vec![] });
    }
    for &p in &plane.degenerate {
        if mech.in_workspace(p, near) {
            out.push(VoronoiViolation { clause: VoronoiClause::DegeneratePlaneCritical, witness: p, legs: vec![], codes: vec![] });
        }
    }
    for p in plane.all() {
        for leg in 0..mech.n_legs() {
            if let Some((gap, c)) = mech.nearest_circle(leg, p.x) {
                if gap <= near && !c.degenerate && mech.in_workspace(p.x, near) {
                    out.push(VoronoiViolation { clause: VoronoiClause::PlaneCriticalOnCircle, witness: p.x, legs: vec![leg], codes: vec![] });
                }
            }
        }
    }
    for t in two_aligned_points(mech) {
        if mech.in_workspace(t.point, near) && s.wall_gap(t.point) <= near {
            out.push(VoronoiViolation { clause: VoronoiClause::TwoAlignedOnDiagram, witness: t.point, legs: vec![t.legs.0, t.legs.1], codes: vec![] });
        }
    }
    out
}

fn plane_components(mech: &SpiderMechanism, plane: &PlaneCritical) -> Vec<VoronoiComponent> {
    let eps = mech.eps();
    plane
        .all()
        .filter(|p| mech.strictly_inside_zones(p.x, &[], eps))
        .filter(|p| (0..mech.n_legs()).all(|l| mech.nearest_circle(l, p.x).is_none_or(|(g, c)| g > eps || c.degenerate)))
        .map(|p| {
            let (manifold, dim, poincare) = manifold_at(mech, p.x, &[]);
            VoronoiComponent {
                kind: [VoronoiKind::Minimum, VoronoiKind::Saddle, VoronoiKind::Maximum][p.index],
                sites: p.sites.clone(),
                target: p.x,
                cone: None,
                replaces: None,
                critical: CriticalComponent {
                    case: Case::BodyAtTarget,
                    x: p.x,
                    aligned: Vec::new(),
                    index: p.index,
                    index_source: IndexSource::Theorem,
                    manifold,
                    dim,
                    poincare,
                    betweenness: None,
                    sigma: None,
                },
            }
        })
        .collect()
}

/// Squared-distance machinery with the target at a site, restricted to the
/// open cell of that site. Points of the site's own leg are non-isolated.
fn cell_components(
    mech: &SpiderMechanism,
    s: &VoronoiStructure,
    diag: &mut Diagnostics,
    viol: &mut Vec<VoronoiViolation>,
) -> Result<Vec<VoronoiComponent>, VoronoiError> {
    let eps = mech.eps();
    let sites = &s.sites;
    let mut out = Vec::new();
    let mut keep = |c: CriticalComponent, i: usize, kind: VoronoiKind, viol: &mut Vec<VoronoiViolation>| {
        let (k, gap) = s.nearest(c.x);
        if k != i {
            return;
        }
        if gap <= eps {
            viol.push(VoronoiViolation {
                clause: VoronoiClause::CellPointOnWall,
                witness: c.x,
                legs: c.aligned.iter().map(|a| a.leg).collect(),
                codes: vec![],
            });
            return;
        }
        out.push(VoronoiComponent { kind, sites: vec![i], target: sites[i], cone: None, replaces: None, critical: c });
    };
    for i in 0..sites.len() {
        for j in 0..mech.n_legs() {
            if is_foot(mech, sites, i, j) {
                continue;
            }
            for c in morse::one_aligned(mech, j, sites[i], diag)? {
                keep(c, i, VoronoiKind::CellOneAligned, viol);
            }
        }
        let own = |legs: (usize, usize)| is_foot(mech, sites, i, legs.0) || is_foot(mech, sites, i, legs.1);
        for c in morse::two_aligned(mech, sites[i], |x, legs| s.nearest(x).0 == i && !own(legs), diag)? {
            keep(c, i, VoronoiKind::CellTwoAligned, viol);
        }
    }
    Ok(out)
}

/// Critical circles crossing Voronoi edges. The image of the work map there
/// is the circle's tangent; the point is critical when the line of the
/// aligned leg meets the cone of the two sites, and the index is one plus
/// the shape index of the leg for the target where that line meets the
/// Delaunay edge.
fn wall_components(
    mech: &SpiderMechanism,
    s: &VoronoiStructure,
    viol: &mut Vec<VoronoiViolation>,
    records: &mut Vec<ConeRecord>,
) -> Result<Vec<VoronoiComponent>, VoronoiError> {
    let eps = mech.eps();
    let near = 10.0 * eps;
    let sites = &s.sites;
    let mut out = Vec::new();
    for e in &s.edges {
        let (i, j) = e.sites;
        for k in 0..mech.n_legs() {
            let a = mech.foot(k);
            for c in mech.circles(k).iter().filter(|c| !c.degenerate) {
                for t in line_circle_params(e.origin, e.dir, a, c.radius) {
                    if !e.contains_param(t, -near) {
                        continue;
                    }
                    let x = e.at(t);
                    if !mech.strictly_inside_zones(x, &[k], -near) {
                        continue;
                    }
                    let witness = |clause| VoronoiViolation { clause, witness: x, legs: vec![k], codes: vec![] };
                    if !e.contains_param(t, near) {
                        viol.push(witness(VoronoiClause::CircleThroughVertex));
                        continue;
                    }
                    if !mech.strictly_inside_zones(x, &[k], near) {
                        // on the boundary of another zone: a two-aligned point on the diagram
                        continue;
                    }
                    let u = (x - a).normalized();
                    if u.dot(e.dir).abs() <= 1e-7 {
                        viol.push(witness(VoronoiClause::WallTangency));
                        continue;
                    }
                    if is_foot(mech, sites, i, k) || is_foot(mech, sites, j, k) {
                        // end of a non-isolated arc
                        continue;
                    }
                    let side = match cone_side(x, sites[i], sites[j], a) {
                        Ok(side) => side,
                        Err(_) => {
                            viol.push(witness(VoronoiClause::ConeBoundary));
                            continue;
                        }
                    };
                    records.push(ConeRecord { x, wall: (i, j), leg: k, radius: c.radius, side });
                    let Some(side) = side else { continue };
                    let target = line_meet(x, a - x, sites[i], sites[j] - sites[i]).unwrap_or(x);
                    let (manifold, dim, poincare) = manifold_at(mech, x, &[k]);
                    let p = mech.leg(k).len();
                    for sv in &c.sign_vectors {
                        let neg = arm::aligned_index(mech.leg(k), sv, mech.tol())?;
                        let shape = match side {
                            ConeSide::Ray => neg,
                            ConeSide::Antipode => p - 1 - neg,
                        };
                        out.push(VoronoiComponent {
                            kind: VoronoiKind::WallOneAligned,
                            sites: vec![i, j],
                            target,
                            cone: Some(side),
                            replaces: None,
                            critical: CriticalComponent {
                                case: Case::OneAligned,
                                x,
                                aligned: vec![AlignedLeg { leg: k, radius: c.radius, signs: sv.clone() }],
                                index: 1 + shape,
                                index_source: IndexSource::Inferred,
                                manifold: manifold.clone(),
                                dim,
                                poincare: poincare.clone(),
                                betweenness: None,
                                sigma: None,
                            },
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Arcs of each critical circle of a leg whose foot is a site, inside that
/// site's open cell and the work space.
fn non_isolated(mech: &SpiderMechanism, s: &VoronoiStructure) -> Vec<NonIsolatedPiece> {
    use std::f64::consts::TAU;
    let sites = &s.sites;
    let mut out = Vec::new();
    for i in 0..sites.len() {
        for k in (0..mech.n_legs()).filter(|&k| is_foot(mech, sites, i, k)) {
            let a = mech.foot(k);
            for c in mech.circles(k).iter().filter(|c| !c.degenerate) {
                let r = c.radius;
                let mut cuts: Vec<f64> = Vec::new();
                for e in s.edges.iter().filter(|e| e.sites.0 == i || e.sites.1 == i) {
                    for t in line_circle_params(e.origin, e.dir, a, r) {
                        cuts.push((e.at(t) - a).angle());
                    }
                }
                for m in (0..mech.n_legs()).filter(|&m| m != k) {
                    for cm in mech.circles(m).iter().filter(|c| !c.degenerate) {
                        for x in crate::geom::circle_intersections(a, r, mech.foot(m), cm.radius, mech.eps()) {
                            cuts.push((x - a).angle());
                        }
                    }
                }
                let inside = |th: f64| {
                    let x = a + Point::polar(th) * r;
                    s.nearest(x).0 == i && mech.strictly_inside_zones(x, &[k], 0.0)
                };
                cuts.iter_mut().for_each(|t| *t = t.rem_euclid(TAU));
                cuts.sort_by(|x, y| x.total_cmp(y));
                cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
                let mut arcs: Vec<[f64; 2]> = Vec::new();
                if cuts.is_empty() {
                    if inside(0.0) {
                        out.push(NonIsolatedPiece { leg: k, radius: r, signs: c.sign_vectors.clone(), full: true, arcs: vec![[0.0, TAU]] });
                    }
                    continue;
                }
                let m = cuts.len();
                let kept: Vec<bool> = (0..m)
                    .map(|q| {
                        let (lo, hi) = (cuts[q], if q + 1 < m { cuts[q + 1] } else { cuts[0] + TAU });
                        inside(0.5 * (lo + hi))
                    })
                    .collect();
                if kept.iter().all(|&b| b) {
                    out.push(NonIsolatedPiece { leg: k, radius: r, signs: c.sign_vectors.clone(), full: true, arcs: vec![[0.0, TAU]] });
                    continue;
                }
                // start after a dropped interval so runs do not wrap
                let start = (0..m).find(|&q| !kept[q]).unwrap_or(0) + 1;
                let mut run: Option<[f64; 2]> = None;
                for step in 0..m {
                    let q = (start + step) % m;
                    let (lo, mut hi) = (cuts[q], if q + 1 < m { cuts[q + 1] } else { cuts[0] + TAU });
                    if kept[q] {
                        run = Some(match run {
                            Some([from, _]) => {
                                while hi < from {
                                    hi += TAU;
                                }
                                [from, hi]
                            }
                            None => [lo, hi],
                        });
                    } else if let Some(r) = run.take() {
                        arcs.push(r);
                    }
                }
                arcs.extend(run);
                if !arcs.is_empty() {
                    out.push(NonIsolatedPiece { leg: k, radius: r, signs: c.sign_vectors.clone(), full: false, arcs });
                }
            }
        }
    }
    out
}

fn sort_voronoi(mech: &SpiderMechanism, v: &mut [VoronoiComponent]) {
    let grid = mech.eps().max(f64::MIN_POSITIVE);
    v.sort_by(|a, b| (a.kind, &a.sites, a.critical.key(grid), a.critical.index).cmp(&(b.kind, &b.sites, b.critical.key(grid), b.critical.index)));
}

fn analyze(mech: &SpiderMechanism, sites: &[Point], certified: bool) -> Result<VoronoiCriticalReport, VoronoiError> {
    if sites.len() != mech.n_legs() {
        return Err(VoronoiError::OffsetCountMismatch { offsets: sites.len(), sites: mech.n_legs() });
    }
    let structure = VoronoiStructure::new(sites, mech.tol())?;
    let plane = plane_of(&structure);
    let mut violations = genericity(mech, &structure, &plane);
    let mut diagnostics = Diagnostics::default();
    let mut cone_tests = Vec::new();
    let mut components = plane_components(mech, &plane);
    components.extend(cell_components(mech, &structure, &mut diagnostics, &mut violations)?);
    components.extend(wall_components(mech, &structure, &mut violations, &mut cone_tests)?);
    sort_voronoi(mech, &mut components);
    let non_isolated = non_isolated(mech, &structure);
    violations.sort_by_key(|v| v.clause);
    if certified {
        if let Some(v) = violations.first() {
            return Err(VoronoiError::NotVoronoiGeneric { clause: v.clause, witness: v.witness });
        }
    }
    let isolated_polynomial = components.iter().map(|c| c.critical.contribution()).sum::<Option<Poly>>();
    let polynomial = if non_isolated.is_empty() { isolated_polynomial.clone() } else { None };
    Ok(VoronoiCriticalReport {
        structure,
        plane,
        components,
        non_isolated,
        cone_tests,
        certified: violations.is_empty(),
        violations,
        diagnostics,
        isolated_polynomial,
        polynomial,
        morsification: None,
    })
}

/// Critical manifolds of the lifted Voronoi distance to the feet.
pub fn spider_voronoi_critical(mech: &SpiderMechanism, certified: bool) -> Result<VoronoiCriticalReport, VoronoiError> {
    analyze(mech, mech.feet(), certified)
}

/// How to displace the sites away from the feet.
#[derive(Debug, Clone, PartialEq)]
pub enum Offsets {
    Explicit(Vec<Point>),
    /// Seeded random directions; `bound` defaults to `1e-3` times the
    /// smallest distance between feet.
    Seeded {
        seed: u64,
        bound: Option<f64>,
    },
}

pub fn default_offset_bound(mech: &SpiderMechanism) -> f64 {
    let f = mech.feet();
    let mut m = f64::INFINITY;
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            m = m.min(f[i].dist(f[j]));
        }
    }
    1e-3 * if m.is_finite() { m } else { mech.scale() }
}

/// `(kind, sites, aligned legs, index)` of components that are not
/// replacements of non-isolated pieces.
fn signature(r: &VoronoiCriticalReport) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for c in &r.components {
        if c.critical.aligned.iter().any(|a| c.sites.contains(&a.leg)) {
            continue;
        }
        let legs: Vec<String> = c.critical.aligned.iter().map(|a| format!("{}:{:?}", a.leg, a.signs.signs())).collect();
        *m.entry(format!("{:?}/{:?}/{}/{}", c.kind, c.sites, legs.join(","), c.critical.index)).or_insert(0) += 1;
    }
    m
}

fn delaunay_signature(s: &VoronoiStructure) -> (Vec<(usize, usize)>, Vec<[usize; 3]>) {
    (s.edges.iter().map(|e| e.sites).collect(), s.triangles.iter().map(|t| t.sites).collect())
}

fn wall_check(base: &VoronoiCriticalReport, rep: &VoronoiCriticalReport) -> Result<(), String> {
    if let Some(v) = rep.violations.first() {
        return Err(format!("perturbed potential not generic ({:?})", v.clause));
    }
    if delaunay_signature(&base.structure) != delaunay_signature(&rep.structure) {
        return Err("Delaunay combinatorics changed".into());
    }
    if signature(base) != signature(rep) {
        return Err("isolated critical data changed".into());
    }
    if !rep.non_isolated.is_empty() {
        return Err(format!("{} non-isolated piece(s) remain", rep.non_isolated.len()));
    }
    Ok(())
}

fn mark_replacements(rep: &mut VoronoiCriticalReport, pieces: &[NonIsolatedPiece]) {
    for c in &mut rep.components {
        let own = c.critical.aligned.iter().find(|a| c.sites.contains(&a.leg));
        if let Some(a) = own {
            c.replaces = pieces.iter().position(|p| p.leg == a.leg && (p.radius - a.radius).abs() <= 1e-12 * p.radius.max(1.0));
        }
    }
}

/// Displace the sites off the feet (legs stay rooted) so that every
/// critical manifold is isolated, and return the perturbed data with its
/// Morse–Bott polynomial. The polynomial may depend on the offsets.
pub fn morsify(mech: &SpiderMechanism, offsets: &Offsets, certified: bool) -> Result<VoronoiCriticalReport, VoronoiError> {
    let base = analyze(mech, mech.feet(), certified)?;
    let n = mech.n_legs();
    let default_bound = default_offset_bound(mech);
    let finish = |mut rep: VoronoiCriticalReport, offs: Vec<Point>, bound: f64, seed, attempts| {
        mark_replacements(&mut rep, &base.non_isolated);
        rep.morsification = Some(Morsification { offsets: offs, bound, seed, attempts, replaced: base.non_isolated.clone() });
        rep
    };
    match offsets {
        Offsets::Explicit(offs) => {
            if offs.len() != n {
                return Err(VoronoiError::OffsetCountMismatch { offsets: offs.len(), sites: n });
            }
            let bound = offs.iter().map(|o| o.norm()).fold(0.0, f64::max);
            let sites: Vec<Point> = mech.feet().iter().zip(offs).map(|(&a, &o)| a + o).collect();
            let rep = analyze(mech, &sites, false)?;
            if !rep.non_isolated.is_empty() {
                return Err(VoronoiError::NonIsolatedRemaining(rep.non_isolated.len()));
            }
            wall_check(&base, &rep).map_err(|reason| VoronoiError::OffsetTooLarge { attempts: 1, reason })?;
            Ok(finish(rep, offs.clone(), bound, None, 1))
        }
        Offsets::Seeded { seed, bound } => {
            let bound = bound.unwrap_or(default_bound);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut last = String::new();
            const ATTEMPTS: usize = 64;
            for attempt in 1..=ATTEMPTS {
                let offs: Vec<Point> = (0..n).map(|_| Point::polar(rng.gen_range(0.0..std::f64::consts::TAU)) * (bound * rng.gen_range(0.25..1.0))).collect();
                let sites: Vec<Point> = mech.feet().iter().zip(&offs).map(|(&a, &o)| a + o).collect();
                let rep = analyze(mech, &sites, false)?;
                match wall_check(&base, &rep) {
                    Ok(()) => return Ok(finish(rep, offs, bound, Some(*seed), attempt)),
                    Err(reason) => last = reason,
                }
            }
            Err(VoronoiError::OffsetTooLarge { attempts: ATTEMPTS, reason: last })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workspace::euler_via_strata;

    const TOL: f64 = 1e-9;

    fn p(x: f64, y: f64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn equilateral_values() {
        let h = 3f64.sqrt() / 2.0;
        let pc = plane_critical(&[p(0.0, 0.0), p(1.0, 0.0), p(0.5, h)], TOL).unwrap();
        assert_eq!((pc.minima.len(), pc.saddles.len(), pc.maxima.len()), (3, 3, 1));
        assert!(pc.minima.iter().all(|m| m.value == 0.0));
        for s in &pc.saddles {
            assert!((s.value - 0.25).abs() < 1e-12);
        }
        assert!((pc.maxima[0].value - 1.0 / 3.0).abs() < 1e-12);
        assert!(pc.maxima[0].x.dist(p(0.5, h / 3.0)) < 1e-12);
        assert!(pc.degenerate.is_empty());
    }

    #[test]
    fn collinear_and_right_triangle() {
        let pc = plane_critical(&[p(0.0, 0.0), p(1.0, 0.0), p(3.0, 0.0)], TOL).unwrap();
        assert_eq!((pc.saddles.len(), pc.maxima.len()), (2, 0));
        let pc = plane_critical(&[p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)], TOL).unwrap();
        assert_eq!(pc.maxima.len(), 0);
        assert_eq!(pc.saddles.len(), 2);
        assert_eq!(pc.degenerate.len(), 1);
        assert!(pc.degenerate[0].dist(p(0.5, 0.5)) < 1e-12);
    }

    #[test]
    fn square_is_four_cocircular() {
        let sq = [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)];
        assert_eq!(plane_critical(&sq, TOL), Err(VoronoiError::FourCocircular([0, 1, 2, 3])));
        assert!(matches!(plane_critical(&sq[..1], TOL), Err(VoronoiError::TooFewSites { .. })));
    }

    #[test]
    fn random_plane_euler_and_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 20 {
            let n = rng.gen_range(2..=8);
            let feet: Vec<Point> = (0..n).map(|_| p(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
            let s = VoronoiStructure::generic(&feet, TOL).unwrap();
            let pc = plane_of(&s);
            if !pc.degenerate.is_empty() {
                continue;
            }
            checked += 1;
            assert_eq!(pc.euler(), 1, "{feet:?}");
            // every saddle on exactly one Voronoi edge, at its Delaunay midpoint
            for sd in &pc.saddles {
                let on: Vec<_> = s.edges.iter().filter(|e| e.origin.dist(sd.x) < 1e-12 && e.crosses_dual(0.0)).collect();
                assert_eq!(on.len(), 1);
                assert!(matches!(s.locate(sd.x, 1e-9), Location::Edge(..)));
            }
            // Euler relation of the Delaunay triangulation: V - E + F = 1
            assert_eq!(n as i64 - s.edges.len() as i64 + s.triangles.len() as i64, 1, "{feet:?}");
            for t in &s.triangles {
                assert!(matches!(s.locate(t.center, 1e-9), Location::Vertex(_)));
            }
        }
    }

    #[test]
    fn cone_examples() {
        let (x, ai, aj) = (p(0.0, 1.0), p(-1.0, 0.0), p(1.0, 0.0));
        assert_eq!(cone_test(x, ai, aj, p(0.0, -1.0)), Ok(true));
        assert_eq!(cone_test(x, ai, aj, p(0.0, 2.0)), Ok(false));
        assert_eq!(cone_test(x, ai, aj, p(-2.0, -1.0)), Err(VoronoiError::DegenerateCone));
        assert_eq!(cone_test(x, ai, p(0.0, 2.0), p(0.0, 3.0)), Err(VoronoiError::DegenerateCone));
    }

    #[test]
    fn one_foot_is_all_non_isolated() {
        let m = SpiderMechanism::new(vec![p(0.0, 0.0)], vec![vec![1.0, 0.6]]).unwrap();
        let r = spider_voronoi_critical(&m, true).unwrap();
        assert!(r.components.is_empty());
        assert_eq!(r.non_isolated.len(), 2);
        assert!(r.non_isolated.iter().all(|p| p.full));
        assert_eq!(r.polynomial, None);
        let r = morsify(&m, &Offsets::Seeded { seed: 1, bound: None }, true).unwrap();
        // torus: each circle gives one minimum-type and one saddle-type point
        assert_eq!(r.polynomial, Some(Poly::new(vec![1, 2, 1])));
    }

    fn random_two_edge(rng: &mut ChaCha8Rng, n: usize) -> SpiderMechanism {
        SpiderMechanism::random(rng, &vec![2; n], (-1.5, 1.5), (0.6, 2.2))
    }

    #[test]
    fn morsified_polynomial_matches_strata_euler() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut checked = 0;
        let mut walls = 0;
        let mut antipodes = 0;
        let mut antipode_chi = 0;
        for _ in 0..400 {
            let n = rng.gen_range(2..=3);
            let m = random_two_edge(&mut rng, n);
            let Ok(chi) = euler_via_strata(&m) else { continue };
            let Ok(base) = spider_voronoi_critical(&m, true) else { continue };
            let Ok(r) = morsify(&m, &Offsets::Seeded { seed: 5, bound: None }, true) else { continue };
            let poly = r.polynomial.clone().unwrap();
            assert_eq!(poly.at_minus_one(), chi.euler, "{:?}\n{poly}", m.to_document());
            assert!(poly.is_nonnegative());
            walls += base.components.iter().filter(|c| c.kind == VoronoiKind::WallOneAligned).count();
            antipodes += base.cone_tests.iter().filter(|c| c.side == Some(ConeSide::Antipode)).count();
            // dropping the antipodal wall points would break the count
            let anti: i64 = r.components.iter().filter(|c| c.cone == Some(ConeSide::Antipode)).map(|c| c.critical.contribution().unwrap().at_minus_one()).sum();
            antipode_chi += (anti != 0) as usize;
            checked += 1;
        }
        assert!(checked >= 100, "only {checked} instances");
        assert!(walls > 20 && antipodes > 5, "walls {walls}, antipodes {antipodes}");
        assert!(antipode_chi > 0);
    }

    #[test]
    fn explicit_offsets_are_checked() {
        let m = SpiderMechanism::new(vec![p(0.0, 0.0), p(2.0, 0.0)], vec![vec![1.6, 1.0], vec![1.3, 0.8]]).unwrap();
        assert!(matches!(morsify(&m, &Offsets::Explicit(vec![Point::ORIGIN; 3]), false), Err(VoronoiError::OffsetCountMismatch { .. })));
        assert!(matches!(morsify(&m, &Offsets::Explicit(vec![Point::ORIGIN, p(1e-3, 0.0)]), false), Err(VoronoiError::NonIsolatedRemaining(_))));
        assert!(matches!(morsify(&m, &Offsets::Explicit(vec![p(0.9, 0.0), p(-0.9, 0.0)]), false), Err(VoronoiError::OffsetTooLarge { .. })));
        let r = morsify(&m, &Offsets::Explicit(vec![p(1e-3, 2e-4), p(-3e-4, 1e-3)]), false).unwrap();
        assert!(r.components.iter().any(|c| c.replaces.is_some()));
        assert_eq!(r.polynomial.unwrap().at_minus_one(), euler_via_strata(&m).unwrap().euler);
    }
}
