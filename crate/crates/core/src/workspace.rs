//! The work space `W` (intersection of all zones), stratified by the
//! arrangement of critical circles, with fiber data over every stratum.
//!
//! The arrangement is decomposed into vertical slabs at every circle extreme,
//! circle-circle intersection and foot inside `W`. Inside a slab no two arcs
//! cross, so the plane splits into open curvilinear trapezoids (2-cells),
//! open arc pieces and vertical segments (1-cells), and points (0-cells).
//! Faces and arcs of the arrangement are unions of these cells, found by
//! union-find; their Euler characteristics follow from cell counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{circle_intersections, Point};
use crate::mechanism::SpiderMechanism;
use crate::poly::Poly;
use crate::polyspace::{closure_descriptor, PolygonSpaceDescriptor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkspaceError {
    #[error("the work space is empty: the zones have no common point")]
    EmptyWorkspace,
    #[error("point ({}, {}) lies outside the work space", .0.x, .0.y)]
    OutsideWorkspace(Point),
    #[error("fiber over ({}, {}) has a singular closure factor for leg {leg}", .point.x, .point.y)]
    UnsupportedFibers { leg: usize, point: Point },
}

/// One factor of a fiber of the work map: the closure of a leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberFactor {
    pub leg: usize,
    pub closing: f64,
    /// The body sits on the foot, so the closed leg can still spin.
    pub rotation_circle: bool,
    pub polygon: PolygonSpaceDescriptor,
}

impl FiberFactor {
    pub fn euler(&self) -> Option<i64> {
        if self.rotation_circle {
            Some(0)
        } else {
            self.polygon.euler
        }
    }

    pub fn poincare(&self) -> Option<Poly> {
        let p = if self.polygon.is_point() { Some(Poly::one()) } else { self.polygon.poincare.clone() }?;
        Some(if self.rotation_circle { p * Poly::new(vec![1, 1]) } else { p })
    }
}

/// Fiber of the work map over one point: the product of all leg closures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberDescriptor {
    pub point: Point,
    pub factors: Vec<FiberFactor>,
    pub euler: Option<i64>,
    pub poincare: Option<Poly>,
}

impl FiberDescriptor {
    fn from_factors(point: Point, factors: Vec<FiberFactor>) -> Self {
        let euler = factors.iter().map(|f| f.euler()).product::<Option<i64>>();
        let poincare = factors.iter().map(|f| f.poincare()).product::<Option<Poly>>();
        FiberDescriptor { point, factors, euler, poincare }
    }

    /// First leg whose closure has unknown topology.
    pub fn unsupported_leg(&self) -> Option<usize> {
        self.factors.iter().find(|f| f.euler().is_none()).map(|f| f.leg)
    }
}

/// Fiber over `x`, taking `aligned[(leg, radius)]` as exact closing lengths.
fn fiber_with(mech: &SpiderMechanism, x: Point, aligned: &[(usize, f64)], at_foot: Option<usize>) -> FiberDescriptor {
    let tol = mech.tol();
    let factors = (0..mech.n_legs())
        .map(|i| {
            let leg = mech.leg(i);
            if at_foot == Some(i) {
                return FiberFactor { leg: i, closing: 0.0, rotation_circle: true, polygon: closure_descriptor(leg, 0.0, tol) };
            }
            let closing = aligned.iter().find(|a| a.0 == i).map_or_else(|| x.dist(mech.foot(i)), |a| a.1);
            FiberFactor { leg: i, closing, rotation_circle: false, polygon: closure_descriptor(leg, closing, tol) }
        })
        .collect();
    FiberDescriptor::from_factors(x, factors)
}

/// Fiber of the work map over `x`. Legs whose critical circles pass through
/// `x` (within tolerance) are treated as aligned, and a foot at `x` adds the
/// circle of rotations of its closed leg.
pub fn fiber(mech: &SpiderMechanism, x: Point) -> Result<FiberDescriptor, WorkspaceError> {
    let eps = mech.eps();
    if !mech.in_workspace(x, eps) {
        return Err(WorkspaceError::OutsideWorkspace(x));
    }
    let mut aligned = Vec::new();
    let mut at_foot = None;
    for i in 0..mech.n_legs() {
        let d = x.dist(mech.foot(i));
        if d <= eps {
            at_foot = Some(i);
        } else if let Some((gap, c)) = mech.nearest_circle(i, x) {
            if gap <= eps && !c.degenerate {
                aligned.push((i, c.radius));
            }
        }
    }
    Ok(fiber_with(mech, x, &aligned, at_foot))
}

/// A circle of the arrangement. `leg` is `None` for refinement-only circles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrangementCircle {
    pub leg: Option<usize>,
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub point: Point,
    pub circles: Vec<usize>,
    /// Set when the vertex is a foot inside `W` (the closed leg spins there).
    pub puncture: Option<usize>,
    pub fiber: FiberDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub circle: usize,
    /// Whole circle without vertices.
    pub full: bool,
    /// Vertices bounding the arc (empty for a full circle).
    pub ends: Vec<usize>,
    pub sample: Point,
    /// Euler characteristic of the open arc: 1, or 0 for a full circle.
    pub euler: i64,
    pub fiber: FiberDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub sample: Point,
    /// Euler characteristic of the open face, `1 - holes`, punctures ignored.
    pub euler: i64,
    pub holes: usize,
    /// Vertices that are feet inside this face.
    pub punctures: Vec<usize>,
    pub fiber: FiberDescriptor,
}

/// Which stratum a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum Stratum {
    Face(usize),
    Arc(usize),
    Vertex(usize),
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedWorkspace {
    pub circles: Vec<ArrangementCircle>,
    pub vertices: Vec<Vertex>,
    pub arcs: Vec<Arc>,
    pub faces: Vec<Face>,
    #[serde(skip)]
    cells: CellComplex,
}

/// Point on a slab line where curves meet or a foot sits.
#[derive(Debug, Clone, Default, PartialEq)]
struct ZeroCell {
    y: f64,
    circles: Vec<usize>,
    foot: Option<usize>,
    in_w: bool,
    stratum: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Line {
    x: f64,
    zero: Vec<ZeroCell>,
    /// circle -> (lower crossing, upper crossing) as indices into `zero`
    crossing: BTreeMap<usize, (usize, usize)>,
    /// vertical segment j lies between zero[j] and zero[j+1]
    vertical_in_w: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Branch {
    circle: usize,
    upper: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Slab {
    /// branches sorted bottom to top
    branches: Vec<Branch>,
    /// face id of the gap above branch g-1 (index g), `None` outside `W`
    gap_face: Vec<Option<usize>>,
    /// arc id of branch b, `None` outside `W`
    branch_arc: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct CellComplex {
    lines: Vec<Line>,
    slabs: Vec<Slab>,
    /// signed cell sum of fiber Euler characteristics, when all are known
    cell_sum: Option<i64>,
}

fn branch_y(c: &ArrangementCircle, upper: bool, x: f64) -> f64 {
    let dx = x - c.center.x;
    let h = (c.radius * c.radius - dx * dx).max(0.0).sqrt();
    if upper {
        c.center.y + h
    } else {
        c.center.y - h
    }
}

fn endpoint(lines: &[Line], k: usize, br: &Branch) -> usize {
    let (lo, hi) = lines[k].crossing[&br.circle];
    if br.upper {
        hi
    } else {
        lo
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut j = i;
        while self.0[j] != r {
            let next = self.0[j];
            self.0[j] = r;
            j = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Left(usize),
    Right(usize),
    Meet(usize),
    Foot(usize),
}

/// Build the stratification from the mechanism's critical circles.
pub fn build(mech: &SpiderMechanism) -> Result<StratifiedWorkspace, WorkspaceError> {
    build_with_extra(mech, &[])
}

/// As [`build`], refining the arrangement by extra circles that carry no
/// alignment. Used to audit additivity.
pub fn build_with_extra(mech: &SpiderMechanism, extra: &[(Point, f64)]) -> Result<StratifiedWorkspace, WorkspaceError> {
    let scale = mech.scale();
    let eps = mech.eps();
    let mut circles: Vec<ArrangementCircle> =
        mech.all_circles().map(|c| ArrangementCircle { leg: Some(c.foot), center: mech.foot(c.foot), radius: c.radius }).collect();
    circles.extend(extra.iter().map(|&(center, radius)| ArrangementCircle { leg: None, center, radius }));

    // circle pair intersections
    let mut meets: Vec<(Point, usize, usize)> = Vec::new();
    for a in 0..circles.len() {
        for b in a + 1..circles.len() {
            let (ca, cb) = (&circles[a], &circles[b]);
            if ca.center.dist(cb.center) <= eps {
                continue;
            }
            for p in circle_intersections(ca.center, ca.radius, cb.center, cb.radius, eps) {
                meets.push((p, a, b));
            }
        }
    }
    let feet: Vec<usize> = (0..mech.n_legs()).filter(|&i| mech.in_workspace(mech.foot(i), eps)).collect();

    let mut events: Vec<(f64, Event)> = Vec::new();
    for (k, c) in circles.iter().enumerate() {
        events.push((c.center.x - c.radius, Event::Left(k)));
        events.push((c.center.x + c.radius, Event::Right(k)));
    }
    for (k, m) in meets.iter().enumerate() {
        events.push((m.0.x, Event::Meet(k)));
    }
    for &i in &feet {
        events.push((mech.foot(i).x, Event::Foot(i)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let merge = 1e-11 * scale;
    let mut lines: Vec<Line> = Vec::new();
    let mut line_events: Vec<Vec<Event>> = Vec::new();
    let mut group_start = f64::NEG_INFINITY;
    for (x, ev) in events {
        if lines.is_empty() || x - group_start > merge {
            group_start = x;
            lines.push(Line { x, ..Line::default() });
            line_events.push(Vec::new());
        }
        line_events.last_mut().unwrap().push(ev);
    }
    let mut left_line = vec![0usize; circles.len()];
    let mut right_line = vec![0usize; circles.len()];
    for (k, evs) in line_events.iter().enumerate() {
        for ev in evs {
            match *ev {
                Event::Left(c) => left_line[c] = k,
                Event::Right(c) => right_line[c] = k,
                _ => {}
            }
        }
    }

    // zero cells on each line
    for (k, line) in lines.iter_mut().enumerate() {
        let x = line.x;
        // raw crossings: (y, circle, is_upper)
        let mut raw: Vec<(f64, usize, bool)> = Vec::new();
        for (c, circ) in circles.iter().enumerate() {
            if left_line[c] > k || right_line[c] < k {
                continue;
            }
            if left_line[c] == k || right_line[c] == k {
                raw.push((circ.center.y, c, false));
                raw.push((circ.center.y, c, true));
            } else {
                raw.push((branch_y(circ, false, x), c, false));
                raw.push((branch_y(circ, true, x), c, true));
            }
        }
        // snap crossings to intersection points assigned to this line
        for ev in &line_events[k] {
            if let Event::Meet(m) = *ev {
                let (p, a, b) = meets[m];
                for c in [a, b] {
                    if let Some(r) = raw.iter_mut().filter(|r| r.1 == c).min_by(|u, v| (u.0 - p.y).abs().total_cmp(&(v.0 - p.y).abs())) {
                        r.0 = p.y;
                    }
                }
            }
        }
        let mut ys: Vec<(f64, Option<usize>, Option<usize>)> = raw.iter().map(|r| (r.0, Some(r.1), None)).collect();
        for ev in &line_events[k] {
            if let Event::Foot(i) = *ev {
                ys.push((mech.foot(i).y, None, Some(i)));
            }
        }
        ys.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (y, c, foot) in ys {
            match line.zero.last_mut() {
                Some(z) if (y - z.y).abs() <= merge => {
                    if let Some(c) = c {
                        if !z.circles.contains(&c) {
                            z.circles.push(c);
                        }
                    }
                    z.foot = z.foot.or(foot);
                }
                _ => line.zero.push(ZeroCell { y, circles: c.into_iter().collect(), foot, ..ZeroCell::default() }),
            }
        }
        for z in &mut line.zero {
            z.circles.sort_unstable();
        }
        let find_y =
            |zero: &[ZeroCell], y: f64| zero.iter().enumerate().min_by(|a, b| (a.1.y - y).abs().total_cmp(&(b.1.y - y).abs())).map(|(i, _)| i).unwrap();
        for &(y, c, upper) in &raw {
            let idx = find_y(&line.zero, y);
            let e = line.crossing.entry(c).or_insert((idx, idx));
            if upper {
                e.1 = idx;
            } else {
                e.0 = idx;
            }
        }
        for z in &mut line.zero {
            let p = Point::new(x, z.y);
            z.in_w = mech.in_workspace(p, eps);
        }
        line.vertical_in_w = line.zero.windows(2).map(|w| mech.in_workspace(Point::new(x, 0.5 * (w[0].y + w[1].y)), 0.0)).collect();
    }

    // slabs
    let mut slabs: Vec<Slab> = Vec::new();
    for k in 0..lines.len().saturating_sub(1) {
        let xm = 0.5 * (lines[k].x + lines[k + 1].x);
        let mut br: Vec<(f64, Branch)> = Vec::new();
        for (c, circ) in circles.iter().enumerate() {
            if left_line[c] <= k && right_line[c] > k {
                br.push((branch_y(circ, false, xm), Branch { circle: c, upper: false }));
                br.push((branch_y(circ, true, xm), Branch { circle: c, upper: true }));
            }
        }
        br.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = br.len();
        slabs.push(Slab { branches: br.into_iter().map(|b| b.1).collect(), gap_face: vec![None; n + 1], branch_arc: vec![None; n] });
    }

    // 2-cells: (slab, gap) with 1 <= gap < branches
    let mut cell2: Vec<(usize, usize, Point)> = Vec::new();
    let mut cell2_id: Vec<Vec<Option<usize>>> = Vec::new();
    for (k, slab) in slabs.iter().enumerate() {
        let xm = 0.5 * (lines[k].x + lines[k + 1].x);
        let mut ids = vec![None; slab.branches.len() + 1];
        for (g, pair) in slab.branches.windows(2).enumerate().map(|(g, w)| (g + 1, w)) {
            let (lo, hi) = (pair[0], pair[1]);
            let y = 0.5 * (branch_y(&circles[lo.circle], lo.upper, xm) + branch_y(&circles[hi.circle], hi.upper, xm));
            let p = Point::new(xm, y);
            if mech.in_workspace(p, 0.0) {
                ids[g] = Some(cell2.len());
                cell2.push((k, g, p));
            }
        }
        cell2_id.push(ids);
    }
    // the gap of slab `s` that touches vertical segment j of its line `line`
    let gap_at = |slab: &Slab, line: &Line, j: usize| -> usize {
        slab.branches
            .iter()
            .filter(|b| {
                let (lo, hi) = line.crossing[&b.circle];
                (if b.upper { hi } else { lo }) <= j
            })
            .count()
    };

    let mut face_dsu = Dsu::new(cell2.len());
    let mut vert_count = vec![0i64; cell2.len()];
    for (k, line) in lines.iter().enumerate() {
        for (j, &inw) in line.vertical_in_w.iter().enumerate() {
            if !inw {
                continue;
            }
            let left = (k > 0).then(|| cell2_id[k - 1][gap_at(&slabs[k - 1], line, j)]).flatten();
            let right = (k < slabs.len()).then(|| cell2_id[k][gap_at(&slabs[k], line, j)]).flatten();
            match (left, right) {
                (Some(a), Some(b)) => {
                    face_dsu.union(a, b);
                    vert_count[a] += 1;
                }
                (Some(a), None) | (None, Some(a)) => vert_count[a] += 1,
                (None, None) => {}
            }
        }
    }

    // curve cells: (slab, branch index)
    let mut cell1: Vec<(usize, usize, Point)> = Vec::new();
    let mut cell1_id: Vec<Vec<Option<usize>>> = Vec::new();
    for (k, slab) in slabs.iter().enumerate() {
        let xm = 0.5 * (lines[k].x + lines[k + 1].x);
        let mut ids = vec![None; slab.branches.len()];
        for (b, br) in slab.branches.iter().enumerate() {
            let p = Point::new(xm, branch_y(&circles[br.circle], br.upper, xm));
            if mech.in_workspace(p, eps) {
                ids[b] = Some(cell1.len());
                cell1.push((k, b, p));
            }
        }
        cell1_id.push(ids);
    }
    let mut arc_dsu = Dsu::new(cell1.len());
    let mut interior_count = vec![0i64; cell1.len()];
    // for each zero cell: incident curve cells
    let mut incident: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (id, &(k, b, _)) in cell1.iter().enumerate() {
        let br = slabs[k].branches[b];
        incident.entry((k, endpoint(&lines, k, &br))).or_default().push(id);
        incident.entry((k + 1, endpoint(&lines, k + 1, &br))).or_default().push(id);
    }
    let single = |z: &ZeroCell| z.circles.len() == 1 && z.foot.is_none();
    for (&(k, j), ids) in &incident {
        let z = &lines[k].zero[j];
        if z.in_w && single(z) {
            for w in ids.windows(2) {
                arc_dsu.union(w[0], w[1]);
            }
            interior_count[ids[0]] += 1;
        }
    }

    // vertices
    let mut vertices: Vec<Vertex> = Vec::new();
    for line in lines.iter_mut() {
        for z in line.zero.iter_mut() {
            if z.in_w && !single(z) {
                let p = Point::new(line.x, z.y);
                let aligned: Vec<(usize, f64)> = z.circles.iter().filter_map(|&c| circles[c].leg.map(|l| (l, circles[c].radius))).collect();
                z.stratum = Some(vertices.len());
                vertices.push(Vertex { point: p, circles: z.circles.clone(), puncture: z.foot, fiber: fiber_with(mech, p, &aligned, z.foot) });
            }
        }
    }

    // faces
    let mut face_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut faces: Vec<Face> = Vec::new();
    let mut face_cells = Vec::new();
    for id in 0..cell2.len() {
        let r = face_dsu.find(id);
        let f = *face_of_root.entry(r).or_insert_with(|| {
            let p = cell2[id].2;
            faces.push(Face { sample: p, euler: 0, holes: 0, punctures: Vec::new(), fiber: fiber_with(mech, p, &[], None) });
            face_cells.push(0i64);
            faces.len() - 1
        });
        face_cells[f] += 1 - vert_count[id];
        let (k, g, _) = cell2[id];
        slabs[k].gap_face[g] = Some(f);
    }
    for (k, line) in lines.iter().enumerate() {
        for (j, z) in line.zero.iter().enumerate() {
            if let (Some(v), Some(_), true) = (z.stratum, z.foot, z.circles.is_empty()) {
                // the face of the vertical segment above the foot
                let f = [k.checked_sub(1), (k < slabs.len()).then_some(k)].into_iter().flatten().find_map(|s| slabs[s].gap_face[gap_at(&slabs[s], line, j)]);
                if let Some(f) = f {
                    faces[f].punctures.push(v);
                }
            }
        }
    }
    for (f, face) in faces.iter_mut().enumerate() {
        face.euler = face_cells[f] + face.punctures.len() as i64;
        face.holes = (1 - face.euler).max(0) as usize;
    }

    // arcs
    let mut arc_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut arcs: Vec<Arc> = Vec::new();
    let mut arc_cells = Vec::new();
    for id in 0..cell1.len() {
        let r = arc_dsu.find(id);
        let (k, b, p) = cell1[id];
        let br = slabs[k].branches[b];
        let a = *arc_of_root.entry(r).or_insert_with(|| {
            let c = &circles[br.circle];
            let aligned: Vec<(usize, f64)> = c.leg.map(|l| (l, c.radius)).into_iter().collect();
            arcs.push(Arc { circle: br.circle, full: false, ends: Vec::new(), sample: p, euler: 0, fiber: fiber_with(mech, p, &aligned, None) });
            arc_cells.push(0i64);
            arcs.len() - 1
        });
        arc_cells[a] += 1 - interior_count[id];
        for kk in [k, k + 1] {
            if let Some(v) = lines[kk].zero[endpoint(&lines, kk, &br)].stratum {
                if !arcs[a].ends.contains(&v) {
                    arcs[a].ends.push(v);
                }
            }
        }
        slabs[k].branch_arc[b] = Some(a);
    }
    for (a, arc) in arcs.iter_mut().enumerate() {
        arc.euler = arc_cells[a];
        arc.full = arc.euler == 0 && arc.ends.is_empty();
        arc.ends.sort_unstable();
    }
    // single-circle zero cells belong to their arc
    for (k, line) in lines.iter_mut().enumerate() {
        for (j, z) in line.zero.iter_mut().enumerate() {
            if z.in_w && single(z) {
                z.stratum = incident.get(&(k, j)).and_then(|ids| {
                    let (kk, b, _) = cell1[ids[0]];
                    slabs[kk].branch_arc[b]
                });
            }
        }
    }

    if faces.is_empty() && arcs.is_empty() && vertices.is_empty() {
        return Err(WorkspaceError::EmptyWorkspace);
    }

    // independent signed cell sum
    let mut cell_sum = Some(0i64);
    let mut add = |sign: i64, f: Option<i64>| {
        cell_sum = cell_sum.and_then(|s| f.map(|f| s + sign * f));
    };
    for &(k, g, _) in &cell2 {
        add(1, faces[slabs[k].gap_face[g].unwrap()].fiber.euler);
    }
    for (k, line) in lines.iter().enumerate() {
        for (j, &inw) in line.vertical_in_w.iter().enumerate() {
            if inw {
                let f = [k.checked_sub(1), (k < slabs.len()).then_some(k)].into_iter().flatten().find_map(|s| slabs[s].gap_face[gap_at(&slabs[s], line, j)]);
                let p = Point::new(line.x, 0.5 * (line.zero[j].y + line.zero[j + 1].y));
                add(-1, f.map_or_else(|| fiber_with(mech, p, &[], None).euler, |f| faces[f].fiber.euler));
            }
        }
        for z in &line.zero {
            if z.in_w {
                if single(z) {
                    let a = z.stratum.expect("single-circle point lies on an arc");
                    add(1, arcs[a].fiber.euler);
                } else {
                    add(1, vertices[z.stratum.unwrap()].fiber.euler);
                }
            }
        }
    }
    for &(k, b, _) in &cell1 {
        add(-1, arcs[slabs[k].branch_arc[b].unwrap()].fiber.euler);
    }

    Ok(StratifiedWorkspace { circles, vertices, arcs, faces, cells: CellComplex { lines, slabs, cell_sum } })
}

/// Euler characteristic of the spider space with its cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EulerCertificate {
    pub euler: i64,
    /// Same sum taken over the finer cell decomposition.
    pub cell_sum: i64,
    pub strata: usize,
}

impl StratifiedWorkspace {
    /// `sum over strata of (-1)^dim chi(stratum) chi(fiber)`.
    pub fn euler(&self) -> Result<EulerCertificate, WorkspaceError> {
        let need = |f: &FiberDescriptor| f.euler.ok_or(WorkspaceError::UnsupportedFibers { leg: f.unsupported_leg().unwrap_or(0), point: f.point });
        let mut chi = 0i64;
        for f in &self.faces {
            chi += (f.euler - f.punctures.len() as i64) * need(&f.fiber)?;
        }
        for a in &self.arcs {
            chi -= a.euler * need(&a.fiber)?;
        }
        for v in &self.vertices {
            chi += need(&v.fiber)?;
        }
        let cell_sum = self.cells.cell_sum.expect("cell sum known whenever all strata fibers are");
        Ok(EulerCertificate { euler: chi, cell_sum, strata: self.faces.len() + self.arcs.len() + self.vertices.len() })
    }

    /// Euler characteristic of `W` itself, `sum (-1)^dim chi(stratum)`.
    pub fn euler_of_region(&self) -> i64 {
        let f: i64 = self.faces.iter().map(|f| f.euler).sum();
        let a: i64 = self.arcs.iter().map(|a| a.euler).sum();
        let punctures: i64 = self.faces.iter().map(|f| f.punctures.len() as i64).sum();
        f - punctures - a + self.vertices.len() as i64
    }

    /// Locate `p` among the strata. `eps` is an absolute tolerance.
    pub fn locate(&self, p: Point, eps: f64) -> Stratum {
        for (i, v) in self.vertices.iter().enumerate() {
            if v.point.dist(p) <= eps {
                return Stratum::Vertex(i);
            }
        }
        let lines = &self.cells.lines;
        let k = lines.partition_point(|l| l.x <= p.x);
        if k == 0 || k == lines.len() {
            return Stratum::Outside;
        }
        let s = k - 1;
        let slab = &self.cells.slabs[s];
        let ys: Vec<f64> = slab.branches.iter().map(|b| branch_y(&self.circles[b.circle], b.upper, p.x)).collect();
        for (b, &y) in ys.iter().enumerate() {
            if (y - p.y).abs() <= eps {
                return slab.branch_arc[b].map_or(Stratum::Outside, Stratum::Arc);
            }
        }
        let g = ys.iter().filter(|&&y| y < p.y).count();
        slab.gap_face[g].map_or(Stratum::Outside, Stratum::Face)
    }

    /// SVG drawing: zones, critical circles, `W` shaded, strata colored by
    /// dimension, feet, and an optional overlay.
    pub fn to_svg(&self, mech: &SpiderMechanism, overlay: &SvgOverlay) -> String {
        let (mut lo, mut hi) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
        for z in mech.zones() {
            let a = mech.foot(z.foot);
            lo = Point::new(lo.x.min(a.x - z.outer), lo.y.min(a.y - z.outer));
            hi = Point::new(hi.x.max(a.x + z.outer), hi.y.max(a.y + z.outer));
        }
        let pad = 0.05 * (hi - lo).norm();
        let (w, h) = (hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad);
        let unit = 0.004 * w.max(h);
        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="{:.0}" viewBox="{:.6} {:.6} {:.6} {:.6}">"#,
            800.0 * h / w,
            lo.x - pad,
            -(hi.y + pad),
            w,
            h
        );
        let _ = writeln!(s, r#"<g transform="scale(1,-1)" stroke-width="{unit:.6}">"#);
        for z in mech.zones() {
            let a = mech.foot(z.foot);
            for r in [z.inner, z.outer].into_iter().filter(|&r| r > 0.0) {
                let _ = writeln!(
                    s,
                    r##"<circle class="zone" cx="{:.6}" cy="{:.6}" r="{r:.6}" fill="none" stroke="#999" stroke-dasharray="{:.6}"/>"##,
                    a.x,
                    a.y,
                    3.0 * unit
                );
            }
        }
        let lines = &self.cells.lines;
        for (k, slab) in self.cells.slabs.iter().enumerate() {
            let (x0, x1) = (lines[k].x, lines[k + 1].x);
            for g in 1..slab.branches.len() {
                if slab.gap_face[g].is_none() {
                    continue;
                }
                let (b0, b1) = (slab.branches[g - 1], slab.branches[g]);
                let (c0, c1) = (&self.circles[b0.circle], &self.circles[b1.circle]);
                let _ = writeln!(
                    s,
                    r##"<path class="cell2" d="M {:.6} {:.6} A {:.6} {:.6} 0 0 1 {:.6} {:.6} L {:.6} {:.6} A {:.6} {:.6} 0 0 1 {:.6} {:.6} Z" fill="#cde" stroke="none"/>"##,
                    x0,
                    branch_y(c0, b0.upper, x0),
                    c0.radius,
                    c0.radius,
                    x1,
                    branch_y(c0, b0.upper, x1),
                    x1,
                    branch_y(c1, b1.upper, x1),
                    c1.radius,
                    c1.radius,
                    x0,
                    branch_y(c1, b1.upper, x0),
                );
            }
        }
        for c in &self.circles {
            let _ = writeln!(s, r##"<circle class="critical" cx="{:.6}" cy="{:.6}" r="{:.6}" fill="none" stroke="#bbb"/>"##, c.center.x, c.center.y, c.radius);
        }
        for (k, slab) in self.cells.slabs.iter().enumerate() {
            let (x0, x1) = (lines[k].x, lines[k + 1].x);
            for (b, br) in slab.branches.iter().enumerate() {
                if slab.branch_arc[b].is_none() {
                    continue;
                }
                let c = &self.circles[br.circle];
                let (sx, ex) = if br.upper { (x1, x0) } else { (x0, x1) };
                let _ = writeln!(
                    s,
                    r##"<path class="cell1" d="M {:.6} {:.6} A {:.6} {:.6} 0 0 1 {:.6} {:.6}" fill="none" stroke="#c33" stroke-width="{:.6}"/>"##,
                    sx,
                    branch_y(c, br.upper, sx),
                    c.radius,
                    c.radius,
                    ex,
                    branch_y(c, br.upper, ex),
                    2.0 * unit
                );
            }
        }
        for v in &self.vertices {
            let _ = writeln!(s, r##"<circle class="vertex" cx="{:.6}" cy="{:.6}" r="{:.6}" fill="#222"/>"##, v.point.x, v.point.y, 2.5 * unit);
        }
        for (i, a) in mech.feet().iter().enumerate() {
            let _ = writeln!(
                s,
                r##"<rect class="foot" x="{:.6}" y="{:.6}" width="{:.6}" height="{:.6}" fill="#363"><title>A{}</title></rect>"##,
                a.x - 3.0 * unit,
                a.y - 3.0 * unit,
                6.0 * unit,
                6.0 * unit,
                i + 1
            );
        }
        for (p, q) in &overlay.dashed {
            let _ = writeln!(
                s,
                r##"<line class="overlay" x1="{:.6}" y1="{:.6}" x2="{:.6}" y2="{:.6}" stroke="#36c" stroke-dasharray="{:.6}"/>"##,
                p.x,
                p.y,
                q.x,
                q.y,
                4.0 * unit
            );
        }
        for (p, label) in &overlay.points {
            let _ = writeln!(
                s,
                r##"<circle class="marked" cx="{:.6}" cy="{:.6}" r="{:.6}" fill="#e80"><title>{}</title></circle>"##,
                p.x,
                p.y,
                3.5 * unit,
                xml_escape(label)
            );
        }
        s.push_str("</g>\n</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Extra marks drawn over the work space.
#[derive(Debug, Clone, Default)]
pub struct SvgOverlay {
    pub points: Vec<(Point, String)>,
    pub dashed: Vec<(Point, Point)>,
}

/// Euler characteristic of the spider space by summing over strata of `W`.
pub fn euler_via_strata(mech: &SpiderMechanism) -> Result<EulerCertificate, WorkspaceError> {
    build(mech)?.euler()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lens() -> SpiderMechanism {
        SpiderMechanism::new(vec![Point::ORIGIN, Point::new(4.0, 0.0)], vec![vec![1.5, 1.5]; 2]).unwrap()
    }

    /// Labels of pixel centres on an `n x n` grid over `[lo, hi]^2`.
    fn grid<T>(lo: Point, hi: Point, n: usize, label: impl Fn(Point) -> T) -> Vec<Vec<T>> {
        let (dx, dy) = ((hi.x - lo.x) / n as f64, (hi.y - lo.y) / n as f64);
        (0..n).map(|i| (0..n).map(|j| label(Point::new(lo.x + (i as f64 + 0.5) * dx, lo.y + (j as f64 + 0.5) * dy))).collect()).collect()
    }

    /// Components of `on` (4-connected) minus bounded components of its
    /// complement (8-connected), ignoring specks of at most `speck` pixels:
    /// cusps of faces rasterize into isolated pixels.
    fn raster_euler(on: &[Vec<bool>], speck: usize) -> i64 {
        let n = on.len();
        let count = |want: bool, diag: bool| -> i64 {
            let mut seen = vec![vec![false; n]; n];
            let mut total = 0;
            for i in 0..n {
                for j in 0..n {
                    if seen[i][j] || on[i][j] != want {
                        continue;
                    }
                    seen[i][j] = true;
                    let (mut size, mut border, mut stack) = (0usize, false, vec![(i, j)]);
                    while let Some((a, b)) = stack.pop() {
                        size += 1;
                        border |= a == 0 || b == 0 || a == n - 1 || b == n - 1;
                        for da in -1i64..=1 {
                            for db in -1i64..=1 {
                                if (da == 0 && db == 0) || (!diag && da != 0 && db != 0) {
                                    continue;
                                }
                                let (x, y) = (a as i64 + da, b as i64 + db);
                                if x < 0 || y < 0 || x >= n as i64 || y >= n as i64 {
                                    continue;
                                }
                                let (x, y) = (x as usize, y as usize);
                                if !seen[x][y] && on[x][y] == want {
                                    seen[x][y] = true;
                                    stack.push((x, y));
                                }
                            }
                        }
                    }
                    if size > speck && (want || !border) {
                        total += 1;
                    }
                }
            }
            total
        };
        count(true, false) - count(false, true)
    }

    #[test]
    fn lens_strata() {
        let m = lens();
        let ws = build(&m).unwrap();
        assert_eq!(ws.faces.len(), 1);
        assert_eq!(ws.faces[0].euler, 1);
        assert_eq!(ws.arcs.len(), 2);
        assert_eq!(ws.vertices.len(), 2);
        assert_eq!(ws.euler_of_region(), 1);
        let e = ws.euler().unwrap();
        // chi = chi(F1) chi(F2) - chi(F1) - chi(F2) + 2 with two-point closures
        let (f1, f2) = (2, 2);
        assert_eq!(e.euler, f1 * f2 - f1 - f2 + 2);
        assert_eq!(e.euler, e.cell_sum);
    }

    #[test]
    fn annulus_strata() {
        let m = SpiderMechanism::new(vec![Point::ORIGIN], vec![vec![3.0, 1.0, 1.0]]).unwrap();
        let ws = build(&m).unwrap();
        assert_eq!(ws.faces.len(), 2);
        assert!(ws.faces.iter().all(|f| f.euler == 0 && f.holes == 1));
        assert_eq!(ws.arcs.len(), 3);
        assert!(ws.arcs.iter().all(|a| a.full));
        assert!(ws.vertices.is_empty());
        // the leg aligns on the middle circle without being forced flat
        assert!(matches!(ws.euler(), Err(WorkspaceError::UnsupportedFibers { leg: 0, .. })));
    }

    #[test]
    fn disjoint_zones_are_empty() {
        let m = SpiderMechanism::new(vec![Point::ORIGIN, Point::new(10.0, 0.0)], vec![vec![1.0, 1.0]; 2]).unwrap();
        assert_eq!(build(&m).unwrap_err(), WorkspaceError::EmptyWorkspace);
    }

    #[test]
    fn fiber_examples() {
        let m = lens();
        let f = fiber(&m, Point::new(2.0, 0.0)).unwrap();
        assert_eq!(f.euler, Some(4));
        assert_eq!(f.poincare, Some(Poly::new(vec![4])));
        assert!(matches!(fiber(&m, Point::new(-3.0, 0.0)), Err(WorkspaceError::OutsideWorkspace(_))));
        // on the outer circle of leg 0
        let f = fiber(&m, Point::new(3.0, 0.0)).unwrap();
        assert!(!f.factors[0].polygon.generic);
        assert_eq!(f.euler, Some(2));
        let one = SpiderMechanism::new(vec![Point::ORIGIN], vec![vec![1.0, 1.0]]).unwrap();
        let f = fiber(&one, Point::ORIGIN).unwrap();
        assert!(f.factors[0].rotation_circle);
        assert_eq!(f.euler, Some(0));
    }

    #[test]
    fn single_leg_torus() {
        for leg in [vec![1.0, 0.6], vec![1.0, 1.0], vec![0.7, 1.3]] {
            let m = SpiderMechanism::new(vec![Point::new(0.3, -0.2)], vec![leg]).unwrap();
            let e = euler_via_strata(&m).unwrap();
            assert_eq!((e.euler, e.cell_sum), (0, 0));
        }
    }

    #[test]
    fn two_leg_lens_formula() {
        // lens bounded by the two maximal circles, p1, p2 in {3, 4}
        for (p1, p2) in [(3, 3), (3, 4), (4, 4), (2, 3)] {
            let l1 = vec![1.0; p1];
            let l2 = vec![1.0; p2];
            let d = p1 as f64 + p2 as f64 - 0.5;
            let m = SpiderMechanism::new(vec![Point::ORIGIN, Point::new(d, 0.0)], vec![l1, l2]).unwrap();
            let ws = build(&m).unwrap();
            if p1 >= 3 && p2 >= 3 {
                // aligned interior factors on the boundary arcs are flat at R: points
                let e = ws.euler().unwrap();
                assert_eq!(e.euler, 1 + if (p1 + p2) % 2 == 0 { 1 } else { -1 }, "{p1} {p2}");
                assert_eq!(e.euler, e.cell_sum);
            }
        }
    }

    #[test]
    fn region_euler_matches_raster() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 8 {
            let m = SpiderMechanism::random(&mut rng, &[2, 2, 3], (-1.0, 1.0), (0.5, 1.5));
            let Ok(ws) = build(&m) else { continue };
            let eps = m.eps();
            // bounding box of W: intersection of the outer discs' boxes
            let (mut lo, mut hi) = (Point::new(f64::MIN, f64::MIN), Point::new(f64::MAX, f64::MAX));
            for z in m.zones() {
                let a = m.foot(z.foot);
                lo = Point::new(lo.x.max(a.x - z.outer), lo.y.max(a.y - z.outer));
                hi = Point::new(hi.x.min(a.x + z.outer), hi.y.min(a.y + z.outer));
            }
            let pad = 0.01 * (hi - lo).norm();
            let (lo, hi) = (lo - Point::new(pad, pad), hi + Point::new(pad, pad));
            // features thinner than a pixel make the raster unreliable;
            // only instances on which two resolutions agree are compared
            let face_rasters = |n: usize| -> (i64, Vec<i64>) {
                let inside = grid(lo, hi, n, |p| m.in_workspace(p, eps));
                let labels = grid(lo, hi, n, |p| ws.locate(p, 0.0));
                let faces = (0..ws.faces.len())
                    .map(|i| {
                        let on: Vec<Vec<bool>> = labels.iter().map(|r| r.iter().map(|&s| s == Stratum::Face(i)).collect()).collect();
                        raster_euler(&on, 3)
                    })
                    .collect();
                (raster_euler(&inside, 3), faces)
            };
            let coarse = face_rasters(400);
            if coarse != face_rasters(600) {
                continue;
            }
            assert_eq!(ws.euler_of_region(), coarse.0, "{:?} {:?}", m.to_document(), ws.faces.iter().map(|f| (f.euler, f.punctures.len())).collect::<Vec<_>>());
            let exact: Vec<i64> = ws.faces.iter().map(|f| f.euler).collect();
            assert_eq!(exact, coarse.1, "{:?}", m.to_document());
            checked += 1;
        }
    }

    #[test]
    fn refinement_leaves_euler_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 10 {
            let m = SpiderMechanism::random(&mut rng, &[2, 2, 2], (-1.0, 1.0), (0.5, 1.5));
            let Ok(ws) = build(&m) else { continue };
            let c = Point::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let refined = build_with_extra(&m, &[(c, rng.gen_range(0.3..2.0))]).unwrap();
            let (a, b) = (ws.euler().unwrap(), refined.euler().unwrap());
            assert_eq!(a.euler, b.euler);
            assert_eq!(a.euler, a.cell_sum);
            assert_eq!(ws.euler_of_region(), refined.euler_of_region());
            checked += 1;
        }
    }

    #[test]
    fn punctured_face() {
        // closable 2-edge legs whose feet lie inside W
        let m = SpiderMechanism::new(vec![Point::ORIGIN, Point::new(0.5, 0.0)], vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let ws = build(&m).unwrap();
        let punctures: usize = ws.faces.iter().map(|f| f.punctures.len()).sum();
        assert_eq!(punctures, 2);
        let e = ws.euler().unwrap();
        assert_eq!(e.euler, e.cell_sum);
    }

    #[test]
    fn svg_lists_every_circle() {
        let m = lens();
        let ws = build(&m).unwrap();
        let svg = ws.to_svg(&m, &SvgOverlay::default());
        assert_eq!(svg.matches(r#"class="critical""#).count(), ws.circles.len());
        assert_eq!(svg.matches(r#"class="vertex""#).count(), ws.vertices.len());
        assert!(svg.ends_with("</svg>\n"));
    }
}
