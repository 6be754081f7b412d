//! Plane geometry primitives shared by every module.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", from = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Unit vector at angle `theta`.
    pub fn polar(theta: f64) -> Self {
        Point::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Point {
        let n = self.norm();
        Point::new(self.x / n, self.y / n)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Intersection points of two circles, ordered so that the first lies to the
/// left of the directed line `c1 -> c2`. Tangent circles yield one point,
/// concentric or separated circles none.
pub fn circle_intersections(c1: Point, r1: f64, c2: Point, r2: f64, eps: f64) -> Vec<Point> {
    let d_vec = c2 - c1;
    let d = d_vec.norm();
    if d < eps {
        return Vec::new();
    }
    if d > r1 + r2 + eps || d < (r1 - r2).abs() - eps {
        return Vec::new();
    }
    let ex = d_vec * (1.0 / d);
    let ey = ex.perp();
    let t = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
    let h2 = r1 * r1 - t * t;
    if h2 <= eps * eps.max(r1) {
        return vec![c1 + ex * t];
    }
    let h = h2.sqrt();
    vec![c1 + ex * t + ey * h, c1 + ex * t - ey * h]
}

/// Points where the line `p + s*dir` meets the circle, as line parameters
/// sorted ascending. `dir` need not be unit length.
pub fn line_circle_params(p: Point, dir: Point, c: Point, r: f64) -> Vec<f64> {
    let a = dir.norm2();
    let f = p - c;
    let b = 2.0 * f.dot(dir);
    let cc = f.norm2() - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = if q == 0.0 { vec![0.0] } else { vec![q / a, cc / q] };
    roots.sort_by(|x, y| x.total_cmp(y));
    if disc == 0.0 {
        roots.truncate(1);
    }
    roots
}

/// Distance from `q` to the infinite line through `a` and `b`.
pub fn dist_to_line(q: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let n = d.norm();
    if n == 0.0 {
        return q.dist(a);
    }
    (d.cross(q - a)).abs() / n
}

/// Circumcenter of a triangle, `None` when the points are collinear.
pub fn circumcenter(a: Point, b: Point, c: Point) -> Option<Point> {
    let bb = b - a;
    let cc = c - a;
    let d = 2.0 * bb.cross(cc);
    if d.abs() < 1e-300 {
        return None;
    }
    let b2 = bb.norm2();
    let c2 = cc.norm2();
    let ux = (cc.y * b2 - bb.y * c2) / d;
    let uy = (bb.x * c2 - cc.x * b2) / d;
    Some(a + Point::new(ux, uy))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lens_intersections() {
        let pts = circle_intersections(Point::new(0.0, 0.0), 3.0, Point::new(4.0, 0.0), 3.0, 1e-12);
        assert_eq!(pts.len(), 2);
        assert!((pts[0].x - 2.0).abs() < 1e-12);
        assert!((pts[0].y - 5f64.sqrt()).abs() < 1e-12);
        assert!(pts[1].y < 0.0);
    }

    #[test]
    fn separated_and_nested_circles() {
        assert!(circle_intersections(Point::ORIGIN, 1.0, Point::new(5.0, 0.0), 1.0, 1e-12).is_empty());
        assert!(circle_intersections(Point::ORIGIN, 5.0, Point::new(1.0, 0.0), 1.0, 1e-12).is_empty());
    }

    #[test]
    fn line_meets_unit_circle() {
        let ts = line_circle_params(Point::new(-2.0, 0.0), Point::new(1.0, 0.0), Point::ORIGIN, 1.0);
        assert_eq!(ts.len(), 2);
        assert!((ts[0] - 1.0).abs() < 1e-14 && (ts[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn circumcenter_of_right_triangle_is_hypotenuse_midpoint() {
        let c = circumcenter(Point::ORIGIN, Point::new(1.0, 0.0), Point::new(0.0, 1.0)).unwrap();
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 0.5).abs() < 1e-15);
    }
}
