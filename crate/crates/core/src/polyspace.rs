//! Planar polygon spaces: closed chains of bars modulo orientation-preserving
//! isometries. Betti numbers come from counting short subsets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::MAX_EDGES;
use crate::poly::Poly;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyspaceError {
    #[error("polygon needs at least 3 sides, got {0}")]
    TooFewSides(usize),
    #[error("polygon has {0} sides; exhaustive subset counting is capped at {cap}", cap = MAX_EDGES + 1)]
    TooManySides(usize),
    #[error("side lengths admit a collinear configuration")]
    NonGeneric,
    #[error("longest side exceeds the sum of the others; the space is empty")]
    EmptySpace,
}

/// Minimum over sign vectors of `|sum eps_j l_j|`, by Gray code.
fn min_signed_sum(lengths: &[f64]) -> f64 {
    let p = lengths.len();
    if p == 0 {
        return 0.0;
    }
    // fix eps_0 = +1; the rest start at +1
    let mut s: f64 = lengths.iter().sum();
    let mut best = s.abs();
    let mut signs = vec![1.0; p];
    for g in 1u64..(1u64 << (p - 1)) {
        let bit = g.trailing_zeros() as usize + 1;
        signs[bit] = -signs[bit];
        s += 2.0 * signs[bit] * lengths[bit];
        best = best.min(s.abs());
    }
    best
}

/// Whether no configuration of the polygon fits on a line. `tol` is relative
/// to the perimeter.
pub fn is_generic(lengths: &[f64], tol: f64) -> bool {
    let total: f64 = lengths.iter().sum();
    min_signed_sum(lengths) > tol * total
}

fn check(lengths: &[f64], tol: f64) -> Result<(), PolyspaceError> {
    let p = lengths.len();
    if p < 3 {
        return Err(PolyspaceError::TooFewSides(p));
    }
    if p > MAX_EDGES + 1 {
        return Err(PolyspaceError::TooManySides(p));
    }
    if !is_generic(lengths, tol) {
        return Err(PolyspaceError::NonGeneric);
    }
    let total: f64 = lengths.iter().sum();
    let longest = lengths.iter().copied().fold(0.0, f64::max);
    if 2.0 * longest > total {
        return Err(PolyspaceError::EmptySpace);
    }
    Ok(())
}

fn short_counts(lengths: &[f64], m: usize) -> Vec<u64> {
    let p = lengths.len();
    let total: f64 = lengths.iter().sum();
    let others: Vec<usize> = (0..p).filter(|&j| j != m).collect();
    let mut a = vec![0u64; p];
    for mask in 0u64..(1u64 << (p - 1)) {
        let mut s = lengths[m];
        for (b, &j) in others.iter().enumerate() {
            if mask >> b & 1 == 1 {
                s += lengths[j];
            }
        }
        if 2.0 * s < total {
            a[mask.count_ones() as usize] += 1;
        }
    }
    a
}

fn betti_from_counts(a: &[u64], p: usize) -> Vec<u64> {
    let d = p - 3;
    (0..=d).map(|k| a[k] + a[d - k]).collect()
}

/// Betti numbers `b_0..b_{p-3}` of a generic, nonempty polygon space.
pub fn betti(lengths: &[f64], tol: f64) -> Result<Vec<u64>, PolyspaceError> {
    check(lengths, tol)?;
    let p = lengths.len();
    let longest = lengths.iter().copied().fold(0.0, f64::max);
    let m = lengths.iter().position(|&l| l == longest).unwrap_or(0);
    let b = betti_from_counts(&short_counts(lengths, m), p);
    #[cfg(debug_assertions)]
    if let Some(m2) = lengths.iter().rposition(|&l| l == longest).filter(|&m2| m2 != m) {
        debug_assert_eq!(b, betti_from_counts(&short_counts(lengths, m2), p));
    }
    Ok(b)
}

pub fn euler(lengths: &[f64], tol: f64) -> Result<i64, PolyspaceError> {
    Ok(alternating(&betti(lengths, tol)?))
}

fn alternating(b: &[u64]) -> i64 {
    b.iter().enumerate().map(|(k, &x)| if k % 2 == 0 { x as i64 } else { -(x as i64) }).sum()
}

/// Topology of one polygon space, as far as it is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonSpaceDescriptor {
    pub lengths: Vec<f64>,
    pub generic: bool,
    pub empty: bool,
    /// `p - 3`, or 0 for the one-point spaces below dimension zero.
    pub dim: usize,
    pub betti: Option<Vec<u64>>,
    pub poincare: Option<Poly>,
    /// Known even for some singular spaces: a polygon forced flat (one side
    /// equal to the sum of the others) is a single point.
    pub euler: Option<i64>,
}

impl PolygonSpaceDescriptor {
    pub fn new(lengths: &[f64], tol: f64) -> Self {
        let p = lengths.len();
        let total: f64 = lengths.iter().sum();
        let longest = lengths.iter().copied().fold(0.0, f64::max);
        let slack = 2.0 * longest - total;
        let band = tol * total;
        let mut d = PolygonSpaceDescriptor {
            lengths: lengths.to_vec(),
            generic: false,
            empty: false,
            dim: p.saturating_sub(3),
            betti: None,
            poincare: None,
            euler: None,
        };
        if slack > band {
            d.empty = true;
            d.generic = is_generic(lengths, tol);
            d.betti = Some(Vec::new());
            d.poincare = Some(Poly::zero());
            d.euler = Some(0);
        } else if slack.abs() <= band {
            // the longest side spans the rest: only the flat configuration
            d.dim = 0;
            d.euler = Some(1);
        } else if p < 3 {
            // unreachable for positive lengths: a 2-gon is either flat or empty
            d.euler = Some(1);
        } else if let Ok(b) = betti(lengths, tol) {
            d.generic = true;
            d.euler = Some(alternating(&b));
            d.poincare = Some(Poly::new(b.iter().map(|&x| x as i64).collect()));
            d.betti = Some(b);
        }
        d
    }

    /// A single point.
    pub fn is_point(&self) -> bool {
        self.dim == 0 && self.euler == Some(1) && !self.empty
    }
}

/// Closure of a leg whose tip sits at distance `closing` from its foot: the
/// polygon `(l_1, .., l_p, closing)`. At `closing = 0` this is the closed leg
/// itself; the caller accounts for the extra circle of rotations.
pub fn closure_descriptor(leg: &[f64], closing: f64, tol: f64) -> PolygonSpaceDescriptor {
    let total: f64 = leg.iter().sum();
    if closing <= tol * total {
        return PolygonSpaceDescriptor::new(leg, tol);
    }
    let mut lengths = leg.to_vec();
    lengths.push(closing);
    PolygonSpaceDescriptor::new(&lengths, tol)
}

/// Independent component count for a quadrilateral: sweep the diagonal
/// `|V_1 V_3|` over its feasible interval. Each of the two triangles it cuts
/// off has two mirror states; they merge where that triangle degenerates.
pub fn quadrilateral_components_sweep(l: [f64; 4]) -> usize {
    let lo1 = (l[0] - l[1]).abs();
    let lo2 = (l[2] - l[3]).abs();
    let hi1 = l[0] + l[1];
    let hi2 = l[2] + l[3];
    let lo = lo1.max(lo2);
    let hi = hi1.min(hi2);
    if lo >= hi {
        return 0;
    }
    // branches indexed by (mirror state of triangle 1, of triangle 2)
    let mut parent = [0usize, 1, 2, 3];
    fn find(p: &mut [usize; 4], i: usize) -> usize {
        if p[i] != i {
            let r = find(p, p[i]);
            p[i] = r;
        }
        p[i]
    }
    let mut merge_triangle = |k: usize| {
        for other in 0..2 {
            let (u, v) = if k == 0 { (other, 2 + other) } else { (2 * other, 2 * other + 1) };
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            parent[ru] = rv;
        }
    };
    // branch index: 2*s1 + s2 with s in {0,1}; triangle 1 degenerating joins
    // s1 = 0 with s1 = 1 for each s2
    merge_triangle(if lo1 >= lo2 { 0 } else { 1 });
    merge_triangle(if hi1 <= hi2 { 0 } else { 1 });
    (0..4).filter(|&i| find(&mut parent, i) == i).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    #[test]
    fn genericity_examples() {
        assert!(!is_generic(&[1.0, 1.0, 1.0, 1.0], TOL));
        assert!(is_generic(&[1.0; 5], TOL));
        assert!(is_generic(&[2.5, 1.0, 1.0, 1.0], TOL));
    }

    #[test]
    fn betti_examples() {
        assert_eq!(betti(&[1.0; 5], TOL).unwrap(), vec![1, 8, 1]);
        assert_eq!(euler(&[1.0; 5], TOL).unwrap(), -6);
        assert_eq!(betti(&[1.0, 1.0, 1.0, 1.0, 4.0 - 1e-3], TOL).unwrap(), vec![1, 0, 1]);
        assert_eq!(betti(&[2.0, 2.0, 2.0, 1.0], TOL).unwrap(), vec![2, 2]);
        assert_eq!(euler(&[1.2, 1.0, 1.0, 1.0], TOL).unwrap(), 0);
        assert_eq!(betti(&[1.0, 1.0, 1.5], TOL).unwrap(), vec![2]);
        assert_eq!(betti(&[1.0, 1.0, 1.0, 1.0], TOL), Err(PolyspaceError::NonGeneric));
        assert_eq!(betti(&[5.0, 1.0, 1.0], TOL), Err(PolyspaceError::EmptySpace));
    }

    #[test]
    fn closure_examples() {
        let d = closure_descriptor(&[1.5, 1.5], 2.0, TOL);
        assert_eq!(d.betti, Some(vec![2]));
        assert!(closure_descriptor(&[3.0, 1.0, 1.0], 6.0, TOL).empty);
        let d = closure_descriptor(&[1.0, 1.0, 1.0], 1.0, TOL);
        assert!(!d.generic && d.betti.is_none());
        // flat at the outer radius: one point
        assert!(closure_descriptor(&[1.0, 2.0, 0.5], 3.5, TOL).is_point());
        assert!(closure_descriptor(&[1.0, 0.6], 0.4, TOL).is_point());
    }

    fn random_generic(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
        loop {
            let l: Vec<f64> = (0..p).map(|_| rng.gen_range(0.2..2.0)).collect();
            if check(&l, 1e-6).is_ok() {
                return l;
            }
        }
    }

    #[test]
    fn palindromic_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = rng.gen_range(3..=8);
            let mut l = random_generic(&mut rng, p);
            let b = betti(&l, TOL).unwrap();
            let mut r = b.clone();
            r.reverse();
            assert_eq!(b, r);
            l.rotate_left(1);
            l.swap(0, p - 1);
            assert_eq!(betti(&l, TOL).unwrap(), b);
        }
    }

    #[test]
    fn quadrilateral_b0_matches_sweep() {
        assert_eq!(quadrilateral_components_sweep([2.0, 2.0, 2.0, 1.0]), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let l = random_generic(&mut rng, 4);
            let b = betti(&l, TOL).unwrap();
            assert_eq!(b[0] as usize, quadrilateral_components_sweep([l[0], l[1], l[2], l[3]]), "{l:?}");
        }
    }
}
