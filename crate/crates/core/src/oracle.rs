//! Numerical critical-point search on the spider space, independent of the
//! index formulas.
//!
//! Coordinates are absolute edge angles. The body is the tip of leg 0, and
//! every other leg must close on it. Potentials are quadratic in the body
//! position, optionally with extra constraints linear in it (the walls of a
//! Voronoi diagram). Critical points solve the Lagrange system by damped
//! Gauss–Newton from random feasible starts; the reduced Hessian on the
//! constraint null space gives the signature.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;
use crate::mechanism::SpiderMechanism;
use crate::morse::CriticalComponent;

pub const ETA_FEAS: f64 = 1e-10;
pub const ETA_KKT: f64 = 1e-9;
pub const TAU_EIG: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no feasible configuration after {0} attempts")]
    SamplingExhausted(usize),
}

/// A point of the spider space: absolute angles of every edge, leg by leg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub angles: Vec<Vec<f64>>,
}

/// Potential on the body position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Potential {
    SqDist {
        z: Point,
    },
    Hooke {
        weights: Vec<f64>,
    },
    /// `|X - s_a|^2` on the face of the Voronoi diagram where exactly the
    /// `active` sites are nearest; one active site is an open cell.
    Voronoi {
        sites: Vec<Point>,
        active: Vec<usize>,
    },
}

/// `phi(X) = s |X|^2 - 2 b.X + c`, with constraints `q.X + r = 0`.
#[derive(Debug, Clone)]
struct Quadratic {
    s: f64,
    b: Point,
    c: f64,
    walls: Vec<(Point, f64)>,
}

impl Potential {
    fn quadratic(&self, mech: &SpiderMechanism) -> Quadratic {
        match self {
            Potential::SqDist { z } => Quadratic { s: 1.0, b: *z, c: z.norm2(), walls: Vec::new() },
            Potential::Hooke { weights } => {
                let s: f64 = weights.iter().sum();
                let b = mech.feet().iter().zip(weights).fold(Point::ORIGIN, |acc, (&a, &w)| acc + a * w);
                let c = mech.feet().iter().zip(weights).map(|(&a, &w)| w * a.norm2()).sum();
                Quadratic { s, b, c, walls: Vec::new() }
            }
            Potential::Voronoi { sites, active } => {
                let s0 = sites[active[0]];
                // f_0 - f_k = 2 (s_k - s_0).X + |s_0|^2 - |s_k|^2
                let walls = active[1..].iter().map(|&k| ((sites[k] - s0) * 2.0, s0.norm2() - sites[k].norm2())).collect();
                Quadratic { s: 1.0, b: s0, c: s0.norm2(), walls }
            }
        }
    }

    /// Number of active pieces minus one, added to the Hessian index.
    fn index_offset(&self) -> usize {
        match self {
            Potential::Voronoi { active, .. } => active.len() - 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature {
    pub neg: usize,
    pub zero: usize,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericCriticalPoint {
    pub configuration: Configuration,
    pub x: Point,
    pub value: f64,
    pub eigenvalues: Vec<f64>,
    pub signature: Signature,
    /// `neg`, plus the number of active Voronoi pieces minus one.
    pub index: usize,
    pub kkt: f64,
    pub feasibility: f64,
    /// Convex weights of the active sites, for Voronoi faces.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub cluster: usize,
}

impl NumericCriticalPoint {
    /// Local dimension of the critical manifold.
    pub fn dim(&self) -> usize {
        self.signature.zero
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { starts: 400, seed: crate::mechanism::DEFAULT_SEED, max_iter: 400 }
    }
}

/// Layout of the unknowns: angles, then closure multipliers, then wall
/// multipliers.
struct Model<'a> {
    mech: &'a SpiderMechanism,
    q: Quadratic,
    offsets: Vec<usize>,
    n_angles: usize,
}

struct Eval {
    x: Point,
    /// Constraint values: closure of legs 1.. (x then y), then walls.
    c: DVector<f64>,
    /// Constraint Jacobian, one row per constraint.
    jc: DMatrix<f64>,
    /// Gradient of the potential in the angles.
    grad: DVector<f64>,
    /// Diagonal second derivatives: of X (x, y) and of each constraint.
    d2x: [DVector<f64>; 2],
    d2c: Vec<DVector<f64>>,
    /// Columns of dX/dtheta.
    dx: DMatrix<f64>,
}

impl<'a> Model<'a> {
    fn new(mech: &'a SpiderMechanism, pot: &Potential) -> Self {
        let mut offsets = Vec::with_capacity(mech.n_legs());
        let mut n = 0;
        for i in 0..mech.n_legs() {
            offsets.push(n);
            n += mech.leg(i).len();
        }
        Model { mech, q: pot.quadratic(mech), offsets, n_angles: n }
    }

    fn n_closure(&self) -> usize {
        2 * (self.mech.n_legs() - 1)
    }

    fn n_cons(&self) -> usize {
        self.n_closure() + self.q.walls.len()
    }

    fn tip(&self, leg: usize, th: &[f64]) -> Point {
        let o = self.offsets[leg];
        self.mech.leg(leg).iter().enumerate().fold(self.mech.foot(leg), |acc, (j, &l)| acc + Point::polar(th[o + j]) * l)
    }

    fn phi(&self, x: Point) -> f64 {
        self.q.s * x.norm2() - 2.0 * self.q.b.dot(x) + self.q.c
    }

    fn eval(&self, th: &[f64]) -> Eval {
        let (n, nc) = (self.n_angles, self.n_cons());
        let nl = self.mech.n_legs();
        let x = self.tip(0, th);
        let mut dx = DMatrix::zeros(2, n);
        let mut d2x = [DVector::zeros(n), DVector::zeros(n)];
        for (j, &l) in self.mech.leg(0).iter().enumerate() {
            let (s, c) = th[j].sin_cos();
            dx[(0, j)] = -l * s;
            dx[(1, j)] = l * c;
            d2x[0][j] = -l * c;
            d2x[1][j] = -l * s;
        }
        let mut cv = DVector::zeros(nc);
        let mut jc = DMatrix::zeros(nc, n);
        let mut d2c = vec![DVector::zeros(n); nc];
        for i in 1..nl {
            let r = 2 * (i - 1);
            let t = self.tip(i, th) - x;
            cv[r] = t.x;
            cv[r + 1] = t.y;
            let o = self.offsets[i];
            for (j, &l) in self.mech.leg(i).iter().enumerate() {
                let (s, c) = th[o + j].sin_cos();
                jc[(r, o + j)] = -l * s;
                jc[(r + 1, o + j)] = l * c;
                d2c[r][o + j] = -l * c;
                d2c[r + 1][o + j] = -l * s;
            }
            for j in 0..self.mech.leg(0).len() {
                jc[(r, j)] -= dx[(0, j)];
                jc[(r + 1, j)] -= dx[(1, j)];
                d2c[r][j] -= d2x[0][j];
                d2c[r + 1][j] -= d2x[1][j];
            }
        }
        for (w, &(qv, rv)) in self.q.walls.iter().enumerate() {
            let r = self.n_closure() + w;
            cv[r] = qv.dot(x) + rv;
            for j in 0..n {
                jc[(r, j)] = qv.x * dx[(0, j)] + qv.y * dx[(1, j)];
                d2c[r][j] = qv.x * d2x[0][j] + qv.y * d2x[1][j];
            }
        }
        let gphi = x * (2.0 * self.q.s) - self.q.b * 2.0;
        let grad = dx.transpose() * DVector::from_vec(vec![gphi.x, gphi.y]);
        Eval { x, c: cv, jc, grad, d2x, d2c, dx }
    }

    /// Hessian of the Lagrangian `phi(X) - nu.c` in the angles.
    fn hess_lagrangian(&self, e: &Eval, nu: &[f64]) -> DMatrix<f64> {
        let gphi = e.x * (2.0 * self.q.s) - self.q.b * 2.0;
        let mut h = e.dx.transpose() * &e.dx * (2.0 * self.q.s);
        for k in 0..self.n_angles {
            let mut d = gphi.x * e.d2x[0][k] + gphi.y * e.d2x[1][k];
            for (m, &v) in nu.iter().enumerate() {
                d -= v * e.d2c[m][k];
            }
            h[(k, k)] += d;
        }
        h
    }

    /// KKT residual `(grad - Jc^T nu, c)` and its Jacobian.
    fn kkt(&self, u: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (n, nc) = (self.n_angles, self.n_cons());
        let th = &u.as_slice()[..n];
        let nu = &u.as_slice()[n..];
        let e = self.eval(th);
        let nuv = DVector::from_column_slice(nu);
        let mut f = DVector::zeros(n + nc);
        f.rows_mut(0, n).copy_from(&(&e.grad - e.jc.transpose() * &nuv));
        f.rows_mut(n, nc).copy_from(&e.c);
        let mut df = DMatrix::zeros(n + nc, n + nc);
        df.view_mut((0, 0), (n, n)).copy_from(&self.hess_lagrangian(&e, nu));
        df.view_mut((0, n), (n, nc)).copy_from(&(-e.jc.transpose()));
        df.view_mut((n, 0), (nc, n)).copy_from(&e.jc);
        (f, df)
    }

    fn configuration(&self, th: &[f64]) -> Configuration {
        let angles = (0..self.mech.n_legs())
            .map(|i| {
                let o = self.offsets[i];
                th[o..o + self.mech.leg(i).len()].iter().map(|a| a.rem_euclid(std::f64::consts::TAU)).collect()
            })
            .collect();
        Configuration { angles }
    }
}

/// Damped Gauss–Newton on `r(u) = 0`, then a few undamped pseudo-inverse
/// steps to polish.
fn levenberg_marquardt(mut u: DVector<f64>, max_iter: usize, tol: f64, f: impl Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>)) -> DVector<f64> {
    let mut lambda = 1e-3;
    let (mut r, mut jac) = f(&u);
    let mut cost = r.norm_squared();
    for _ in 0..max_iter {
        if cost.sqrt() < tol {
            break;
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &r;
        let mut damped = a.clone();
        for k in 0..damped.nrows() {
            damped[(k, k)] += lambda * (a[(k, k)] + 1e-12);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
            lambda *= 10.0;
            continue;
        };
        let cand = &u + &step;
        let (r2, j2) = f(&cand);
        let c2 = r2.norm_squared();
        if c2 < cost {
            u = cand;
            r = r2;
            jac = j2;
            cost = c2;
            lambda = (lambda / 3.0).max(1e-15);
            if step.norm() < 1e-15 {
                break;
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    for _ in 0..4 {
        let svd = jac.clone().svd(true, true);
        let Ok(step) = svd.solve(&(-&r), 1e-10 * svd.singular_values.max()) else { break };
        let cand = &u + &step;
        let (r2, j2) = f(&cand);
        if r2.norm_squared() >= cost {
            break;
        }
        u = cand;
        r = r2;
        jac = j2;
        cost = r.norm_squared();
    }
    u
}

/// Random angles pulled onto the closure constraints.
pub fn sample_configuration(mech: &SpiderMechanism, rng: &mut impl Rng) -> Result<Configuration, OracleError> {
    let model = Model::new(mech, &Potential::SqDist { z: Point::ORIGIN });
    sample_angles(&model, rng).map(|th| model.configuration(&th))
}

const SAMPLE_ATTEMPTS: usize = 200;

fn sample_angles(model: &Model, rng: &mut impl Rng) -> Result<Vec<f64>, OracleError> {
    let n = model.n_angles;
    let nc = model.n_closure();
    for _ in 0..SAMPLE_ATTEMPTS {
        let th0 = DVector::from_fn(n, |_, _| rng.gen_range(0.0..std::f64::consts::TAU));
        if nc == 0 {
            return Ok(th0.as_slice().to_vec());
        }
        let th = levenberg_marquardt(th0, 200, ETA_FEAS * 1e-2, |th| {
            let e = model.eval(th.as_slice());
            (e.c.rows(0, nc).into_owned(), e.jc.rows(0, nc).into_owned())
        });
        let e = model.eval(th.as_slice());
        if e.c.rows(0, nc).norm() < ETA_FEAS {
            return Ok(th.as_slice().to_vec());
        }
    }
    Err(OracleError::SamplingExhausted(SAMPLE_ATTEMPTS))
}

/// Orthonormal basis of the null space of `j` (`cols x k`).
fn null_space(j: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if j.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // right singular vectors of the padded square matrix
    let mut sq = DMatrix::zeros(n.max(j.nrows()), n);
    sq.view_mut((0, 0), (j.nrows(), n)).copy_from(j);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.max().max(1e-300);
    let cols: Vec<DVector<f64>> = (0..n).filter(|&k| svd.singular_values[k] <= 1e-8 * smax).map(|k| vt.row(k).transpose()).collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

fn one_start(model: &Model, pot: &Potential, seed: u64, start: usize, max_iter: usize) -> Option<NumericCriticalPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    let th = sample_angles(model, &mut rng).ok()?;
    let (n, nc) = (model.n_angles, model.n_cons());
    // least-squares multipliers for the start
    let e = model.eval(&th);
    let nu0 = if nc > 0 {
        let jt = e.jc.transpose();
        jt.svd(true, true).solve(&e.grad, 1e-12).unwrap_or_else(|_| DVector::zeros(nc))
    } else {
        DVector::zeros(0)
    };
    let mut u0 = DVector::zeros(n + nc);
    u0.rows_mut(0, n).copy_from_slice(&th);
    u0.rows_mut(n, nc).copy_from(&nu0);
    let u = levenberg_marquardt(u0, max_iter, ETA_KKT * 1e-3, |u| model.kkt(u));
    let (r, _) = model.kkt(&u);
    let e = model.eval(&u.as_slice()[..n]);
    let feas = if nc > 0 { e.c.norm() } else { 0.0 };
    let kkt = r.norm();
    if !(kkt < ETA_KKT && feas < ETA_FEAS) {
        return None;
    }
    let nu = &u.as_slice()[n..];
    let weights = match pot {
        Potential::Voronoi { sites, active } => {
            // grad f_0 - sum mu_k grad (f_0 - f_k): weights (1 - sum mu, mu_k)
            let mu = &nu[model.n_closure()..];
            let mut w = vec![1.0 - mu.iter().sum::<f64>()];
            w.extend_from_slice(mu);
            if w.iter().any(|&v| v <= 1e-9) {
                return None;
            }
            // the active sites must be exactly the nearest ones
            let d0 = e.x.dist(sites[active[0]]);
            let margin = 1e-7 * model.mech.scale();
            let others_far = (0..sites.len()).filter(|k| !active.contains(k)).all(|k| e.x.dist(sites[k]) > d0 + margin);
            if !others_far {
                return None;
            }
            Some(w)
        }
        _ => None,
    };
    let h = model.hess_lagrangian(&e, nu);
    let z = null_space(&e.jc, n);
    let hr = z.transpose() * h * &z;
    let mut eig: Vec<f64> = if hr.nrows() == 0 { Vec::new() } else { SymmetricEigen::new(hr).eigenvalues.as_slice().to_vec() };
    eig.sort_by(|a, b| a.total_cmp(b));
    let radius = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let band = TAU_EIG * radius.max(1e-300);
    let signature = Signature {
        neg: eig.iter().filter(|&&v| v < -band).count(),
        zero: eig.iter().filter(|&&v| v.abs() <= band).count(),
        pos: eig.iter().filter(|&&v| v > band).count(),
    };
    Some(NumericCriticalPoint {
        configuration: model.configuration(&u.as_slice()[..n]),
        x: e.x,
        value: model.phi(e.x),
        eigenvalues: eig,
        signature,
        index: signature.neg + pot.index_offset(),
        kkt,
        feasibility: feas,
        weights,
        cluster: 0,
    })
}

fn angle_gap(a: &Configuration, b: &Configuration) -> f64 {
    a.angles
        .iter()
        .flatten()
        .zip(b.angles.iter().flatten())
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(std::f64::consts::TAU);
            d.min(std::f64::consts::TAU - d)
        })
        .fold(0.0, f64::max)
}

/// Group points by body position, value and signature; isolated points
/// are further split by configuration.
fn cluster(mech: &SpiderMechanism, pts: Vec<NumericCriticalPoint>) -> Vec<NumericCriticalPoint> {
    let tol = 1e-6 * mech.scale();
    let mut reps: Vec<NumericCriticalPoint> = Vec::new();
    for mut p in pts {
        let found = reps.iter().position(|r| {
            r.signature == p.signature
                && r.x.dist(p.x) <= tol
                && (r.value - p.value).abs() <= tol * (1.0 + r.value.abs())
                && (p.dim() > 0 || angle_gap(&r.configuration, &p.configuration) <= 1e-5)
        });
        if found.is_none() {
            p.cluster = reps.len();
            reps.push(p);
        }
    }
    reps
}

/// Multi-start search. Each start draws from its own stream of the seeded
/// generator, so the output does not depend on the thread count.
pub fn find_critical(mech: &SpiderMechanism, pot: &Potential, opts: &OracleOptions) -> Vec<NumericCriticalPoint> {
    let model = Model::new(mech, pot);
    let pts: Vec<NumericCriticalPoint> = (0..opts.starts).into_par_iter().filter_map(|s| one_start(&model, pot, opts.seed, s, opts.max_iter)).collect();
    cluster(mech, pts)
}

/// Search every face of the Voronoi diagram of `sites` (cells, edges,
/// vertices), `starts` per face.
pub fn find_voronoi_critical(mech: &SpiderMechanism, structure: &crate::voronoi::VoronoiStructure, opts: &OracleOptions) -> Vec<NumericCriticalPoint> {
    let sites = structure.sites.clone();
    let mut faces: Vec<Vec<usize>> = (0..sites.len()).map(|i| vec![i]).collect();
    faces.extend(structure.edges.iter().map(|e| vec![e.sites.0, e.sites.1]));
    faces.extend(structure.triangles.iter().map(|t| t.sites.to_vec()));
    let mut all = Vec::new();
    for (f, active) in faces.into_iter().enumerate() {
        let pot = Potential::Voronoi { sites: sites.clone(), active };
        let o = OracleOptions { seed: opts.seed.wrapping_add(f as u64), ..*opts };
        all.extend(find_critical(mech, &pot, &o));
    }
    let mut out = Vec::new();
    for mut p in all {
        p.cluster = out.len();
        out.push(p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Matched,
    IndexMismatch,
    /// every cluster found has the right signature, but too few pieces
    /// turned up (more starts usually fix this)
    MissingPieces,
    UnmatchedPredicted,
    UnmatchedNumeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub verdict: Verdict,
    pub x: Point,
    /// Index into the predicted list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<usize>,
    pub clusters: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<(usize, usize)>,
    pub found: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub matches: Vec<Match>,
    pub matched: usize,
    pub index_mismatch: usize,
    pub missing_pieces: usize,
    pub unmatched_predicted: usize,
    pub unmatched_numeric: usize,
}

impl Comparison {
    pub fn all_matched(&self) -> bool {
        self.index_mismatch == 0 && self.missing_pieces == 0 && self.unmatched_predicted == 0 && self.unmatched_numeric == 0
    }
}

/// Match predicted components to numeric clusters at the same body
/// position (within `1e-6` of the mechanism scale). An isolated component
/// with `k` pieces needs `k` clusters of its index; a manifold needs one
/// cluster of its index and dimension.
pub fn compare(mech: &SpiderMechanism, predicted: &[CriticalComponent], numeric: &[NumericCriticalPoint]) -> Comparison {
    let tol = 1e-6 * mech.scale();
    let mut used = vec![false; numeric.len()];
    let mut matches = Vec::new();
    // manifolds of equal signature over one point merge into one cluster
    let mut claimed: Vec<(Point, usize, usize, Vec<usize>)> = Vec::new();
    for (pi, c) in predicted.iter().enumerate() {
        let expected = (c.index, c.dim);
        let need = if c.dim == 0 { c.pieces().unwrap_or(1).max(1) as usize } else { 1 };
        if c.dim > 0 {
            if let Some(cl) = claimed.iter().find(|k| k.0.dist(c.x) <= tol && (k.1, k.2) == expected) {
                matches.push(Match {
                    verdict: Verdict::Matched,
                    x: c.x,
                    predicted: Some(pi),
                    clusters: cl.3.clone(),
                    expected: Some(expected),
                    found: vec![expected],
                });
                continue;
            }
        }
        let here: Vec<usize> = (0..numeric.len()).filter(|&k| !used[k] && numeric[k].x.dist(c.x) <= tol).collect();
        let good: Vec<usize> = here.iter().copied().filter(|&k| (numeric[k].index, numeric[k].dim()) == expected).take(need).collect();
        let (verdict, take) = if good.len() == need {
            (Verdict::Matched, good)
        } else if !here.is_empty() && here.iter().all(|&k| (numeric[k].index, numeric[k].dim()) == expected) {
            (Verdict::MissingPieces, here.clone())
        } else if !here.is_empty() {
            (Verdict::IndexMismatch, here.iter().copied().take(need).collect())
        } else {
            (Verdict::UnmatchedPredicted, Vec::new())
        };
        for &k in &take {
            used[k] = true;
        }
        if verdict == Verdict::Matched && c.dim > 0 {
            claimed.push((c.x, c.index, c.dim, take.clone()));
        }
        matches.push(Match {
            verdict,
            x: c.x,
            predicted: Some(pi),
            found: take.iter().map(|&k| (numeric[k].index, numeric[k].dim())).collect(),
            clusters: take,
            expected: Some(expected),
        });
    }
    for (k, p) in numeric.iter().enumerate().filter(|(k, _)| !used[*k]) {
        matches.push(Match { verdict: Verdict::UnmatchedNumeric, x: p.x, predicted: None, clusters: vec![k], expected: None, found: vec![(p.index, p.dim())] });
    }
    let count = |v: Verdict| matches.iter().filter(|m| m.verdict == v).count();
    Comparison {
        matched: count(Verdict::Matched),
        index_mismatch: count(Verdict::IndexMismatch),
        missing_pieces: count(Verdict::MissingPieces),
        unmatched_predicted: count(Verdict::UnmatchedPredicted),
        unmatched_numeric: count(Verdict::UnmatchedNumeric),
        matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morse::enumerate_critical;
    use std::collections::BTreeMap;

    fn tripod() -> SpiderMechanism {
        let feet = (0..3).map(|k| Point::polar(std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * k as f64 / 3.0)).collect();
        SpiderMechanism::new(feet, vec![vec![1.0, 0.6]; 3]).unwrap()
    }

    fn histogram(pts: &[NumericCriticalPoint]) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for p in pts {
            *h.entry(p.index).or_insert(0) += 1;
        }
        h
    }

    #[test]
    fn sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lens = SpiderMechanism::new(vec![Point::ORIGIN, Point::new(4.0, 0.0)], vec![vec![1.5, 1.5]; 2]).unwrap();
        let c = sample_configuration(&lens, &mut rng).unwrap();
        let model = Model::new(&lens, &Potential::SqDist { z: Point::ORIGIN });
        let th: Vec<f64> = c.angles.concat();
        let e = model.eval(&th);
        assert!(e.c.norm() < ETA_FEAS);
        assert!(lens.in_workspace(e.x, 1e-9) && e.x.x > 1.0 && e.x.x < 3.0);
        let far = SpiderMechanism::new(vec![Point::ORIGIN, Point::new(10.0, 0.0)], vec![vec![1.5, 1.5]; 2]).unwrap();
        assert_eq!(sample_configuration(&far, &mut rng), Err(OracleError::SamplingExhausted(SAMPLE_ATTEMPTS)));
        let one = SpiderMechanism::new(vec![Point::ORIGIN], vec![vec![1.0, 0.5, 0.7]]).unwrap();
        assert_eq!(sample_configuration(&one, &mut rng).unwrap().angles[0].len(), 3);
    }

    #[test]
    fn tripod_clusters_and_comparison() {
        let m = tripod();
        let opts = OracleOptions { starts: 600, seed: 11, max_iter: 400 };
        let pts = find_critical(&m, &Potential::SqDist { z: Point::ORIGIN }, &opts);
        assert_eq!(pts.len(), 44);
        assert_eq!(histogram(&pts), BTreeMap::from([(0, 8), (1, 24), (2, 12)]));
        assert!(pts.iter().all(|p| p.dim() == 0 && p.kkt < ETA_KKT && p.feasibility < ETA_FEAS));
        let set = enumerate_critical(&m, Point::ORIGIN, true).unwrap();
        let cmp = compare(&m, &set.components, &pts);
        assert!(cmp.all_matched(), "{cmp:?}");

        let mut bad = set.components.clone();
        let k = bad.iter().position(|c| c.pieces() == Some(2)).unwrap();
        bad[k].index += 1;
        let cmp = compare(&m, &bad, &pts);
        assert_eq!((cmp.index_mismatch, cmp.unmatched_predicted), (1, 0));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let m = tripod();
        let opts = OracleOptions { starts: 60, seed: 5, max_iter: 400 };
        let pot = Potential::SqDist { z: Point::new(0.1, -0.05) };
        let a = find_critical(&m, &pot, &opts);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| find_critical(&m, &pot, &opts));
        assert_eq!(a, b);
    }

    fn two_leg(p1: usize, p2: usize) -> SpiderMechanism {
        let l1: Vec<f64> = (0..p1).map(|k| 1.0 + 0.1 * k as f64).collect();
        let l2: Vec<f64> = (0..p2).map(|k| 1.05 + 0.07 * k as f64).collect();
        let d = l1.iter().sum::<f64>() + l2.iter().sum::<f64>() - 0.3;
        SpiderMechanism::new(vec![Point::ORIGIN, Point::new(d, 0.0)], vec![l1, l2]).unwrap()
    }

    #[test]
    fn exterior_target_has_one_minimum_and_one_maximum() {
        let m = two_leg(3, 3);
        let z = Point::new(0.5 * m.foot(1).x, 40.0);
        let pts = find_critical(&m, &Potential::SqDist { z }, &OracleOptions { starts: 120, ..Default::default() });
        let d = m.dim();
        let mut sigs: Vec<Signature> = pts.iter().map(|p| p.signature).collect();
        sigs.sort();
        assert_eq!(sigs, vec![Signature { neg: 0, zero: 0, pos: d }, Signature { neg: d, zero: 0, pos: 0 }]);
    }

    #[test]
    fn interior_target_manifold_dimensions() {
        let m = two_leg(3, 3);
        let r1: f64 = m.leg(0).iter().sum();
        let z = Point::new(r1 - 0.12, 0.03);
        let pts = find_critical(&m, &Potential::SqDist { z }, &OracleOptions { starts: 300, ..Default::default() });
        let set = enumerate_critical(&m, z, true).unwrap();
        let cmp = compare(&m, &set.components, &pts);
        assert!(cmp.all_matched(), "{cmp:#?}");
        let mut zeros: Vec<usize> = pts.iter().map(|p| p.dim()).collect();
        zeros.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(zeros, vec![2, 1, 1, 0, 0]);
    }

    #[test]
    fn hooke_matches_centroid_distance() {
        let m = tripod();
        let w = [1.0, 2.0, 0.5];
        let red = crate::hooke::reduce(m.feet(), &w, 1e-12).unwrap();
        let opts = OracleOptions { starts: 800, seed: 2, max_iter: 400 };
        let a = find_critical(&m, &Potential::Hooke { weights: w.to_vec() }, &opts);
        let set = crate::hooke::hooke_critical(&m, &w, false).unwrap();
        let cmp = compare(&m, &set.components, &a);
        assert!(cmp.all_matched(), "{:?} {cmp:#?}", set.genericity.violations);
        for p in &a {
            assert!((p.value - red.eval(p.x)).abs() < 1e-9);
        }
    }

    #[test]
    fn voronoi_faces_match_min_type_indices() {
        let m = SpiderMechanism::new(vec![Point::ORIGIN, Point::new(2.0, 0.0)], vec![vec![1.6, 1.0], vec![1.3, 0.8]]).unwrap();
        let rep = crate::voronoi::morsify(&m, &crate::voronoi::Offsets::Seeded { seed: 4, bound: None }, false).unwrap();
        let predicted: Vec<CriticalComponent> = rep.components.iter().map(|c| c.critical.clone()).collect();
        let pts = find_voronoi_critical(&m, &rep.structure, &OracleOptions { starts: 300, seed: 8, max_iter: 400 });
        let cmp = compare(&m, &predicted, &pts);
        assert!(cmp.all_matched(), "{cmp:#?}");
        for p in &pts {
            let w = p.weights.as_ref().unwrap();
            assert!(w.iter().all(|&w| w > 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
