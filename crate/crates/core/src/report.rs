//! Versioned analysis reports and the command dispatch behind the CLI.
//!
//! Every command produces one [`AnalysisReport`]: the mechanism echo, its
//! genericity report, and a command-specific payload. Serialization is
//! deterministic: struct fields keep declaration order and every list is
//! produced in a stable sort.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;
use crate::hooke::{hooke_critical, HookeError};
use crate::mechanism::{strong_genericity_report, GenericityReport, MechanismDocument, SpiderMechanism};
use crate::morse::{enumerate_critical, euler_from_morse, CriticalComponent, CriticalSet, MorseError};
use crate::oracle::{self, Comparison, NumericCriticalPoint, OracleOptions};
use crate::poly::Poly;
use crate::voronoi::{self, Offsets, PlaneCritical, VoronoiCriticalReport, VoronoiError, VoronoiKind};
use crate::workspace::{self, EulerCertificate, StratifiedWorkspace, SvgOverlay, WorkspaceError};

/// Bumped on any change to the payload layout.
pub const SCHEMA_ID: &str = "spider-report/1";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("input error: {0}")]
    Input(String),
    #[error("genericity violation: {0}")]
    Genericity(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Genericity(_) => 2,
            RunError::Input(_) | RunError::Analysis(_) => 1,
        }
    }
}

impl From<MorseError> for RunError {
    fn from(e: MorseError) -> Self {
        match e {
            MorseError::GenericityViolation(_) => RunError::Genericity(e.to_string()),
            e => RunError::Analysis(e.to_string()),
        }
    }
}

impl From<HookeError> for RunError {
    fn from(e: HookeError) -> Self {
        match e {
            HookeError::Morse(m) => m.into(),
            e => RunError::Input(e.to_string()),
        }
    }
}

impl From<VoronoiError> for RunError {
    fn from(e: VoronoiError) -> Self {
        match e {
            VoronoiError::Morse(m) => m.into(),
            VoronoiError::NotVoronoiGeneric { .. } | VoronoiError::FourCocircular(_) => RunError::Genericity(e.to_string()),
            VoronoiError::TooFewSites { .. } | VoronoiError::TooManySites(_) | VoronoiError::OffsetCountMismatch { .. } => RunError::Input(e.to_string()),
            e => RunError::Analysis(e.to_string()),
        }
    }
}

impl From<WorkspaceError> for RunError {
    fn from(e: WorkspaceError) -> Self {
        RunError::Analysis(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    #[default]
    Sqdist,
    Hooke,
    Voronoi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EulerMethod {
    Strata,
    Morse,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Workspace,
    Critical,
    MorsePoly,
    Euler,
    OracleVerify,
    VoronoiPlane,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Workspace => "workspace",
            Command::Critical => "critical",
            Command::MorsePoly => "morse-poly",
            Command::Euler => "euler",
            Command::OracleVerify => "oracle-verify",
            Command::VoronoiPlane => "voronoi-plane",
        }
    }
}

/// Flag values; `z`, `weights` and `seed` override the document.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub potential: PotentialKind,
    pub z: Option<Point>,
    pub weights: Option<Vec<f64>>,
    pub method: EulerMethod,
    pub morsify: bool,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub starts: Option<usize>,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub command: String,
    pub mechanism: MechanismDocument,
    pub genericity: GenericityReport,
    pub payload: Payload,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only finite numbers and string keys")
    }
}

/// The potential an analysis ran on, with its resolved parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialEcho {
    Sqdist { z: Point },
    Hooke { weights: Vec<f64> },
    Voronoi { morsified: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Validate {
        dim: usize,
        certified: bool,
    },
    Workspace {
        workspace: StratifiedWorkspace,
        euler: Option<EulerCertificate>,
        euler_of_region: i64,
    },
    Critical {
        potential: PotentialEcho,
        certified: bool,
        components: Vec<CriticalComponent>,
        polynomial: Option<Poly>,
        euler: Option<i64>,
    },
    Voronoi {
        report: Box<VoronoiCriticalReport>,
        euler: Option<i64>,
    },
    MorsePoly {
        potential: PotentialEcho,
        polynomial: Poly,
        euler: i64,
    },
    Euler {
        #[serde(skip_serializing_if = "Option::is_none")]
        strata: Option<i64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        morse: Option<i64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        agree: Option<bool>,
        #[serde(skip_serializing_if = "Option::is_none")]
        z: Option<Point>,
    },
    Oracle {
        potential: PotentialEcho,
        starts: usize,
        seed: u64,
        comparison: Comparison,
        points: Vec<NumericCriticalPoint>,
    },
    VoronoiPlane {
        plane: PlaneCritical,
        euler: i64,
    },
}

/// Parse a mechanism document and build the mechanism. The returned
/// document is the echo: flag overrides applied, everything else verbatim.
pub fn load(json: &str, opts: &Options) -> Result<(MechanismDocument, SpiderMechanism), RunError> {
    let mut doc = MechanismDocument::from_json(json).map_err(|e| RunError::Input(e.to_string()))?;
    if let Some(z) = opts.z {
        doc.z = Some([z.x, z.y]);
    }
    if let Some(w) = &opts.weights {
        doc.weights = Some(w.clone());
    }
    if let Some(s) = opts.seed {
        doc.seed = Some(s);
    }
    let mech = SpiderMechanism::from_document(&doc).map_err(|e| RunError::Input(e.to_string()))?;
    Ok((doc, mech))
}

/// A seeded target that passes the strong genericity test, for Morse
/// routes that were given no `z`.
pub fn generic_target(mech: &SpiderMechanism, seed: u64) -> Result<Point, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut lo, mut hi) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
    for z in mech.zones() {
        let a = mech.foot(z.foot);
        lo = Point::new(lo.x.min(a.x - z.outer), lo.y.min(a.y - z.outer));
        hi = Point::new(hi.x.max(a.x + z.outer), hi.y.max(a.y + z.outer));
    }
    for _ in 0..500 {
        let z = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if strong_genericity_report(mech, Some(z)).is_certified() {
            return Ok(z);
        }
    }
    Err(RunError::Genericity("no strongly generic target found in 500 samples".into()))
}

struct Context<'a> {
    doc: &'a MechanismDocument,
    mech: &'a SpiderMechanism,
    opts: &'a Options,
}

impl Context<'_> {
    fn z(&self) -> Result<Point, RunError> {
        self.doc.z.map(|[x, y]| Point::new(x, y)).ok_or_else(|| RunError::Input("the sqdist potential needs a target: pass --z or set \"z\"".into()))
    }

    fn weights(&self) -> Result<Vec<f64>, RunError> {
        self.doc.weights.clone().ok_or_else(|| RunError::Input("the hooke potential needs --weights or \"weights\"".into()))
    }

    fn seed(&self) -> u64 {
        self.mech.seed()
    }

    fn offsets(&self) -> Offsets {
        Offsets::Seeded { seed: self.seed(), bound: self.opts.eps }
    }

    fn genericity(&self) -> GenericityReport {
        let z = match self.opts.potential {
            PotentialKind::Sqdist => self.doc.z.map(|[x, y]| Point::new(x, y)),
            PotentialKind::Hooke => self.doc.weights.as_ref().and_then(|w| crate::hooke::reduce(self.mech.feet(), w, self.mech.tol()).ok()).map(|r| r.centroid),
            PotentialKind::Voronoi => None,
        };
        strong_genericity_report(self.mech, z)
    }

    fn critical_set(&self) -> Result<(PotentialEcho, CriticalSet), RunError> {
        let certified = self.opts.certified;
        match self.opts.potential {
            PotentialKind::Sqdist => {
                let z = self.z()?;
                Ok((PotentialEcho::Sqdist { z }, enumerate_critical(self.mech, z, certified)?))
            }
            PotentialKind::Hooke => {
                let w = self.weights()?;
                let set = hooke_critical(self.mech, &w, certified)?;
                Ok((PotentialEcho::Hooke { weights: w }, set))
            }
            PotentialKind::Voronoi => unreachable!("voronoi reports are built separately"),
        }
    }

    fn voronoi(&self) -> Result<VoronoiCriticalReport, RunError> {
        Ok(if self.opts.morsify {
            voronoi::morsify(self.mech, &self.offsets(), self.opts.certified)?
        } else {
            voronoi::spider_voronoi_critical(self.mech, self.opts.certified)?
        })
    }
}

/// Run one command. Returns the report and, for commands that draw, the
/// SVG document.
pub fn run(command: Command, doc: &MechanismDocument, mech: &SpiderMechanism, opts: &Options) -> Result<(AnalysisReport, String), RunError> {
    let cx = Context { doc, mech, opts };
    let genericity = cx.genericity();
    if opts.certified && !genericity.is_certified() && opts.potential != PotentialKind::Voronoi {
        return Err(RunError::Genericity(format!("{:?}", genericity.codes())));
    }
    let (payload, svg) = match command {
        Command::Validate => (Payload::Validate { dim: mech.dim(), certified: genericity.is_certified() }, String::new()),
        Command::Workspace => {
            let ws = workspace::build(mech)?;
            let svg = ws.to_svg(mech, &SvgOverlay::default());
            let euler = ws.euler().ok();
            (Payload::Workspace { euler_of_region: ws.euler_of_region(), euler, workspace: ws }, svg)
        }
        Command::Critical if opts.potential == PotentialKind::Voronoi => {
            let rep = cx.voronoi()?;
            let svg = voronoi_svg(mech, &rep)?;
            let euler = rep.polynomial.as_ref().map(euler_from_morse);
            (Payload::Voronoi { report: Box::new(rep), euler }, svg)
        }
        Command::Critical => {
            let (potential, set) = cx.critical_set()?;
            let polynomial = set.polynomial().ok();
            let euler = polynomial.as_ref().map(euler_from_morse);
            let overlay = SvgOverlay { points: set.components.iter().map(|c| (c.x, format!("{:?} index {}", c.case, c.index))).collect(), dashed: Vec::new() };
            let svg = workspace::build(mech).map(|ws| ws.to_svg(mech, &overlay)).unwrap_or_default();
            (Payload::Critical { potential, certified: set.certified, components: set.components, polynomial, euler }, svg)
        }
        Command::MorsePoly => {
            let (potential, polynomial) = if opts.potential == PotentialKind::Voronoi {
                let rep = cx.voronoi()?;
                let p = rep.polynomial.ok_or_else(|| RunError::Analysis("non-isolated critical pieces remain; rerun with --morsify".into()))?;
                (PotentialEcho::Voronoi { morsified: opts.morsify }, p)
            } else {
                let (potential, set) = cx.critical_set()?;
                (potential, set.polynomial()?)
            };
            (Payload::MorsePoly { euler: euler_from_morse(&polynomial), potential, polynomial }, String::new())
        }
        Command::Euler => {
            let strata = match opts.method {
                EulerMethod::Morse => None,
                _ => Some(workspace::euler_via_strata(mech)?.euler),
            };
            let (morse, z) = match opts.method {
                EulerMethod::Strata => (None, None),
                _ => {
                    let z = match doc.z {
                        Some([x, y]) => Point::new(x, y),
                        None => generic_target(mech, cx.seed())?,
                    };
                    let set = enumerate_critical(mech, z, opts.certified)?;
                    (Some(euler_from_morse(&set.polynomial()?)), Some(z))
                }
            };
            let agree = strata.zip(morse).map(|(a, b)| a == b);
            (Payload::Euler { strata, morse, agree, z }, String::new())
        }
        Command::OracleVerify => {
            let o = OracleOptions { starts: opts.starts.unwrap_or(OracleOptions::default().starts), seed: cx.seed(), ..Default::default() };
            let (potential, predicted, points) = match opts.potential {
                PotentialKind::Voronoi => {
                    let rep = cx.voronoi()?;
                    let pts = oracle::find_voronoi_critical(mech, &rep.structure, &o);
                    let predicted = rep.components.iter().map(|c| c.critical.clone()).collect::<Vec<_>>();
                    (PotentialEcho::Voronoi { morsified: opts.morsify }, predicted, pts)
                }
                PotentialKind::Sqdist => {
                    let (potential, set) = cx.critical_set()?;
                    let pts = oracle::find_critical(mech, &oracle::Potential::SqDist { z: cx.z()? }, &o);
                    (potential, set.components, pts)
                }
                PotentialKind::Hooke => {
                    let (potential, set) = cx.critical_set()?;
                    let pts = oracle::find_critical(mech, &oracle::Potential::Hooke { weights: cx.weights()? }, &o);
                    (potential, set.components, pts)
                }
            };
            let comparison = oracle::compare(mech, &predicted, &points);
            (Payload::Oracle { potential, starts: o.starts, seed: o.seed, comparison, points }, String::new())
        }
        Command::VoronoiPlane => {
            let plane = voronoi::plane_critical(mech.feet(), mech.tol())?;
            if opts.certified && !plane.degenerate.is_empty() {
                return Err(RunError::Genericity(format!("{} degenerate plane critical point(s)", plane.degenerate.len())));
            }
            let structure = voronoi::VoronoiStructure::new(mech.feet(), mech.tol())?;
            let mut overlay = SvgOverlay { dashed: voronoi_segments(mech, &structure), points: Vec::new() };
            overlay.points.extend(plane_marks(&plane));
            let svg = workspace::build(mech).map(|ws| ws.to_svg(mech, &overlay)).unwrap_or_default();
            (Payload::VoronoiPlane { euler: plane.euler(), plane }, svg)
        }
    };
    let report = AnalysisReport { schema: SCHEMA_ID.into(), command: command.name().into(), mechanism: doc.clone(), genericity, payload };
    Ok((report, svg))
}

/// Voronoi edges clipped to a box around the zones; rays get a finite end.
fn voronoi_segments(mech: &SpiderMechanism, structure: &voronoi::VoronoiStructure) -> Vec<(Point, Point)> {
    let reach = mech.zones().iter().map(|z| mech.foot(z.foot).norm() + z.outer).fold(0.0, f64::max);
    structure
        .edges
        .iter()
        .map(|e| {
            let far = 2.0 * reach + e.origin.norm();
            let lo = e.t0.unwrap_or(-far);
            (e.at(lo), e.at(e.t1.unwrap_or(far)))
        })
        .collect()
}

/// `m`, `S` and `M` for minima, saddles and maxima of the plane function.
fn plane_marks(plane: &PlaneCritical) -> Vec<(Point, String)> {
    let mut marks: Vec<(Point, String)> = plane.minima.iter().map(|p| (p.x, "m".to_string())).collect();
    marks.extend(plane.saddles.iter().map(|p| (p.x, "S".to_string())));
    marks.extend(plane.maxima.iter().map(|p| (p.x, "M".to_string())));
    marks
}

fn voronoi_svg(mech: &SpiderMechanism, rep: &VoronoiCriticalReport) -> Result<String, RunError> {
    let mut overlay = SvgOverlay { dashed: voronoi_segments(mech, &rep.structure), points: plane_marks(&rep.plane) };
    for c in &rep.components {
        let tag = match c.kind {
            VoronoiKind::Minimum => "m",
            VoronoiKind::Saddle => "S",
            VoronoiKind::Maximum => "M",
            VoronoiKind::CellOneAligned | VoronoiKind::CellTwoAligned => "cell",
            VoronoiKind::WallOneAligned => "wall",
        };
        overlay.points.push((c.critical.x, format!("{tag} index {}", c.critical.index)));
    }
    Ok(workspace::build(mech).map(|ws| ws.to_svg(mech, &overlay)).unwrap_or_default())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LENS: &str = r#"{"feet": [[0, 0], [5, 0]], "legs": [[1.6, 1.4], [1.6, 1.4]], "z": [1, 1]}"#;

    #[test]
    fn flags_override_the_document() {
        let opts = Options { z: Some(Point::new(9.0, 9.0)), seed: Some(4), ..Default::default() };
        let (doc, mech) = load(LENS, &opts).unwrap();
        assert_eq!((doc.z, doc.seed, mech.seed()), (Some([9.0, 9.0]), Some(4), 4));
        let (rep, _) = run(Command::Critical, &doc, &mech, &opts).unwrap();
        let Payload::Critical { components, .. } = rep.payload else { panic!() };
        assert_eq!(components.len(), 2);
    }

    #[test]
    fn error_classes() {
        assert_eq!(load("{", &Options::default()).unwrap_err().exit_code(), 1);
        assert_eq!(RunError::from(MorseError::GenericityViolation(Vec::new())).exit_code(), 2);
        assert_eq!(RunError::from(HookeError::ZeroTotalWeight).exit_code(), 1);
        let opts = Options { potential: PotentialKind::Hooke, weights: Some(vec![1.0, -1.0]), ..Default::default() };
        let (doc, mech) = load(LENS, &opts).unwrap();
        assert_eq!(run(Command::Critical, &doc, &mech, &opts).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn seeded_targets_are_generic_and_reproducible() {
        let (_, mech) = load(LENS, &Options::default()).unwrap();
        let z = generic_target(&mech, 9).unwrap();
        assert_eq!(z, generic_target(&mech, 9).unwrap());
        assert!(strong_genericity_report(&mech, Some(z)).is_certified());
    }
}
