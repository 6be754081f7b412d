//! Critical-point theory of planar spider linkages.
//!
//! A spider has `n` fixed feet, each joined to a common body point `X` by an
//! articulated leg. This crate builds the work space of `X`, enumerates the
//! critical manifolds of distance-type potentials on the configuration space,
//! assembles Morse–Bott polynomials and Euler characteristics, and checks all
//! of it against an independent numerical critical-point search.

pub mod arm;
pub mod geom;
pub mod hooke;
pub mod mechanism;
pub mod morse;
pub mod oracle;
pub mod poly;
pub mod polyspace;
pub mod report;
pub mod voronoi;
pub mod workspace;

pub use geom::Point;
pub use mechanism::{GenericityReport, MechanismDocument, SpiderMechanism};
pub use poly::Poly;
