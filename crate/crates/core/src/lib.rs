//! Solver and analysis toolkit for polynomial variational inequalities
//! `VI(K, P + p)` over polyhedral convex sets.
//!
//! * [`polymap`]: polynomial maps as coefficient matrices.
//! * [`polyhedra`]: polyhedral sets and cones, faces, generators, LP oracle.
//! * [`kkt`]: solution sets by KKT enumeration over pseudo-faces.
//! * [`analysis`]: R0, copositivity, monotonicity and existence certificates.
//! * [`stability`]: sweeps, semicontinuity probes, Hölder fits, genericity runs.

pub mod analysis;
pub mod error;
pub mod fixtures;
pub mod kkt;
pub mod linalg;
pub mod polyhedra;
pub mod polymap;
pub mod problem;
pub mod stability;

pub use error::{Error, Result};
pub use kkt::{
    solve, solve_cone_cp, verify_solution, Component, ConeCpResult, ConeCpVerdict, KKTSystem,
    SolutionPoint, SolutionSet, SolveConfig, SolveStatus, VIProblem,
};
pub use polyhedra::{GeneratorRep, Licq, LpOutcome, PolyhedralCone, PolyhedralSet, PseudoFace};
pub use polymap::{MonomialBasis, PolynomialMap};
pub use problem::ProblemFile;
