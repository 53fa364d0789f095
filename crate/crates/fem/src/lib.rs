//! Nonconforming tetrahedral finite elements for grad-curl problems.
//!
//! This crate builds uniform tetrahedral meshes of the unit cube, provides the
//! lowest-order nonconforming edge/face element families whose shape spaces are
//! `grad P_{k+1} + (x - x_K) x P_1` (14 or 20 local degrees of freedom), and
//! assembles the discrete sequence
//!
//! ```text
//! Lagrange --grad--> W_h --curl_h--> nonconforming P1 --div_h--> P0
//! ```
//!
//! together with mixed, decoupled and Schur-complement solvers for the
//! fourth-order curl problem `(curl)^4 u = f, div u = 0` on `(0,1)^3`.
//! Exactness of the sequence and the commuting interpolation diagrams are
//! verifiable at runtime ([`complex`]), and a manufactured-solution
//! convergence driver reproduces the expected first-order energy rates
//! ([`problem`]).
//!
//! Cell loops (assembly, interpolation, error integration) run in parallel via
//! rayon when the default `parallel` feature is enabled; disabling it yields a
//! dependency-free sequential build with identical results.

pub mod assemble;
pub mod complex;
pub mod field;
pub mod local;
pub mod mesh;
pub(crate) mod par;
pub mod poly;
pub mod problem;
pub mod quadrature;
pub mod solve;
pub mod space;
pub mod sparse;

pub use par::parallel_enabled;

use thiserror::Error;

/// Errors produced while building meshes, elements or solving systems.
#[derive(Debug, Error)]
pub enum FemError {
    #[error("subdivision count must be at least 1")]
    ZeroSubdivisions,
    #[error("cell {cell} is degenerate (signed volume {volume:.3e})")]
    DegenerateCell { cell: usize, volume: f64 },
    #[error("invalid cell id {0}")]
    InvalidCell(usize),
    #[error("quadrature degree {degree} unsupported on dimension {dim}")]
    UnsupportedQuadrature { dim: usize, degree: usize },
    #[error("degrees of freedom are singular on cell {0}")]
    SingularDofMatrix(usize),
    #[error("operator pair {from} -> {to} is not an arrow of the discrete complex")]
    IllegalOperatorPair { from: String, to: String },
    #[error("form {form} is incompatible with spaces ({trial}, {test})")]
    IncompatibleForm {
        form: String,
        trial: String,
        test: String,
    },
    #[error("spaces live on different meshes")]
    MeshMismatch,
    #[error("point lies outside the closed cell")]
    PointOutsideCell,
    #[error("matrix dimensions {0}x{1} incompatible with operand of length {2}")]
    DimensionMismatch(usize, usize, usize),
    #[error("factorization breakdown: {0}")]
    FactorizationBreakdown(String),
    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, FemError>;
