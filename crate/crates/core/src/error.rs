use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate simplex {element}: volume {volume:e} below {epsilon:e}")]
    DegenerateSimplex {
        element: usize,
        volume: f64,
        epsilon: f64,
    },

    #[error("operation requires a {expected}D mesh, got {actual}D")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{} negative off-diagonal coefficient(s), first edge ({}, {}) = {:e}", .edges.len(), .edges[0].0, .edges[0].1, .edges[0].2)]
    NegativeCoefficient { edges: Vec<(usize, usize, f64)> },

    #[error("matrix is not symmetric: entry ({row}, {col}) differs by {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("entry ({row}, {col}) lies outside the mesh edge pattern")]
    OutsidePattern { row: usize, col: usize },

    #[error("singular or indefinite linear system (pivot {pivot} = {value:e})")]
    Singular { pivot: usize, value: f64 },

    #[error("constraints are infeasible (residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("solver stopped after {iterations} iterations (kkt residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("local problem at edge ({0}, {1}) failed: {2}")]
    LocalProblem(usize, usize, Box<Error>),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{0}")]
    Failed(String),
}

impl Error {
    /// Stable machine-readable code used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "E_IO",
            Error::Parse(_) => "E_PARSE",
            Error::InvalidMesh(_) => "E_MESH",
            Error::DegenerateSimplex { .. } => "E_DEGENERATE",
            Error::Dimension { .. } => "E_DIMENSION",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::NegativeCoefficient { .. } => "E_NEGATIVE_COEFFICIENT",
            Error::NotSymmetric { .. } => "E_NOT_SYMMETRIC",
            Error::OutsidePattern { .. } => "E_PATTERN",
            Error::Singular { .. } => "E_SINGULAR",
            Error::Infeasible { .. } => "E_INFEASIBLE",
            Error::MaxIterations { .. } => "E_MAX_ITER",
            Error::LocalProblem(..) => "E_LOCAL",
            Error::NonFinite(_) => "E_NONFINITE",
            Error::Failed(_) => "E_FAILED",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
