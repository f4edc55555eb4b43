use std::path::PathBuf;

use thiserror::Error;

use crate::flow::FlowState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("refinement produced degenerate simplex {simplex}")]
    DegenerateRefinement { simplex: usize },

    #[error("degenerate simplex {simplex} (measure {measure:e})")]
    DegenerateSimplex { simplex: usize, measure: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("evaluation too close to origin (|x| = {norm:e} < guard {guard})")]
    NearOrigin { norm: f64, guard: f64 },

    #[error("evaluation too close to origin in simplex {simplex} (|f| = {norm:e} < guard {guard})")]
    GuardViolation { simplex: usize, norm: f64, guard: f64 },

    #[error("point outside tubular neighbourhood (|d| = {distance:e} > {halfwidth})")]
    OutsideTube { distance: f64, halfwidth: f64 },

    #[error("metric not positive definite at {point:?}")]
    MetricNotPositiveDefinite { point: Vec<f64> },

    #[error("closest point iteration did not converge at {point:?}")]
    ClosestPointFailed { point: Vec<f64> },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("conjugate gradient produced a non-finite residual after {iterations} iterations")]
    CgBreakdown { iterations: usize },

    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{tag}: {source}")]
    Context {
        tag: String,
        #[source]
        source: Box<Error>,
    },

    #[error("flow did not reach stationarity after {steps} steps")]
    NotStationary { steps: usize, state: Box<FlowState> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// Wraps `self` with a label such as a refinement level.
    pub fn context(self, tag: impl Into<String>) -> Self {
        Error::Context {
            tag: tag.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error below step and context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } | Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the root cause is a bad input rather than a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self.root(),
            Error::InvalidArgument(_) | Error::InvalidMesh(_) | Error::Io { .. } | Error::Parse { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
