use thiserror::Error;

use crate::mesh::Point;

/// Errors produced anywhere in the solve/estimate/refine pipeline.
#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("nonconforming mesh: edge ({0}, {1}) {2}")]
    Topology(usize, usize, String),

    #[error("non-finite value of {what} at ({}, {})", .point[0], .point[1])]
    Evaluation { what: &'static str, point: Point },

    #[error("degenerate element {element}: signed area {area:e}")]
    DegenerateElement { element: usize, area: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolve(String),

    #[error("active set iteration did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        last_iterate: Box<Vec<f64>>,
    },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<FemError>,
    },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = FemError> = std::result::Result<T, E>;
