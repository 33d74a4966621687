use thiserror::Error;

use crate::mesh::Point;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error)]
pub enum FdlmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point ({}, {}) lies outside the mesh", .0[0], .0[1])]
    Outside(Point),

    /// A mapped quadrature point of the solid left the fluid container.
    #[error(
        "solid escaped the container: solid element {element}, quadrature point {quad_point} mapped to ({}, {}); element vertices at {vertices:?}",
        point[0],
        point[1]
    )]
    SolidEscaped {
        element: usize,
        quad_point: usize,
        point: Point,
        vertices: Vec<Point>,
    },

    #[error("singular saddle-point system: {0}")]
    SingularSystem(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigen-solve failed: {0}")]
    Eigen(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FdlmError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        FdlmError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the physical model (escaped solid, divergence of
    /// the nonlinear loop, singular system) as opposed to bad input or IO.
    pub fn is_model_error(&self) -> bool {
        matches!(
            self,
            FdlmError::SolidEscaped { .. }
                | FdlmError::NoConvergence { .. }
                | FdlmError::SingularSystem(_)
                | FdlmError::Outside(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, FdlmError>;
