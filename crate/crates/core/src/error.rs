use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rasterized interior is empty")]
    EmptyInterior,

    #[error("rasterized interior is disconnected ({components} components)")]
    DisconnectedInterior { components: usize },

    #[error("degenerate domain: {0}")]
    Degenerate(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("point ({0}, {1}) lies outside the domain")]
    OutsideDomain(f64, f64),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("measure has zero total mass")]
    ZeroMass,

    #[error("kernel is not positive definite (smallest eigenvalue estimate {min_eigenvalue:.3e})")]
    IndefiniteKernel { min_eigenvalue: f64 },

    #[error("energy routes disagree: kernel {kernel:.6e} vs pde {pde:.6e}")]
    RouteDisagreement { kernel: f64, pde: f64 },

    #[error("vortex cores collide: {0}")]
    CoreCollision(String),

    #[error("phase closure defect {defect:.3e} exceeds tolerance")]
    ClosureDefect { defect: f64 },

    #[error("descent failed: {0}")]
    Descent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from the experiment description rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InvalidCurve(_)
                | Error::Json(_)
                | Error::OutsideDomain(..)
                | Error::EmptyInterior
                | Error::DisconnectedInterior { .. }
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
