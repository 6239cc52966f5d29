use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid mesh: {0}")]
    Mesh(String),
    #[error("mesh violates {} invariant(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    MeshInvariants(Vec<crate::mesh::Violation>),
    #[error("mesh file parse error: {0}")]
    Parse(String),
    #[error("unsupported mesh for {scheme}: {reason}")]
    UnsupportedMesh {
        scheme: &'static str,
        reason: String,
    },
    #[error("dof space mismatch: {0}")]
    DofMismatch(String),
    #[error("invalid transform: {0}")]
    Transform(String),
    #[error("matrix is not symmetric positive definite ({0})")]
    NotSpd(String),
    #[error("{method} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
