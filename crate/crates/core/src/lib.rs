//! Gradient discretisations of elliptic problems on polytopal meshes.
//!
//! A gradient discretisation is a triple (dof space, function reconstruction,
//! gradient reconstruction). Both reconstructions are stored through their
//! values at fixed quadrature nodes, so every scheme, transform and measure in
//! this crate works on the same representation.

pub mod cli;
pub mod error;
pub mod gd;
pub mod linalg;
pub mod measures;
pub mod mesh;
pub mod quadrature;
pub mod schemes;
pub mod solver;
pub mod toolbox;
pub mod transforms;

pub use error::{Error, Result};
pub use gd::{DofVector, GradientDiscretisation};
pub use mesh::PolytopalMesh;
