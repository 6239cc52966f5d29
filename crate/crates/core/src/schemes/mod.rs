//! Builders for the gradient discretisations in scope.
//!
//! Every builder integrates on quarter-diamonds (see
//! [`crate::quadrature::quarter_diamonds`]), a layout fine enough for the
//! reconstructions of all schemes to be polynomial on each triangle.

mod conforming;
mod hmm;
mod mpfa;
mod ncp1;
mod nmfd;
mod vag;

pub use conforming::build_p1;
pub use hmm::{build_hmm, build_sushi, sushi_rule, Stabilisation};
pub use mpfa::{build_mpfa_o, MpfaSystem};
pub use ncp1::build_ncp1;
pub use nmfd::{build_nmfd, NmfdWeights};
pub use vag::{build_vag2d, build_vag2d_unlumped};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};

use crate::gd::{GradientDiscretisation, Region};
use crate::mesh::{MeshKind, Point, PolytopalMesh};
use crate::quadrature::triangle_rule;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    P1,
    P2,
    P1Lumped,
    Ncp1,
    Ncp1Lumped,
    MpfaO,
    Hmm,
    Sushi,
    Nmfd,
    Vag2d,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 10] = [
        SchemeKind::P1,
        SchemeKind::P2,
        SchemeKind::P1Lumped,
        SchemeKind::Ncp1,
        SchemeKind::Ncp1Lumped,
        SchemeKind::MpfaO,
        SchemeKind::Hmm,
        SchemeKind::Sushi,
        SchemeKind::Nmfd,
        SchemeKind::Vag2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::P1 => "p1",
            SchemeKind::P2 => "p2",
            SchemeKind::P1Lumped => "p1_lumped",
            SchemeKind::Ncp1 => "ncp1",
            SchemeKind::Ncp1Lumped => "ncp1_lumped",
            SchemeKind::MpfaO => "mpfa_o",
            SchemeKind::Hmm => "hmm",
            SchemeKind::Sushi => "sushi",
            SchemeKind::Nmfd => "nmfd",
            SchemeKind::Vag2d => "vag2d",
        }
    }

    /// Mesh families the builder accepts.
    pub fn admissible(self) -> &'static [MeshKind] {
        use MeshKind::*;
        match self {
            SchemeKind::P1
            | SchemeKind::P2
            | SchemeKind::P1Lumped
            | SchemeKind::Ncp1
            | SchemeKind::Ncp1Lumped => &[Simplicial],
            SchemeKind::MpfaO => &[Cartesian, Simplicial],
            SchemeKind::Hmm | SchemeKind::Sushi | SchemeKind::Nmfd | SchemeKind::Vag2d => {
                &[Cartesian, Simplicial, General]
            }
        }
    }

    /// Whether Π_D is a piecewise-constant reconstruction Σ v_i χ_{V_i}.
    pub fn piecewise_constant(self) -> bool {
        matches!(
            self,
            SchemeKind::P1Lumped
                | SchemeKind::Ncp1Lumped
                | SchemeKind::MpfaO
                | SchemeKind::Hmm
                | SchemeKind::Sushi
                | SchemeKind::Vag2d
        )
    }

    pub fn describe(self) -> &'static str {
        match self {
            SchemeKind::P1 => "Conforming P1 Lagrange. Dofs: vertices. Π: nodal interpolation. ∇: gradient of Π. Meshes: simplicial.",
            SchemeKind::P2 => "Conforming P2 Lagrange. Dofs: vertices and edge midpoints. Π: nodal interpolation. ∇: gradient of Π. Meshes: simplicial.",
            SchemeKind::P1Lumped => "Mass-lumped P1. Dofs: vertices. Π: constant on barycentric dual cells. ∇: as P1. Meshes: simplicial. Piecewise-constant Π.",
            SchemeKind::Ncp1 => "Non-conforming P1 (Crouzeix-Raviart). Dofs: edge midpoints. Π: broken P1. ∇: broken gradient. Meshes: simplicial. Controlled by the mesh toolbox.",
            SchemeKind::Ncp1Lumped => "Mass-lumped non-conforming P1. Dofs: edge midpoints. Π: constant on diamonds. ∇: as ncp1. Meshes: simplicial. Piecewise-constant Π.",
            SchemeKind::MpfaO => "MPFA-O. Dofs: cells and (face, vertex) pairs. Π: cell values. ∇: one consistent gradient per subcell. Meshes: Cartesian or simplicial. Piecewise-constant Π. Controlled by the half-face toolbox.",
            SchemeKind::Hmm => "Hybrid mimetic mixed. Dofs: cells and faces. Π: cell values. ∇: consistent gradient plus stabilisation per half-diamond. Default stabilisation: identity, ζ_D = 1. Meshes: any star-shaped polygons. Piecewise-constant Π. Controlled by the mesh toolbox.",
            SchemeKind::Sushi => "SUSHI: HMM with every interior face dof eliminated by barycentric condensation onto neighbouring cell centers. Meshes: any star-shaped polygons. Piecewise-constant Π.",
            SchemeKind::Nmfd => "Nodal mimetic finite differences. Dofs: vertices. Π: weighted vertex average per cell. ∇: consistent gradient plus stabilisation per nodal subcell. Default stabilisation: identity, ζ_D = 1. Meshes: any star-shaped polygons. Controlled by the mesh toolbox.",
            SchemeKind::Vag2d => "Vertex approximate gradient. Dofs: cell centers and vertices. Π: lumped on barycentric thirds of the sub-triangles. ∇: P1 on the sub-triangles (x_K, v, v'). Meshes: any star-shaped polygons. Piecewise-constant Π.",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme '{s}'")))
    }
}

/// Builds any scheme with its default parameters.
pub fn build(kind: SchemeKind, mesh: &PolytopalMesh) -> Result<GradientDiscretisation> {
    match kind {
        SchemeKind::P1 => build_p1(mesh, 1, false),
        SchemeKind::P2 => build_p1(mesh, 2, false),
        SchemeKind::P1Lumped => build_p1(mesh, 1, true),
        SchemeKind::Ncp1 => build_ncp1(mesh, false),
        SchemeKind::Ncp1Lumped => build_ncp1(mesh, true),
        SchemeKind::MpfaO => build_mpfa_o(mesh),
        SchemeKind::Hmm => build_hmm(mesh, &Stabilisation::Identity),
        SchemeKind::Sushi => build_sushi(mesh, &Stabilisation::Identity),
        SchemeKind::Nmfd => build_nmfd(mesh, &NmfdWeights::Default),
        SchemeKind::Vag2d => build_vag2d(mesh),
    }
}

/// The unlumped parent of a mass-lumped scheme, on the same dofs.
pub fn companion(kind: SchemeKind, mesh: &PolytopalMesh) -> Result<Option<GradientDiscretisation>> {
    match kind {
        SchemeKind::P1Lumped => build(SchemeKind::P1, mesh).map(Some),
        SchemeKind::Ncp1Lumped => build(SchemeKind::Ncp1, mesh).map(Some),
        SchemeKind::Vag2d => build_vag2d_unlumped(mesh).map(Some),
        _ => Ok(None),
    }
}

pub(crate) fn require_mesh(kind: SchemeKind, mesh: &PolytopalMesh) -> Result<()> {
    if kind.admissible().contains(&mesh.kind()) {
        Ok(())
    } else {
        Err(Error::UnsupportedMesh {
            scheme: kind.name(),
            reason: format!(
                "{:?} mesh; expected one of {:?}",
                mesh.kind(),
                kind.admissible()
            ),
        })
    }
}

/// Samples local basis values and gradients on a triangle.
pub(crate) fn region_on(
    triangle: [Point; 3],
    cell: usize,
    part: usize,
    dofs: Vec<usize>,
    eval: impl Fn(Point) -> (Vec<f64>, Vec<Vector2<f64>>),
) -> Region {
    let rule = triangle_rule(triangle);
    let (np, nd) = (rule.len(), dofs.len());
    let mut pi = DMatrix::zeros(np, nd);
    let mut gx = DMatrix::zeros(np, nd);
    let mut gy = DMatrix::zeros(np, nd);
    for (q, (x, _)) in rule.iter().enumerate() {
        let (v, g) = eval(*x);
        for j in 0..nd {
            pi[(q, j)] = v[j];
            gx[(q, j)] = g[j].x;
            gy[(q, j)] = g[j].y;
        }
    }
    Region {
        cell,
        part,
        dofs,
        points: rule.iter().map(|(x, _)| *x).collect(),
        weights: rule.iter().map(|(_, w)| *w).collect(),
        pi,
        gx,
        gy,
    }
}

/// A region on which Π_D and ∇_D are both constant; `grad` is 2 x n.
pub(crate) fn constant_region(
    triangle: [Point; 3],
    cell: usize,
    part: usize,
    dofs: Vec<usize>,
    pi: &[f64],
    grad: &DMatrix<f64>,
) -> Region {
    let g: Vec<Vector2<f64>> = (0..dofs.len())
        .map(|j| Vector2::new(grad[(0, j)], grad[(1, j)]))
        .collect();
    let v = pi.to_vec();
    region_on(triangle, cell, part, dofs, move |_| (v.clone(), g.clone()))
}

pub(crate) fn diameter(points: &[Point]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max((points[i] - points[j]).norm());
        }
    }
    d
}

/// Diameter of a union of triangles.
pub(crate) fn triangles_diameter(triangles: &[[Point; 3]]) -> f64 {
    let pts: Vec<Point> = triangles.iter().flatten().copied().collect();
    diameter(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.name().parse::<SchemeKind>().unwrap(), k);
        }
        assert!("q3".parse::<SchemeKind>().is_err());
    }
}
