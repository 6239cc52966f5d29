use nalgebra::{DMatrix, Matrix2, Vector2};

use super::{region_on, require_mesh, SchemeKind};
use crate::gd::{GradientDiscretisation, LlePart};
use crate::mesh::{Point, PolytopalMesh};
use crate::quadrature::cell_quarter_diamonds;
use crate::transforms::{mass_lump, LumpingPartition};
use crate::{Error, Result};

/// Affine barycentric coordinates of a triangle.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Barycentric {
    origin: Point,
    inverse: Matrix2<f64>,
}

impl Barycentric {
    pub(crate) fn new(p: [Point; 3]) -> Self {
        let t = Matrix2::from_columns(&[p[1] - p[0], p[2] - p[0]]);
        Barycentric {
            origin: p[0],
            inverse: t.try_inverse().expect("degenerate triangle"),
        }
    }

    pub(crate) fn coords(&self, x: Point) -> [f64; 3] {
        let l = self.inverse * (x - self.origin);
        [1.0 - l.x - l.y, l.x, l.y]
    }

    pub(crate) fn gradients(&self) -> [Vector2<f64>; 3] {
        let g1 = Vector2::new(self.inverse[(0, 0)], self.inverse[(0, 1)]);
        let g2 = Vector2::new(self.inverse[(1, 0)], self.inverse[(1, 1)]);
        [-g1 - g2, g1, g2]
    }
}

/// Conforming Lagrange P_k (k = 1, 2) on a simplicial mesh; with `lumped`
/// (k = 1 only) the reconstruction is lumped onto the barycentric dual cells.
///
/// Dofs are the vertices, followed by the faces for k = 2.
pub fn build_p1(mesh: &PolytopalMesh, k: usize, lumped: bool) -> Result<GradientDiscretisation> {
    let kind = match (k, lumped) {
        (1, false) => SchemeKind::P1,
        (2, false) => SchemeKind::P2,
        (1, true) => SchemeKind::P1Lumped,
        (2, true) => {
            return Err(Error::InvalidArgument(
                "mass lumping is only defined for k = 1".into(),
            ))
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "polynomial degree {k} not in {{1, 2}}"
            )))
        }
    };
    require_mesh(kind, mesh)?;
    let nv = mesh.n_vertices();
    let mut points = mesh.vertices().to_vec();
    let mut boundary: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
    if k == 2 {
        points.extend(mesh.faces().iter().map(|f| f.center));
        boundary.extend(mesh.faces().iter().map(|f| f.is_boundary()));
    }

    let mut regions = Vec::new();
    let mut labels = Vec::new();
    let mut parts = Vec::with_capacity(mesh.n_cells());
    for (kc, cell) in mesh.cells().iter().enumerate() {
        let p = [0, 1, 2].map(|i| mesh.vertices()[cell.vertices[i]]);
        let bary = Barycentric::new(p);
        let grads = bary.gradients();
        let mut dofs: Vec<usize> = cell.vertices.clone();
        if k == 2 {
            // Local face i joins local vertices i and i + 1.
            dofs.extend(cell.faces.iter().map(|&f| nv + f));
        }
        let basis = move |x: Point| -> (Vec<f64>, Vec<Vector2<f64>>) {
            let l = bary.coords(x);
            if k == 1 {
                return (l.to_vec(), grads.to_vec());
            }
            let mut v = Vec::with_capacity(6);
            let mut g = Vec::with_capacity(6);
            for i in 0..3 {
                v.push(l[i] * (2.0 * l[i] - 1.0));
                g.push(grads[i] * (4.0 * l[i] - 1.0));
            }
            for i in 0..3 {
                let j = (i + 1) % 3;
                v.push(4.0 * l[i] * l[j]);
                g.push((grads[j] * l[i] + grads[i] * l[j]) * 4.0);
            }
            (v, g)
        };
        for qd in cell_quarter_diamonds(mesh, kc, cell.centroid) {
            regions.push(region_on(qd.triangle, kc, kc, dofs.clone(), basis));
            labels.push(qd.vertex);
        }
        let gradient_samples = if k == 1 {
            vec![DMatrix::from_fn(2, 3, |r, j| grads[j][r])]
        } else {
            p.iter()
                .map(|&x| {
                    let (_, g) = basis(x);
                    DMatrix::from_fn(2, 6, |r, j| g[j][r])
                })
                .collect()
        };
        parts.push(LlePart {
            triangles: vec![p],
            diameter: cell.diameter,
            dofs,
            gradient_samples,
        });
    }
    let gd = GradientDiscretisation::new(kind, mesh.stats().h, points, boundary, regions, parts)?;
    if lumped {
        let mut gd = mass_lump(&gd, &LumpingPartition::new(labels))?;
        gd.set_kind(SchemeKind::P1Lumped);
        Ok(gd)
    } else {
        Ok(gd)
    }
}
