use nalgebra::{DMatrix, Vector2};

use super::conforming::Barycentric;
use super::{region_on, require_mesh, SchemeKind};
use crate::gd::{Control, GradientDiscretisation, LlePart};
use crate::linalg::Triplets;
use crate::mesh::{Point, PolytopalMesh};
use crate::quadrature::cell_quarter_diamonds;
use crate::transforms::{mass_lump, LumpingPartition};
use crate::Result;

/// Non-conforming P1 with one dof per face midpoint.
///
/// The basis function of face σ in a triangle is `1 − 2 λ_v` with v the
/// vertex opposite σ. With `lumped`, Π_D is lumped onto the diamonds D_σ.
pub fn build_ncp1(mesh: &PolytopalMesh, lumped: bool) -> Result<GradientDiscretisation> {
    let kind = if lumped {
        SchemeKind::Ncp1Lumped
    } else {
        SchemeKind::Ncp1
    };
    require_mesh(kind, mesh)?;
    let points: Vec<Point> = mesh.faces().iter().map(|f| f.center).collect();
    let boundary: Vec<bool> = mesh.faces().iter().map(|f| f.is_boundary()).collect();
    let mut regions = Vec::new();
    let mut labels = Vec::new();
    let mut parts = Vec::with_capacity(mesh.n_cells());
    for (k, cell) in mesh.cells().iter().enumerate() {
        let p = [0, 1, 2].map(|i| mesh.vertices()[cell.vertices[i]]);
        let bary = Barycentric::new(p);
        let grads = bary.gradients();
        // Local face i joins vertices i and i + 1; the opposite vertex is i + 2.
        let opposite = [2, 0, 1];
        let basis = move |x: Point| -> (Vec<f64>, Vec<Vector2<f64>>) {
            let l = bary.coords(x);
            let v = opposite.iter().map(|&o| 1.0 - 2.0 * l[o]).collect();
            let g = opposite.iter().map(|&o| grads[o] * -2.0).collect();
            (v, g)
        };
        let dofs = cell.faces.clone();
        for qd in cell_quarter_diamonds(mesh, k, cell.centroid) {
            regions.push(region_on(qd.triangle, k, k, dofs.clone(), basis));
            labels.push(qd.face);
        }
        let (_, g) = basis(cell.centroid);
        parts.push(LlePart {
            triangles: vec![p],
            diameter: cell.diameter,
            dofs,
            gradient_samples: vec![DMatrix::from_fn(2, 3, |r, j| g[j][r])],
        });
    }
    let control = ncp1_control(mesh)?;
    let gd = GradientDiscretisation::new(kind, mesh.stats().h, points, boundary, regions, parts)?
        .with_control(control);
    if lumped {
        let mut gd = mass_lump(&gd, &LumpingPartition::new(labels))?;
        gd.set_kind(SchemeKind::Ncp1Lumped);
        Ok(gd)
    } else {
        Ok(gd)
    }
}

/// Φ(u)_K = mean of the three face values, Φ(u)_σ = u_σ, on the mesh with
/// centroids as cell centers.
fn ncp1_control(mesh: &PolytopalMesh) -> Result<Control> {
    let centroids: Vec<Point> = mesh.cells().iter().map(|c| c.centroid).collect();
    let toolbox = mesh.with_centers(&centroids)?;
    let nc = mesh.n_cells();
    let mut t = Triplets::new(nc + mesh.n_faces(), mesh.n_faces());
    for (k, c) in mesh.cells().iter().enumerate() {
        for &f in &c.faces {
            t.push(k, f, 1.0 / 3.0);
        }
    }
    for f in 0..mesh.n_faces() {
        t.push(nc + f, f, 1.0);
    }
    Ok(Control {
        toolbox,
        map: t.to_csr(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::simplicial;

    #[test]
    fn basis_is_orthogonal_and_nodal() {
        let mesh = simplicial(1, 1, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let gd = build_ncp1(&mesh, false).unwrap();
        for r in gd.regions() {
            for q in 0..r.n_points() {
                let s: f64 = r.pi.row(q).iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
        // ∫_K α_σ α_σ' = δ |K| / 3 for a triangle.
        let k = 0;
        let regs: Vec<_> = gd.regions().iter().filter(|r| r.cell == k).collect();
        for a in 0..3 {
            for b in 0..3 {
                let v: f64 = regs
                    .iter()
                    .map(|r| {
                        (0..r.n_points())
                            .map(|q| r.weights[q] * r.pi[(q, a)] * r.pi[(q, b)])
                            .sum::<f64>()
                    })
                    .sum();
                let expected = if a == b { 0.5 / 3.0 } else { 0.0 };
                assert!((v - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lumped_uses_diamonds() {
        let mesh = simplicial(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let gd = build_ncp1(&mesh, true).unwrap();
        let m = gd.mass_matrix();
        // An interior diagonal face of the 2x2 mesh: diamond = 2 * (1/8) / 3.
        for i in 0..gd.n_free() {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!(i == j && v > 0.0 || v == 0.0);
            }
        }
        let total: f64 = (0..gd.n_free()).map(|i| m.get(i, i)).sum();
        let interior: f64 = mesh
            .faces()
            .iter()
            .filter(|f| !f.is_boundary())
            .map(|f| {
                f.cells
                    .iter()
                    .map(|&c| mesh.cells()[c].measure / 3.0)
                    .sum::<f64>()
            })
            .sum();
        assert!((total - interior).abs() < 1e-14);
    }
}
