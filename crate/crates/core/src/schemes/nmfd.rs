//! Nodal mimetic finite differences.
//!
//! Dofs are the vertices. Each cell K carries vertex weights ω_K^v summing to
//! |K|, which fix its own center x_K = (1/|K|) Σ ω_K^v v; the mesh centers are
//! not used. In two dimensions the face weights are forced to ω_σ^v = |σ|/2,
//! so the nodal subcell V_{K,v} is the union of the triangles (x_K, v, x̄_σ)
//! over the two faces σ of K through v.

use nalgebra::DMatrix;

use super::{constant_region, require_mesh, triangles_diameter, SchemeKind};
use crate::gd::{Control, GradientDiscretisation, LlePart};
use crate::linalg::Triplets;
use crate::mesh::{Point, PolytopalMesh};
use crate::quadrature::triangle_area;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum NmfdWeights {
    /// ω_K^v = |K| / Card(V_K).
    Default,
    /// Explicit weights, one list per cell in the cell's vertex order.
    PerCell(Vec<Vec<f64>>),
}

fn cell_weights(mesh: &PolytopalMesh, weights: &NmfdWeights, k: usize) -> Result<Vec<f64>> {
    let c = &mesh.cells()[k];
    let n = c.vertices.len();
    match weights {
        NmfdWeights::Default => Ok(vec![c.measure / n as f64; n]),
        NmfdWeights::PerCell(w) => {
            let w = w.get(k).filter(|w| w.len() == n).ok_or_else(|| {
                Error::InvalidArgument(format!("cell {k} needs {n} vertex weights"))
            })?;
            let s: f64 = w.iter().sum();
            if (s - c.measure).abs() > 1e-12 * c.measure.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "vertex weights of cell {k} sum to {s}, not |K|"
                )));
            }
            Ok(w.clone())
        }
    }
}

pub fn build_nmfd(mesh: &PolytopalMesh, weights: &NmfdWeights) -> Result<GradientDiscretisation> {
    require_mesh(SchemeKind::Nmfd, mesh)?;
    let nv = mesh.n_vertices();
    let points = mesh.vertices().to_vec();
    let boundary: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
    let mut regions = Vec::new();
    let mut parts = Vec::new();
    let mut centers = Vec::with_capacity(mesh.n_cells());
    let mut averages = Vec::with_capacity(mesh.n_cells());
    for (k, c) in mesh.cells().iter().enumerate() {
        let n = c.vertices.len();
        let w = cell_weights(mesh, weights, k)?;
        let pv: Vec<Point> = c.vertices.iter().map(|&v| mesh.vertices()[v]).collect();
        let xk: Point = pv.iter().zip(&w).map(|(p, wi)| p * *wi).sum::<Point>() / c.measure;
        let dist: Vec<f64> = c
            .faces
            .iter()
            .enumerate()
            .map(|(i, &f)| (mesh.faces()[f].center - xk).dot(&c.normals[i]))
            .collect();
        if let Some(i) = dist.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::UnsupportedMesh {
                scheme: SchemeKind::Nmfd.name(),
                reason: format!(
                    "cell {k} is not star-shaped w.r.t. its weighted center (face {})",
                    c.faces[i]
                ),
            });
        }
        centers.push(xk);
        let pi: Vec<f64> = w.iter().map(|wi| wi / c.measure).collect();
        averages.push(pi.clone());

        // ∇_K v = (1/|K|) Σ_σ |σ| (v_a + v_b)/2 n_σ; face i joins local vertices i, i + 1.
        let mut grad = DMatrix::<f64>::zeros(2, n);
        for (i, &f) in c.faces.iter().enumerate() {
            let s = 0.5 * mesh.faces()[f].measure / c.measure;
            for j in [i, (i + 1) % n] {
                grad[(0, j)] += s * c.normals[i].x;
                grad[(1, j)] += s * c.normals[i].y;
            }
        }
        // R_{K,v}(Q_K v) = (v_v − v_K) − ∇_K v · (v − x_K).
        let mut r = DMatrix::<f64>::zeros(n, n);
        for a in 0..n {
            r[(a, a)] += 1.0;
            for j in 0..n {
                r[(a, j)] -= pi[j];
                r[(a, j)] -= grad[(0, j)] * (pv[a] - xk).x + grad[(1, j)] * (pv[a] - xk).y;
            }
        }
        for a in 0..n {
            let [fa, fb] = [(a + n - 1) % n, a];
            let triangles = [fa, fb].map(|i| [xk, pv[a], mesh.faces()[c.faces[i]].center]);
            let measure: f64 = triangles
                .iter()
                .map(|t| triangle_area(t[0], t[1], t[2]))
                .sum();
            // N_{K,v} / h_K = (1/(2|V|)) Σ ω_σ^v n_σ.
            let nv_dir = [fa, fb]
                .iter()
                .map(|&i| c.normals[i] * (0.5 * mesh.faces()[c.faces[i]].measure))
                .sum::<Point>()
                / (2.0 * measure);
            let mut g = grad.clone();
            for j in 0..n {
                g[(0, j)] += r[(a, j)] * nv_dir.x;
                g[(1, j)] += r[(a, j)] * nv_dir.y;
            }
            let part = parts.len();
            for t in &triangles {
                regions.push(constant_region(*t, k, part, c.vertices.clone(), &pi, &g));
            }
            parts.push(LlePart {
                triangles: triangles.to_vec(),
                diameter: triangles_diameter(&triangles),
                dofs: c.vertices.clone(),
                gradient_samples: vec![g],
            });
        }
    }
    let toolbox = mesh.with_centers(&centers)?;
    let nc = mesh.n_cells();
    let mut t = Triplets::new(nc + mesh.n_faces(), nv);
    for (k, c) in mesh.cells().iter().enumerate() {
        for (j, &v) in c.vertices.iter().enumerate() {
            t.push(k, v, averages[k][j]);
        }
    }
    for (f, face) in mesh.faces().iter().enumerate() {
        for &v in &face.vertices {
            t.push(nc + f, v, 0.5);
        }
    }
    let control = Control {
        toolbox,
        map: t.to_csr(),
    };
    Ok(GradientDiscretisation::new(
        SchemeKind::Nmfd,
        mesh.stats().h,
        points,
        boundary,
        regions,
        parts,
    )?
    .with_control(control))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cartesian, perturb};

    #[test]
    fn subcells_sum_to_cells() {
        let mesh = perturb(&cartesian(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap(), 0.2, 2).unwrap();
        let gd = build_nmfd(&mesh, &NmfdWeights::Default).unwrap();
        for (k, c) in mesh.cells().iter().enumerate() {
            let m: f64 = gd
                .regions()
                .iter()
                .filter(|r| r.cell == k)
                .map(|r| r.measure())
                .sum();
            assert!((m - c.measure).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_must_sum_to_measure() {
        let mesh = cartesian(1, 1, [0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(build_nmfd(&mesh, &NmfdWeights::PerCell(vec![vec![0.25; 3]])).is_err());
        assert!(build_nmfd(&mesh, &NmfdWeights::PerCell(vec![vec![0.3, 0.2, 0.3, 0.2]])).is_ok());
    }

    #[test]
    fn cell_gradient_integral_is_consistent() {
        // ∫_K ∇_D v = |K| ∇_K v: the stabilisation integrates to zero.
        let mesh = perturb(&cartesian(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap(), 0.25, 9).unwrap();
        let gd = build_nmfd(&mesh, &NmfdWeights::Default).unwrap();
        let ints = gd.cell_gradient_integrals(mesh.n_cells());
        let ctrl = gd.control().unwrap();
        for (k, c) in ctrl.toolbox.cells().iter().enumerate() {
            for v in 0..gd.n_dofs() {
                let mut e = vec![0.0; gd.n_dofs()];
                e[v] = 1.0;
                let phi = ctrl.map.mul_vec(&e);
                let mut g = Point::zeros();
                for (i, &f) in c.faces.iter().enumerate() {
                    g += c.normals[i] * (ctrl.toolbox.faces()[f].measure * phi[mesh.n_cells() + f]);
                }
                assert!((ints.get(2 * k, v) - g.x).abs() < 1e-14);
                assert!((ints.get(2 * k + 1, v) - g.y).abs() < 1e-14);
            }
        }
    }
}
