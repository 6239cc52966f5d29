//! MPFA-O on Cartesian and simplicial meshes.
//!
//! Dofs: cell values (indices `0..n_cells`) and one value per (face, vertex)
//! pair (index `n_cells + 2σ + i` for the i-th vertex of face σ). The
//! gradient on the subcell V_{K,v} is
//! `(1/|V_{K,v}|) Σ_{σ ∋ v} |σ_v| (u_{σ,v} − u_K) n_{K,σ}` with `|σ_v| = |σ|/2`.

use nalgebra::{DMatrix, Matrix2};

use super::{constant_region, require_mesh, triangles_diameter, SchemeKind};
use crate::gd::{Control, GradientDiscretisation, LlePart};
use crate::linalg::{solve_spd, CsrMatrix, Triplets};
use crate::mesh::{split_faces, MeshKind, Point, PolytopalMesh};
use crate::quadrature::triangle_area;
use crate::{Error, Result};

#[derive(Debug, Clone)]
struct Subcell {
    cell: usize,
    vertex: usize,
    faces: [usize; 2],
    /// |σ_v| for the two faces.
    halves: [f64; 2],
    normals: [Point; 2],
    measure: f64,
    triangles: [[Point; 3]; 2],
}

fn pair_index(n_cells: usize, face_vertices: &[usize; 2], face: usize, vertex: usize) -> usize {
    let i = if face_vertices[0] == vertex { 0 } else { 1 };
    n_cells + 2 * face + i
}

fn subcells(mesh: &PolytopalMesh) -> Vec<Subcell> {
    let mut out = Vec::new();
    for (k, c) in mesh.cells().iter().enumerate() {
        let xk = c.centroid;
        for &v in &c.vertices {
            let [a, b] = c.faces_at_vertex(v).unwrap();
            let faces = [c.faces[a], c.faces[b]];
            let pv = mesh.vertices()[v];
            let triangles = faces.map(|f| [xk, pv, mesh.faces()[f].center]);
            out.push(Subcell {
                cell: k,
                vertex: v,
                faces,
                halves: faces.map(|f| 0.5 * mesh.faces()[f].measure),
                normals: [c.normals[a], c.normals[b]],
                measure: triangles
                    .iter()
                    .map(|t| triangle_area(t[0], t[1], t[2]))
                    .sum(),
                triangles,
            });
        }
    }
    out
}

/// Builds MPFA-O. Rejects meshes that are neither Cartesian nor simplicial.
pub fn build_mpfa_o(mesh: &PolytopalMesh) -> Result<GradientDiscretisation> {
    require_mesh(SchemeKind::MpfaO, mesh)?;
    let nc = mesh.n_cells();
    let mut points: Vec<Point> = mesh.cells().iter().map(|c| c.centroid).collect();
    let mut boundary = vec![false; nc];
    for f in mesh.faces() {
        for i in 0..2 {
            let v = mesh.vertices()[f.vertices[i]];
            let w = mesh.vertices()[f.vertices[1 - i]];
            points.push(match mesh.kind() {
                MeshKind::Simplicial => (v * 2.0 + w) / 3.0,
                _ => f.center,
            });
            boundary.push(f.is_boundary());
        }
    }
    let mut regions = Vec::new();
    let mut parts = Vec::new();
    let mut labels = Vec::new();
    for s in subcells(mesh) {
        let dofs = vec![
            s.cell,
            pair_index(nc, &mesh.faces()[s.faces[0]].vertices, s.faces[0], s.vertex),
            pair_index(nc, &mesh.faces()[s.faces[1]].vertices, s.faces[1], s.vertex),
        ];
        let mut g = DMatrix::zeros(2, 3);
        for a in 0..2 {
            let col = s.normals[a] * (s.halves[a] / s.measure);
            g[(0, a + 1)] = col.x;
            g[(1, a + 1)] = col.y;
            g[(0, 0)] -= col.x;
            g[(1, 0)] -= col.y;
        }
        let part = parts.len();
        for t in s.triangles {
            regions.push(constant_region(
                t,
                s.cell,
                part,
                dofs.clone(),
                &[1.0, 0.0, 0.0],
                &g,
            ));
            labels.push(s.cell);
        }
        parts.push(LlePart {
            triangles: s.triangles.to_vec(),
            diameter: triangles_diameter(&s.triangles),
            dofs,
            gradient_samples: vec![g],
        });
    }
    let split = split_faces(mesh)?;
    let mut t = Triplets::new(nc + split.mesh.n_faces(), points.len());
    for k in 0..nc {
        t.push(k, k, 1.0);
    }
    for (s, halves) in split.half.iter().enumerate() {
        for (i, &h) in halves.iter().enumerate() {
            t.push(nc + h, nc + 2 * s + i, 1.0);
        }
    }
    let control = Control {
        toolbox: split.mesh,
        map: t.to_csr(),
    };
    Ok(GradientDiscretisation::new(
        SchemeKind::MpfaO,
        mesh.stats().h,
        points,
        boundary,
        regions,
        parts,
    )?
    .with_piecewise_constant(labels)
    .with_control(control))
}

/// Subcell fluxes, conservativity and local elimination of the face unknowns.
#[derive(Debug, Clone)]
pub struct MpfaSystem {
    n_cells: usize,
    n_dofs: usize,
    face_vertices: Vec<[usize; 2]>,
    face_boundary: Vec<bool>,
    subcells: Vec<Subcell>,
    by_vertex: Vec<Vec<usize>>,
    /// `trans[s][(a, b)] = |σ_a,v| |σ_b,v| n_a · A_K n_b / |V_{K,v}|`.
    trans: Vec<Matrix2<f64>>,
}

/// One elimination group: the unknown face values around a vertex as a
/// linear function of the surrounding cell values.
#[derive(Debug, Clone)]
struct VertexElimination {
    faces: Vec<usize>,
    cells: Vec<usize>,
    extension: DMatrix<f64>,
}

/// A flux F_{K,σ,v} = ∫_{σ_v} A 𝒢 u · n_{K,σ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubFlux {
    pub cell: usize,
    pub face: usize,
    pub vertex: usize,
    pub value: f64,
}

impl MpfaSystem {
    /// `tensor(K)` is the (constant) diffusion tensor of cell K.
    pub fn new(mesh: &PolytopalMesh, tensor: impl Fn(usize) -> Matrix2<f64>) -> Result<Self> {
        require_mesh(SchemeKind::MpfaO, mesh)?;
        let subcells = subcells(mesh);
        let mut by_vertex = vec![Vec::new(); mesh.n_vertices()];
        let trans = subcells
            .iter()
            .enumerate()
            .map(|(i, s)| {
                by_vertex[s.vertex].push(i);
                let a = tensor(s.cell);
                Matrix2::from_fn(|p, q| {
                    s.halves[p] * s.halves[q] * s.normals[p].dot(&(a * s.normals[q])) / s.measure
                })
            })
            .collect();
        Ok(MpfaSystem {
            n_cells: mesh.n_cells(),
            n_dofs: mesh.n_cells() + 2 * mesh.n_faces(),
            face_vertices: mesh.faces().iter().map(|f| f.vertices).collect(),
            face_boundary: mesh.faces().iter().map(|f| f.is_boundary()).collect(),
            subcells,
            by_vertex,
            trans,
        })
    }

    fn pair(&self, face: usize, vertex: usize) -> usize {
        pair_index(self.n_cells, &self.face_vertices[face], face, vertex)
    }

    /// All subcell fluxes of a full dof vector.
    pub fn fluxes(&self, u: &[f64]) -> Result<Vec<SubFlux>> {
        if u.len() != self.n_dofs {
            return Err(Error::DofMismatch(format!(
                "{} values for {} MPFA dofs",
                u.len(),
                self.n_dofs
            )));
        }
        let mut out = Vec::with_capacity(2 * self.subcells.len());
        for (s, t) in self.subcells.iter().zip(&self.trans) {
            let jumps = s.faces.map(|f| u[self.pair(f, s.vertex)] - u[s.cell]);
            for a in 0..2 {
                out.push(SubFlux {
                    cell: s.cell,
                    face: s.faces[a],
                    vertex: s.vertex,
                    value: t[(a, 0)] * jumps[0] + t[(a, 1)] * jumps[1],
                });
            }
        }
        Ok(out)
    }

    /// Largest |F_{K,σ,v} + F_{L,σ,v}| over interior (σ, v) pairs.
    pub fn conservativity_residual(&self, u: &[f64]) -> Result<f64> {
        let mut sums = vec![0.0; self.n_dofs];
        for f in self.fluxes(u)? {
            sums[self.pair(f.face, f.vertex)] += f.value;
        }
        Ok((0..self.face_vertices.len())
            .filter(|&f| !self.face_boundary[f])
            .flat_map(|f| [sums[self.n_cells + 2 * f], sums[self.n_cells + 2 * f + 1]])
            .fold(0.0, |m, v: f64| m.max(v.abs())))
    }

    fn eliminate_vertex(&self, v: usize) -> Result<VertexElimination> {
        let subs = &self.by_vertex[v];
        let mut faces: Vec<usize> = subs
            .iter()
            .flat_map(|&s| self.subcells[s].faces)
            .filter(|&f| !self.face_boundary[f])
            .collect();
        faces.sort_unstable();
        faces.dedup();
        let mut cells: Vec<usize> = subs.iter().map(|&s| self.subcells[s].cell).collect();
        cells.sort_unstable();
        cells.dedup();
        let (nf, ncl) = (faces.len(), cells.len());
        let mut cf = DMatrix::zeros(nf, nf);
        let mut cc = DMatrix::zeros(nf, ncl);
        for &si in subs {
            let (s, t) = (&self.subcells[si], &self.trans[si]);
            let kc = cells.binary_search(&s.cell).unwrap();
            for a in 0..2 {
                let Ok(row) = faces.binary_search(&s.faces[a]) else {
                    continue;
                };
                for b in 0..2 {
                    if let Ok(col) = faces.binary_search(&s.faces[b]) {
                        cf[(row, col)] += t[(a, b)];
                    }
                    cc[(row, kc)] -= t[(a, b)];
                }
            }
        }
        let extension = if nf == 0 {
            DMatrix::zeros(0, ncl)
        } else {
            -cf.lu()
                .solve(&cc)
                .ok_or_else(|| Error::NotSpd(format!("singular local MPFA system at vertex {v}")))?
        };
        Ok(VertexElimination {
            faces,
            cells,
            extension,
        })
    }

    /// Cell-centred system obtained by eliminating every face unknown from
    /// the local conservativity equations. Row K reads `−Σ F_{K,σ,v} = rhs_K`.
    pub fn eliminated_matrix(&self) -> Result<CsrMatrix> {
        let mut t = Triplets::new(self.n_cells, self.n_cells);
        for v in 0..self.by_vertex.len() {
            if self.by_vertex[v].is_empty() {
                continue;
            }
            let el = self.eliminate_vertex(v)?;
            for &si in &self.by_vertex[v] {
                let (s, tr) = (&self.subcells[si], &self.trans[si]);
                for a in 0..2 {
                    // F = Σ_b T_ab (u_{σ_b} − u_K), with u_σ = E u_cells.
                    let mut row = vec![0.0; el.cells.len()];
                    let kc = el.cells.binary_search(&s.cell).unwrap();
                    for b in 0..2 {
                        row[kc] -= tr[(a, b)];
                        if let Ok(fi) = el.faces.binary_search(&s.faces[b]) {
                            for (c, r) in row.iter_mut().enumerate() {
                                *r += tr[(a, b)] * el.extension[(fi, c)];
                            }
                        }
                    }
                    for (c, &r) in row.iter().enumerate() {
                        t.push(s.cell, el.cells[c], -r);
                    }
                }
            }
        }
        Ok(t.to_csr())
    }

    /// Solves the eliminated system and rebuilds the full dof vector.
    pub fn solve_eliminated(&self, cell_rhs: &[f64]) -> Result<Vec<f64>> {
        if cell_rhs.len() != self.n_cells {
            return Err(Error::DofMismatch(
                "right-hand side must have one entry per cell".into(),
            ));
        }
        let a = self.eliminated_matrix()?;
        let cells = solve_spd(&a, cell_rhs)?;
        let mut u = vec![0.0; self.n_dofs];
        u[..self.n_cells].copy_from_slice(&cells);
        for v in 0..self.by_vertex.len() {
            if self.by_vertex[v].is_empty() {
                continue;
            }
            let el = self.eliminate_vertex(v)?;
            let local = nalgebra::DVector::from_iterator(
                el.cells.len(),
                el.cells.iter().map(|&c| cells[c]),
            );
            let faces = &el.extension * local;
            for (i, &f) in el.faces.iter().enumerate() {
                u[self.pair(f, v)] = faces[i];
            }
        }
        Ok(u)
    }
}
