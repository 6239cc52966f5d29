//! Hybrid mimetic mixed family and its SUSHI condensation.
//!
//! Dofs: cell values (`0..n_cells`) then face values (`n_cells + σ`). On the
//! half-diamond D_{K,σ} the gradient is
//! `∇_K v + (√2 / d_{K,σ}) [L_K R_K(Q_K v)]_σ n_{K,σ}`.

use nalgebra::{DMatrix, DVector};

use super::{constant_region, require_mesh, triangles_diameter, SchemeKind};
use crate::gd::{Control, GradientDiscretisation, LlePart};
use crate::linalg::CsrMatrix;
use crate::mesh::{Point, PolytopalMesh};
use crate::quadrature::cell_quarter_diamonds;
use crate::transforms::{barycentric_condense, CondensationRule};
use crate::{Error, Result};

/// Choice of the isomorphisms L_K of Im(R_K).
#[derive(Debug, Clone, PartialEq)]
pub enum Stabilisation {
    Identity,
    /// Positive per-face scalars `s_{K,σ}` (local face order); L_K is
    /// `P diag(s) P` with P the orthogonal projector onto Im(R_K).
    FaceScalars(Vec<Vec<f64>>),
    /// Explicit square matrices acting on the face values of each cell.
    Matrices(Vec<DMatrix<f64>>),
}

/// Local operators of one cell: ∇_K and R_K as matrices acting on
/// `(v_K, v_σ0, ..., v_σn-1)`.
fn local_operators(mesh: &PolytopalMesh, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = &mesh.cells()[k];
    let n = c.faces.len();
    let mut grad = DMatrix::zeros(2, n + 1);
    for (i, &f) in c.faces.iter().enumerate() {
        let w = c.normals[i] * (mesh.faces()[f].measure / c.measure);
        grad[(0, i + 1)] = w.x;
        grad[(1, i + 1)] = w.y;
        grad[(0, 0)] -= w.x;
        grad[(1, 0)] -= w.y;
    }
    // R_K(Q_K v)_σ = (v_σ − v_K) − ∇_K v · (x̄_σ − x_K).
    let mut r = DMatrix::zeros(n, n + 1);
    for (i, &f) in c.faces.iter().enumerate() {
        let dx = mesh.faces()[f].center - c.center;
        r[(i, i + 1)] += 1.0;
        r[(i, 0)] -= 1.0;
        for j in 0..=n {
            r[(i, j)] -= grad[(0, j)] * dx.x + grad[(1, j)] * dx.y;
        }
    }
    (grad, r)
}

/// Orthonormal basis of the column space of `r`.
fn range_basis(r: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = r.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    DMatrix::from_fn(r.nrows(), cols.len(), |i, j| u[(i, cols[j])])
}

/// Per-cell L_K and the equivalence constant of N(L_K η) against N(η).
fn stabilisation_matrix(
    stab: &Stabilisation,
    k: usize,
    r: &DMatrix<f64>,
    weights: &DVector<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let n = r.nrows();
    if let Stabilisation::Identity = stab {
        return Ok((DMatrix::identity(n, n), 1.0));
    }
    let b = range_basis(r);
    let proj = &b * b.transpose();
    let l = match stab {
        Stabilisation::FaceScalars(s) => {
            let s = s.get(k).filter(|s| s.len() == n).ok_or_else(|| {
                Error::InvalidArgument(format!("cell {k} needs {n} stabilisation scalars"))
            })?;
            if s.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidArgument(format!(
                    "stabilisation scalars of cell {k} must be positive"
                )));
            }
            &proj * DMatrix::from_diagonal(&DVector::from_column_slice(s)) * &proj
        }
        Stabilisation::Matrices(m) => {
            let m = m.get(k).filter(|m| m.shape() == (n, n)).ok_or_else(|| {
                Error::InvalidArgument(format!("cell {k} needs a {n}x{n} stabilisation matrix"))
            })?;
            let lb = m * &b;
            let leak = (&lb - &proj * &lb).amax();
            if leak > 1e-10 * m.amax().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "stabilisation of cell {k} does not map Im(R_K) into itself"
                )));
            }
            m.clone()
        }
        Stabilisation::Identity => unreachable!(),
    };
    // Generalised Rayleigh quotients of (LB)ᵀ W (LB) against Bᵀ W B.
    let w = DMatrix::from_diagonal(weights);
    let lb = &l * &b;
    let num = lb.transpose() * &w * &lb;
    let den = b.transpose() * &w * &b;
    let chol = den
        .cholesky()
        .ok_or_else(|| Error::NotSpd(format!("face weights of cell {k}")))?;
    let linv = chol.l().try_inverse().unwrap();
    let c = &linv * num * linv.transpose();
    let eig = c.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-12 * hi.max(1.0)) {
        return Err(Error::InvalidArgument(format!(
            "stabilisation of cell {k} is not an isomorphism of Im(R_K)"
        )));
    }
    Ok((l, hi.max(1.0 / lo)))
}

/// Builds the HMM discretisation for a given stabilisation.
pub fn build_hmm(mesh: &PolytopalMesh, stab: &Stabilisation) -> Result<GradientDiscretisation> {
    require_mesh(SchemeKind::Hmm, mesh)?;
    let nc = mesh.n_cells();
    let mut points: Vec<Point> = mesh.centers();
    points.extend(mesh.faces().iter().map(|f| f.center));
    let mut boundary = vec![false; nc];
    boundary.extend(mesh.faces().iter().map(|f| f.is_boundary()));

    let mut regions = Vec::new();
    let mut parts = Vec::new();
    let mut labels = Vec::new();
    let mut zeta: f64 = 1.0;
    for (k, c) in mesh.cells().iter().enumerate() {
        let n = c.faces.len();
        let (grad, r) = local_operators(mesh, k);
        let weights = DVector::from_fn(n, |i, _| c.diamonds[i] / (c.distances[i] * c.distances[i]));
        let (l, z) = stabilisation_matrix(stab, k, &r, &weights)?;
        zeta = zeta.max(z);
        let lr = &l * &r;
        let mut dofs = vec![k];
        dofs.extend(c.faces.iter().map(|&f| nc + f));
        let mut pi = vec![0.0; n + 1];
        pi[0] = 1.0;
        let quarters = cell_quarter_diamonds(mesh, k, c.center);
        for i in 0..n {
            let scale = 2f64.sqrt() / c.distances[i];
            let mut g = grad.clone();
            for j in 0..=n {
                g[(0, j)] += scale * lr[(i, j)] * c.normals[i].x;
                g[(1, j)] += scale * lr[(i, j)] * c.normals[i].y;
            }
            let part = parts.len();
            let triangles: Vec<[Point; 3]> = quarters
                .iter()
                .filter(|q| q.local_face == i)
                .map(|q| q.triangle)
                .collect();
            for t in &triangles {
                regions.push(constant_region(*t, k, part, dofs.clone(), &pi, &g));
                labels.push(k);
            }
            parts.push(LlePart {
                diameter: triangles_diameter(&triangles),
                triangles,
                dofs: dofs.clone(),
                gradient_samples: vec![g],
            });
        }
    }
    let control = Control {
        toolbox: mesh.clone(),
        map: CsrMatrix::identity(nc + mesh.n_faces()),
    };
    Ok(GradientDiscretisation::new(
        SchemeKind::Hmm,
        mesh.stats().h,
        points,
        boundary,
        regions,
        parts,
    )?
    .with_piecewise_constant(labels)
    .with_control(control)
    .with_zeta(zeta))
}

const REPRODUCTION_TOL: f64 = 1e-12;

/// Minimum-norm weights β with Σβ = 1 and Σβ p_j = x, if they reproduce x.
fn barycentric_weights(candidates: &[Point], x: Point, scale: f64) -> Option<Vec<f64>> {
    let m = candidates.len();
    let a = DMatrix::from_fn(3, m, |i, j| match i {
        0 => 1.0,
        1 => (candidates[j].x - x.x) / scale,
        _ => (candidates[j].y - x.y) / scale,
    });
    let rhs = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
    let beta = a.clone().pseudo_inverse(1e-13).ok()? * &rhs;
    ((&a * &beta - rhs).amax() <= REPRODUCTION_TOL).then(|| beta.iter().copied().collect())
}

/// The SUSHI rule: every interior face value of HMM is written as a
/// barycentric combination of the two adjacent cell centers when they are
/// aligned with the face midpoint, otherwise of the minimum-norm combination
/// of the cell centers and boundary faces sharing a vertex with the face.
pub fn sushi_rule(mesh: &PolytopalMesh) -> Result<CondensationRule> {
    let nc = mesh.n_cells();
    let mut stencils = Vec::new();
    for (s, face) in mesh.faces().iter().enumerate() {
        let [k, l] = face.cells[..] else { continue };
        let x = face.center;
        let scale = mesh.cells()[k].diameter.max(mesh.cells()[l].diameter);
        let pair = [mesh.cells()[k].center, mesh.cells()[l].center];
        if let Some(b) = barycentric_weights(&pair, x, scale) {
            stencils.push((nc + s, vec![(k, b[0]), (l, b[1])]));
            continue;
        }
        let mut ids: Vec<usize> = face
            .vertices
            .iter()
            .flat_map(|&v| mesh.vertex_cells(v).iter().copied())
            .collect();
        let mut bfaces: Vec<usize> = face
            .vertices
            .iter()
            .flat_map(|&v| mesh.vertex_faces(v).iter().copied())
            .filter(|&f| mesh.faces()[f].is_boundary())
            .map(|f| nc + f)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        bfaces.sort_unstable();
        bfaces.dedup();
        ids.extend(bfaces);
        let pts: Vec<Point> = ids
            .iter()
            .map(|&d| {
                if d < nc {
                    mesh.cells()[d].center
                } else {
                    mesh.faces()[d - nc].center
                }
            })
            .collect();
        let b = barycentric_weights(&pts, x, scale).ok_or_else(|| {
            Error::Transform(format!(
                "no barycentric stencil reproduces the midpoint of face {s}"
            ))
        })?;
        stencils.push((nc + s, ids.into_iter().zip(b).collect()));
    }
    Ok(CondensationRule { stencils })
}

/// HMM with every interior face dof eliminated by [`sushi_rule`].
pub fn build_sushi(mesh: &PolytopalMesh, stab: &Stabilisation) -> Result<GradientDiscretisation> {
    require_mesh(SchemeKind::Sushi, mesh)?;
    let hmm = build_hmm(mesh, stab)?;
    let mut gd = barycentric_condense(&hmm, &sushi_rule(mesh)?)?.gd;
    gd.set_kind(SchemeKind::Sushi);
    Ok(gd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cartesian, perturb, simplicial};

    #[test]
    fn identity_has_unit_zeta() {
        let mesh = cartesian(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            build_hmm(&mesh, &Stabilisation::Identity).unwrap().zeta(),
            Some(1.0)
        );
    }

    #[test]
    fn face_scalars_scale_zeta() {
        let mesh = cartesian(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let s = vec![vec![2.0; 4]; 4];
        let gd = build_hmm(&mesh, &Stabilisation::FaceScalars(s)).unwrap();
        let z = gd.zeta().unwrap();
        assert!((z - 4.0).abs() < 1e-12, "{z}");
        let bad = vec![vec![1.0, 1.0, 0.0, 1.0]; 4];
        assert!(build_hmm(&mesh, &Stabilisation::FaceScalars(bad)).is_err());
    }

    #[test]
    fn non_invariant_matrix_is_rejected() {
        let mesh = cartesian(1, 1, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let mut m = DMatrix::identity(4, 4);
        m[(0, 1)] = 1.0;
        assert!(build_hmm(&mesh, &Stabilisation::Matrices(vec![m])).is_err());
    }

    #[test]
    fn range_of_r_is_balanced() {
        let mesh = perturb(&cartesian(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap(), 0.2, 5).unwrap();
        for k in 0..mesh.n_cells() {
            let (_, r) = local_operators(&mesh, k);
            let c = &mesh.cells()[k];
            // Σ |σ| R(ξ)_σ n_σ = 0 for every ξ.
            for j in 0..r.ncols() {
                let mut s = Point::zeros();
                for (i, &f) in c.faces.iter().enumerate() {
                    s += c.normals[i] * (mesh.faces()[f].measure * r[(i, j)]);
                }
                assert!(s.norm() < 1e-13);
            }
            assert_eq!(range_basis(&r).ncols(), c.faces.len() - 2);
        }
    }

    #[test]
    fn sushi_stencils() {
        let mesh = cartesian(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let rule = sushi_rule(&mesh).unwrap();
        assert_eq!(rule.stencils.len(), 12);
        assert!(rule
            .stencils
            .iter()
            .all(|(_, s)| s.len() == 2 && s.iter().all(|(_, b)| (b - 0.5).abs() < 1e-14)));
        let tri = simplicial(3, 3, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let gd = build_sushi(&tri, &Stabilisation::Identity).unwrap();
        assert_eq!(
            gd.n_dofs(),
            tri.n_cells() + tri.faces().iter().filter(|f| f.is_boundary()).count()
        );
    }
}
