use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;

use crate::gd::{Control, GradientDiscretisation, LlePart, Region};
use crate::linalg::Triplets;
use crate::mesh::Point;
use crate::{Error, Result};

/// Barycentric elimination: each eliminated dof i is replaced by
/// `Σ_j β^i_j v_j` over a stencil of retained dofs, with Σβ = 1 and
/// Σβ x_j = x_i.
#[derive(Debug, Clone, Default)]
pub struct CondensationRule {
    pub stencils: Vec<(usize, Vec<(usize, f64)>)>,
}

#[derive(Debug, Clone)]
pub struct Condensed {
    pub gd: GradientDiscretisation,
    /// `retained[new] = old` dof index.
    pub retained: Vec<usize>,
    /// Extension V = E v from retained to all parent dofs, as
    /// `extension[old] = [(new, coefficient)]`.
    pub extension: Vec<Vec<(usize, f64)>>,
}

const STENCIL_TOL: f64 = 1e-12;

fn validate(
    gd: &GradientDiscretisation,
    rule: &CondensationRule,
) -> Result<HashMap<usize, Vec<(usize, f64)>>> {
    let mut map = HashMap::new();
    for (i, stencil) in &rule.stencils {
        if *i >= gd.n_dofs() {
            return Err(Error::Transform(format!(
                "eliminated dof {i} does not exist"
            )));
        }
        if gd.is_boundary(*i) {
            return Err(Error::Transform(format!(
                "boundary dof {i} cannot be eliminated"
            )));
        }
        if stencil.is_empty() {
            return Err(Error::Transform(format!("empty stencil for dof {i}")));
        }
        if map.insert(*i, stencil.clone()).is_some() {
            return Err(Error::Transform(format!("dof {i} is eliminated twice")));
        }
    }
    for (i, stencil) in &rule.stencils {
        let xi = gd.points()[*i];
        let mut sum = 0.0;
        let mut moment = Point::zeros();
        let mut scale: f64 = 0.0;
        for &(j, b) in stencil {
            if j >= gd.n_dofs() || map.contains_key(&j) {
                return Err(Error::Transform(format!(
                    "stencil of dof {i} uses dof {j}, which is not retained"
                )));
            }
            sum += b;
            moment += gd.points()[j] * b;
            scale = scale.max((gd.points()[j] - xi).norm());
        }
        if (sum - 1.0).abs() > STENCIL_TOL {
            return Err(Error::Transform(format!("weights of dof {i} sum to {sum}")));
        }
        if (moment - xi).norm() > STENCIL_TOL * scale.max(1.0) {
            return Err(Error::Transform(format!(
                "stencil of dof {i} does not reproduce its point (residual {:.3e})",
                (moment - xi).norm()
            )));
        }
    }
    Ok(map)
}

/// reg_Ba = 1 + max over eliminated i of
/// (Σ|β^i| + max over parts U with i ∈ I_U of max_j |x_j − x_i| / diam U).
pub fn reg_ba(gd: &GradientDiscretisation, rule: &CondensationRule) -> Result<f64> {
    let map = validate(gd, rule)?;
    let mut diam_of = vec![f64::INFINITY; gd.n_dofs()];
    for part in gd.parts() {
        for &d in &part.dofs {
            diam_of[d] = diam_of[d].min(part.diameter);
        }
    }
    let mut worst: f64 = 0.0;
    for (&i, stencil) in &map {
        let abs: f64 = stencil.iter().map(|(_, b)| b.abs()).sum();
        let spread = stencil
            .iter()
            .map(|&(j, _)| (gd.points()[j] - gd.points()[i]).norm())
            .fold(0.0, f64::max);
        let ratio = if diam_of[i].is_finite() {
            spread / diam_of[i]
        } else {
            0.0
        };
        worst = worst.max(abs + ratio);
    }
    Ok(1.0 + worst)
}

/// Eliminates the dofs of `rule`, keeping the quadrature layout and the LLE
/// partition of `gd`.
pub fn barycentric_condense(
    gd: &GradientDiscretisation,
    rule: &CondensationRule,
) -> Result<Condensed> {
    let map = validate(gd, rule)?;
    let retained: Vec<usize> = (0..gd.n_dofs()).filter(|i| !map.contains_key(i)).collect();
    let mut new_of = vec![usize::MAX; gd.n_dofs()];
    for (new, &old) in retained.iter().enumerate() {
        new_of[old] = new;
    }
    let extension: Vec<Vec<(usize, f64)>> = (0..gd.n_dofs())
        .map(|old| match map.get(&old) {
            Some(st) => st.iter().map(|&(j, b)| (new_of[j], b)).collect(),
            None => vec![(new_of[old], 1.0)],
        })
        .collect();

    // Local extension matrix from the parent dofs of a region to the union of their images.
    let local = |dofs: &[usize]| -> (Vec<usize>, DMatrix<f64>) {
        let set: BTreeSet<usize> = dofs
            .iter()
            .flat_map(|&d| extension[d].iter().map(|&(n, _)| n))
            .collect();
        let new_dofs: Vec<usize> = set.into_iter().collect();
        let mut e = DMatrix::zeros(dofs.len(), new_dofs.len());
        for (a, &d) in dofs.iter().enumerate() {
            for &(n, b) in &extension[d] {
                let col = new_dofs.binary_search(&n).unwrap();
                e[(a, col)] += b;
            }
        }
        (new_dofs, e)
    };

    let regions = gd
        .regions()
        .iter()
        .map(|r| {
            let (dofs, e) = local(&r.dofs);
            Region {
                cell: r.cell,
                part: r.part,
                dofs,
                points: r.points.clone(),
                weights: r.weights.clone(),
                pi: &r.pi * &e,
                gx: &r.gx * &e,
                gy: &r.gy * &e,
            }
        })
        .collect();
    let parts = gd
        .parts()
        .iter()
        .map(|p| {
            let (dofs, e) = local(&p.dofs);
            LlePart {
                triangles: p.triangles.clone(),
                diameter: p.diameter,
                dofs,
                gradient_samples: p.gradient_samples.iter().map(|g| g * &e).collect(),
            }
        })
        .collect();
    let points = retained.iter().map(|&i| gd.points()[i]).collect();
    let boundary = retained.iter().map(|&i| gd.is_boundary(i)).collect();
    let mut out = GradientDiscretisation::new(gd.kind, gd.h, points, boundary, regions, parts)?;

    if let Some(labels) = gd.piecewise_constant() {
        if labels.iter().all(|l| !map.contains_key(l)) {
            out = out.with_piecewise_constant(labels.iter().map(|&l| new_of[l]).collect());
        }
    }
    if let Some(c) = gd.control() {
        let mut t = Triplets::new(c.map.n_rows(), retained.len());
        for row in 0..c.map.n_rows() {
            let (cols, vals) = c.map.row(row);
            for (&old, &v) in cols.iter().zip(vals) {
                for &(n, b) in &extension[old] {
                    t.push(row, n, v * b);
                }
            }
        }
        out = out.with_control(Control {
            toolbox: c.toolbox.clone(),
            map: t.to_csr(),
        });
    }
    if let Some(z) = gd.zeta() {
        out = out.with_zeta(z);
    }
    Ok(Condensed {
        gd: out,
        retained,
        extension,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::simplicial;
    use crate::schemes::build_p1;

    fn p2() -> GradientDiscretisation {
        build_p1(&simplicial(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap(), 2, false).unwrap()
    }

    #[test]
    fn rejects_invalid_rules() {
        let gd = p2();
        let nv = 9;
        let interior_face = (nv..gd.n_dofs()).find(|&i| !gd.is_boundary(i)).unwrap();
        let boundary_face = (nv..gd.n_dofs()).find(|&i| gd.is_boundary(i)).unwrap();
        let bad_sum = CondensationRule {
            stencils: vec![(interior_face, vec![(0, 0.6), (4, 0.6)])],
        };
        assert!(barycentric_condense(&gd, &bad_sum).is_err());
        let boundary = CondensationRule {
            stencils: vec![(boundary_face, vec![(0, 1.0)])],
        };
        assert!(barycentric_condense(&gd, &boundary).is_err());
        let selfref = CondensationRule {
            stencils: vec![(interior_face, vec![(interior_face, 1.0)])],
        };
        assert!(barycentric_condense(&gd, &selfref).is_err());
    }

    #[test]
    fn edge_midpoints_from_endpoints() {
        // Eliminating interior P2 edge dofs onto their endpoints gives a valid
        // condensed discretisation that is still exact on affine functions.
        let gd = p2();
        let mesh = simplicial(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let nv = mesh.n_vertices();
        let stencils = mesh
            .faces()
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_boundary())
            .map(|(s, f)| (nv + s, vec![(f.vertices[0], 0.5), (f.vertices[1], 0.5)]))
            .collect();
        let rule = CondensationRule { stencils };
        let c = barycentric_condense(&gd, &rule).unwrap();
        // 16 faces on the 2x2 criss-cross-free mesh, 8 of them interior.
        assert_eq!(c.gd.n_dofs(), gd.n_dofs() - 8);
        let l = |x: Point| 1.0 + 2.0 * x.x - 3.0 * x.y;
        let f = c.gd.evaluate_full(&c.gd.interpolate_full(l)).unwrap();
        for g in &f.grads {
            assert!((g - nalgebra::Vector2::new(2.0, -3.0)).norm() < 1e-11);
        }
        assert!(reg_ba(&gd, &rule).unwrap() >= 2.0);
    }
}
