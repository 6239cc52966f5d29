use nalgebra::{DMatrix, Vector2};

use super::GradientDiscretisation;
use crate::mesh::Point;
use crate::quadrature::distance_to_triangle;
use crate::{Error, Result};

/// `max |G ξ|` over the cube `max_i |ξ_i| ≤ 1`, for a 2 x n matrix `G`.
///
/// The maximum is `|Σ_i s_i g_i|` for the sign pattern `s_i = sign(g_i · e)`
/// of some unit direction e. Those patterns are constant on the arcs between
/// the directions orthogonal to the columns, so one probe per arc is exact.
pub fn cube_norm(g: &DMatrix<f64>) -> f64 {
    assert_eq!(g.nrows(), 2);
    let cols: Vec<Vector2<f64>> = (0..g.ncols())
        .map(|j| Vector2::new(g[(0, j)], g[(1, j)]))
        .filter(|c| c.norm() > 0.0)
        .collect();
    if cols.is_empty() {
        return 0.0;
    }
    let tau = std::f64::consts::TAU;
    let mut angles: Vec<f64> = cols
        .iter()
        .flat_map(|c| {
            let a = c.y.atan2(c.x);
            [
                a + 0.5 * std::f64::consts::PI,
                a - 0.5 * std::f64::consts::PI,
            ]
        })
        .map(|a| a.rem_euclid(tau))
        .collect();
    angles.sort_by(f64::total_cmp);
    let mut best: f64 = 0.0;
    for i in 0..angles.len() {
        let a = angles[i];
        let b = if i + 1 < angles.len() {
            angles[i + 1]
        } else {
            angles[0] + tau
        };
        let mid = 0.5 * (a + b);
        let e = Vector2::new(mid.cos(), mid.sin());
        let c: Vector2<f64> = cols.iter().map(|g| *g * g.dot(&e).signum()).sum();
        best = best.max(c.norm());
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LleRegularity {
    pub value: f64,
    /// max over U of ‖𝒢_U‖ + max_{i ∈ I_U} dist(x_i, U) / diam(U).
    pub local_term: f64,
    /// Largest Σ_i |α_i| over the quadrature nodes.
    pub alpha_term: f64,
}

fn part_geometry(gd: &GradientDiscretisation, u: usize) -> (f64, f64) {
    let part = &gd.parts()[u];
    let norm = part.diameter
        * part
            .gradient_samples
            .iter()
            .map(cube_norm)
            .fold(0.0, f64::max);
    let maxdist = part
        .dofs
        .iter()
        .map(|&i| {
            part.triangles
                .iter()
                .map(|t| distance_to_triangle(gd.points()[i], t))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    (norm, maxdist / part.diameter)
}

/// The LLE regularity factor of a discretisation.
pub fn lle_regularity(gd: &GradientDiscretisation) -> Result<LleRegularity> {
    if gd.parts().is_empty() {
        return Err(Error::InvalidArgument(
            "discretisation carries no LLE structure".into(),
        ));
    }
    let local_term = (0..gd.parts().len())
        .map(|u| {
            let (n, d) = part_geometry(gd, u);
            n + d
        })
        .fold(0.0, f64::max);
    let mut alpha_term: f64 = 0.0;
    for r in gd.regions() {
        for q in 0..r.n_points() {
            alpha_term = alpha_term.max(r.pi.row(q).iter().map(|a| a.abs()).sum());
        }
    }
    Ok(LleRegularity {
        value: local_term + alpha_term,
        local_term,
        alpha_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    /// Largest ratio of the gradient error to its a priori bound.
    pub max_ratio: f64,
    pub worst_node: usize,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.max_ratio <= 1.0
    }
}

/// Compares `|∇_D I φ - ∇φ|` at every node with
/// `(1 + ½‖𝒢_U‖ (max dist / diam + 1)²) diam(U) M`, where `M` bounds the
/// spectral norm of the Hessian of φ and `I φ` is the point interpolant
/// including boundary dofs.
pub fn lle_gradient_bound_check(
    gd: &GradientDiscretisation,
    phi: impl Fn(Point) -> f64,
    grad_phi: impl Fn(Point) -> Vector2<f64>,
    hessian_bound: f64,
) -> Result<BoundCheck> {
    let field = gd.evaluate_full(&gd.interpolate_full(phi))?;
    let factors: Vec<f64> = (0..gd.parts().len())
        .map(|u| {
            let (n, d) = part_geometry(gd, u);
            (1.0 + 0.5 * n * (d + 1.0).powi(2)) * gd.parts()[u].diameter * hessian_bound
        })
        .collect();
    let mut out = BoundCheck {
        max_ratio: 0.0,
        worst_node: 0,
    };
    let mut node = 0;
    for r in gd.regions() {
        for q in 0..r.n_points() {
            let err = (field.grads[node] - grad_phi(r.points[q])).norm();
            let ratio = if factors[r.part] > 0.0 {
                err / factors[r.part]
            } else if err == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if ratio > out.max_ratio {
                out = BoundCheck {
                    max_ratio: ratio,
                    worst_node: node,
                };
            }
            node += 1;
        }
    }
    Ok(out)
}
