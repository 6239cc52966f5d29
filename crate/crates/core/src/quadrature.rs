//! Triangle quadrature and the sub-triangle layouts shared by the schemes.

use crate::mesh::{Point, PolytopalMesh};

/// Barycentric points and weights (summing to 1) of the 6-point rule, exact
/// for polynomials of degree 4.
const RULE: [([f64; 3], f64); 6] = {
    const A1: f64 = 0.445_948_490_915_964_886_32;
    const B1: f64 = 0.108_103_018_168_070_227_36;
    const W1: f64 = 0.223_381_589_678_011_465_7;
    const A2: f64 = 0.091_576_213_509_770_743_46;
    const B2: f64 = 0.816_847_572_980_458_513_08;
    const W2: f64 = 0.109_951_743_655_321_867_64;
    [
        ([A1, A1, B1], W1),
        ([A1, B1, A1], W1),
        ([B1, A1, A1], W1),
        ([A2, A2, B2], W2),
        ([A2, B2, A2], W2),
        ([B2, A2, A2], W2),
    ]
};

pub const DEGREE: usize = 4;

pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x).abs()
}

/// Quadrature nodes and weights on the triangle `(a, b, c)`.
pub fn triangle_rule(t: [Point; 3]) -> Vec<(Point, f64)> {
    let area = triangle_area(t[0], t[1], t[2]);
    RULE.iter()
        .map(|(l, w)| (t[0] * l[0] + t[1] * l[1] + t[2] * l[2], w * area))
        .collect()
}

/// A quarter of the half-diamond over face σ of cell K: the triangle
/// `(x_K, v, x̄_σ)` with v one of the two vertices of σ.
#[derive(Debug, Clone, Copy)]
pub struct QuarterDiamond {
    pub cell: usize,
    /// Local index of the face in the cell.
    pub local_face: usize,
    pub face: usize,
    pub vertex: usize,
    pub triangle: [Point; 3],
}

/// All quarter-diamonds of the mesh, using `centers` as the points x_K.
///
/// These triangles refine every partition used by the schemes: cells,
/// half-diamonds, MPFA and nodal subcells and barycentric dual regions.
pub fn quarter_diamonds(mesh: &PolytopalMesh, centers: &[Point]) -> Vec<QuarterDiamond> {
    (0..mesh.n_cells())
        .flat_map(|k| cell_quarter_diamonds(mesh, k, centers[k]))
        .collect()
}

/// Quarter-diamonds of one cell, two per local face in face order.
pub fn cell_quarter_diamonds(mesh: &PolytopalMesh, k: usize, center: Point) -> Vec<QuarterDiamond> {
    let c = &mesh.cells()[k];
    let mut out = Vec::with_capacity(2 * c.faces.len());
    for (i, &f) in c.faces.iter().enumerate() {
        let face = &mesh.faces()[f];
        for &v in &face.vertices {
            out.push(QuarterDiamond {
                cell: k,
                local_face: i,
                face: f,
                vertex: v,
                triangle: [center, mesh.vertices()[v], face.center],
            });
        }
    }
    out
}

/// Distance from `x` to the closed triangle `t`.
pub fn distance_to_triangle(x: Point, t: &[Point; 3]) -> f64 {
    let inside = {
        let s = |a: Point, b: Point| (b - a).x * (x - a).y - (b - a).y * (x - a).x;
        let d = [s(t[0], t[1]), s(t[1], t[2]), s(t[2], t[0])];
        d.iter().all(|&v| v >= 0.0) || d.iter().all(|&v| v <= 0.0)
    };
    if inside {
        return 0.0;
    }
    (0..3)
        .map(|i| distance_to_segment(x, t[i], t[(i + 1) % 3]))
        .fold(f64::INFINITY, f64::min)
}

pub fn distance_to_segment(x: Point, a: Point, b: Point) -> f64 {
    let e = b - a;
    let s = ((x - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
    (x - (a + e * s)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cartesian, simplicial};

    fn monomial_integral(i: i32, j: i32) -> f64 {
        // ∫ x^i y^j over the reference triangle (0,0),(1,0),(0,1).
        let f = |n: i32| (1..=n).map(|k| k as f64).product::<f64>();
        f(i) * f(j) / f(i + j + 2)
    }

    #[test]
    fn exact_to_degree_four() {
        let t = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        let rule = triangle_rule(t);
        for i in 0..=4 {
            for j in 0..=(4 - i) {
                let q: f64 = rule
                    .iter()
                    .map(|(p, w)| w * p.x.powi(i) * p.y.powi(j))
                    .sum();
                assert!((q - monomial_integral(i, j)).abs() < 1e-15, "x^{i} y^{j}");
            }
        }
        let q: f64 = rule.iter().map(|(p, w)| w * p.x.powi(5)).sum();
        assert!((q - monomial_integral(5, 0)).abs() > 1e-6);
    }

    #[test]
    fn quarter_diamonds_tile_the_domain() {
        for mesh in [
            cartesian(3, 2, [0.0, 1.0, 0.0, 1.0]).unwrap(),
            simplicial(2, 3, [0.0, 1.0, 0.0, 1.0]).unwrap(),
        ] {
            let q = quarter_diamonds(&mesh, &mesh.centers());
            let total: f64 = q
                .iter()
                .flat_map(|d| triangle_rule(d.triangle))
                .map(|(_, w)| w)
                .sum();
            assert!((total - 1.0).abs() < 1e-13);
            for (k, c) in mesh.cells().iter().enumerate() {
                let s: f64 = q
                    .iter()
                    .filter(|d| d.cell == k)
                    .map(|d| triangle_area(d.triangle[0], d.triangle[1], d.triangle[2]))
                    .sum();
                assert!((s - c.measure).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn distances() {
        let t = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert_eq!(distance_to_triangle(Point::new(0.2, 0.2), &t), 0.0);
        assert!((distance_to_triangle(Point::new(2.0, 0.0), &t) - 1.0).abs() < 1e-15);
        assert!((distance_to_triangle(Point::new(1.0, 1.0), &t) - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
