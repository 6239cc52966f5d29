//! The polytopal toolbox: cell and face unknowns with a piecewise-constant
//! reconstruction, a Stokes-consistent gradient and a discrete W^{1,p}_0 norm.
//!
//! Toolbox vectors use the layout cells first, then faces: index K for
//! v_K and `n_cells + σ` for v_σ.

use nalgebra::Vector2;

use crate::linalg::{CsrMatrix, Triplets};
use crate::mesh::{Point, PolytopalMesh};
use crate::quadrature::{cell_quarter_diamonds, triangle_rule};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ToolboxVector {
    pub cells: Vec<f64>,
    pub faces: Vec<f64>,
}

impl ToolboxVector {
    pub fn zeros(mesh: &PolytopalMesh) -> Self {
        ToolboxVector {
            cells: vec![0.0; mesh.n_cells()],
            faces: vec![0.0; mesh.n_faces()],
        }
    }

    /// Checks sizes and that boundary faces carry zero.
    pub fn new(mesh: &PolytopalMesh, cells: Vec<f64>, faces: Vec<f64>) -> Result<Self> {
        if cells.len() != mesh.n_cells() || faces.len() != mesh.n_faces() {
            return Err(Error::DofMismatch(format!(
                "toolbox vector has {} cell and {} face values, mesh has {} and {}",
                cells.len(),
                faces.len(),
                mesh.n_cells(),
                mesh.n_faces()
            )));
        }
        if let Some(f) = mesh
            .faces()
            .iter()
            .zip(&faces)
            .position(|(f, &v)| f.is_boundary() && v != 0.0)
        {
            return Err(Error::DofMismatch(format!(
                "boundary face {f} has a nonzero value"
            )));
        }
        Ok(ToolboxVector { cells, faces })
    }

    /// Splits a vector in the cells-then-faces layout.
    pub fn from_flat(mesh: &PolytopalMesh, flat: &[f64]) -> Result<Self> {
        if flat.len() != mesh.n_cells() + mesh.n_faces() {
            return Err(Error::DofMismatch(format!(
                "toolbox vector of length {}",
                flat.len()
            )));
        }
        let (c, f) = flat.split_at(mesh.n_cells());
        ToolboxVector::new(mesh, c.to_vec(), f.to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.cells.clone();
        v.extend_from_slice(&self.faces);
        v
    }

    /// Face interpolant v_K = φ(x_K), v_σ = φ(x̄_σ), boundary faces zeroed.
    pub fn interpolate(mesh: &PolytopalMesh, phi: impl Fn(Point) -> f64) -> Self {
        ToolboxVector {
            cells: mesh.cells().iter().map(|c| phi(c.center)).collect(),
            faces: mesh
                .faces()
                .iter()
                .map(|f| if f.is_boundary() { 0.0 } else { phi(f.center) })
                .collect(),
        }
    }
}

/// Π_T v: the value v_K on each cell.
pub fn reconstruction(v: &ToolboxVector) -> Vec<f64> {
    v.cells.clone()
}

/// ∇_T v|_K = (1/|K|) Σ_σ |σ| (v_σ − v_K) n_{K,σ}.
pub fn gradient(mesh: &PolytopalMesh, v: &ToolboxVector) -> Vec<Vector2<f64>> {
    mesh.cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.faces
                .iter()
                .zip(&c.normals)
                .map(|(&f, n)| n * (mesh.faces()[f].measure * (v.faces[f] - v.cells[k])))
                .sum::<Vector2<f64>>()
                / c.measure
        })
        .collect()
}

/// ∇_T v without the v_K term, which cancels because Σ_σ |σ| n_{K,σ} = 0.
pub fn gradient_faces_only(mesh: &PolytopalMesh, v: &ToolboxVector) -> Vec<Vector2<f64>> {
    mesh.cells()
        .iter()
        .map(|c| {
            c.faces
                .iter()
                .zip(&c.normals)
                .map(|(&f, n)| n * (mesh.faces()[f].measure * v.faces[f]))
                .sum::<Vector2<f64>>()
                / c.measure
        })
        .collect()
}

/// Matrix of v ↦ |K| ∇_T v|_K, rows 2K and 2K + 1, columns in the flat layout.
pub fn gradient_integral_matrix(mesh: &PolytopalMesh) -> CsrMatrix {
    let nc = mesh.n_cells();
    let mut t = Triplets::new(2 * nc, nc + mesh.n_faces());
    for (k, c) in mesh.cells().iter().enumerate() {
        for (&f, n) in c.faces.iter().zip(&c.normals) {
            let s = mesh.faces()[f].measure;
            for (r, nr) in [n.x, n.y].into_iter().enumerate() {
                t.push(2 * k + r, nc + f, s * nr);
                t.push(2 * k + r, k, -s * nr);
            }
        }
    }
    t.to_csr()
}

/// ‖v‖_{T,0,p} = (Σ_K Σ_σ |σ| d_{K,σ} |(v_σ − v_K)/d_{K,σ}|^p)^{1/p}.
pub fn norm(mesh: &PolytopalMesh, v: &ToolboxVector, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let mut s = 0.0;
    for (k, c) in mesh.cells().iter().enumerate() {
        for (&f, &d) in c.faces.iter().zip(&c.distances) {
            s += mesh.faces()[f].measure * d * ((v.faces[f] - v.cells[k]) / d).abs().powf(p);
        }
    }
    Ok(s.powf(1.0 / p))
}

/// Matrix of the quadratic form ‖v‖²_{T,0,2} = Σ |σ|/d_{K,σ} (v_σ − v_K)²
/// in the flat layout, boundary faces included.
pub fn norm_matrix(mesh: &PolytopalMesh) -> CsrMatrix {
    let nc = mesh.n_cells();
    let mut t = Triplets::new(nc + mesh.n_faces(), nc + mesh.n_faces());
    for (k, c) in mesh.cells().iter().enumerate() {
        for (&f, &d) in c.faces.iter().zip(&c.distances) {
            let w = mesh.faces()[f].measure / d;
            t.push(k, k, w);
            t.push(nc + f, nc + f, w);
            t.push(k, nc + f, -w);
            t.push(nc + f, k, -w);
        }
    }
    t.to_csr()
}

/// ‖∇_T v‖_{L^p}.
pub fn gradient_lp_norm(mesh: &PolytopalMesh, v: &ToolboxVector, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let s: f64 = gradient(mesh, v)
        .iter()
        .zip(mesh.cells())
        .map(|(g, c)| c.measure * g.norm().powf(p))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// |∫_Ω ∇_T v · ψ + Π_T v div ψ|.
pub fn stokes_defect(
    mesh: &PolytopalMesh,
    v: &ToolboxVector,
    psi: impl Fn(Point) -> Vector2<f64>,
    div_psi: impl Fn(Point) -> f64,
) -> Result<f64> {
    let grads = gradient(mesh, v);
    let mut total = 0.0;
    for (k, c) in mesh.cells().iter().enumerate() {
        for qd in cell_quarter_diamonds(mesh, k, c.center) {
            for (x, w) in triangle_rule(qd.triangle) {
                let (p, d) = (psi(x), div_psi(x));
                if !(p.x.is_finite() && p.y.is_finite() && d.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "test field is not finite at ({}, {})",
                        x.x, x.y
                    )));
                }
                total += w * (grads[k].dot(&p) + v.cells[k] * d);
            }
        }
    }
    Ok(total.abs())
}

/// Upper bound (d |Ω|)^{(p−1)/p} ‖ψ‖_{W^{1,∞}} ‖v‖_{T,0,p} h_M for the Stokes defect.
pub fn stokes_bound(
    mesh: &PolytopalMesh,
    v: &ToolboxVector,
    psi_w1inf: f64,
    p: f64,
) -> Result<f64> {
    let d = 2.0;
    Ok((d * mesh.domain_measure()).powf((p - 1.0) / p)
        * psi_w1inf
        * norm(mesh, v, p)?
        * mesh.stats().h)
}

fn check_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "exponent p = {p} must lie in (1, ∞)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cartesian, perturb};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const UNIT: [f64; 4] = [0.0, 1.0, 0.0, 1.0];

    fn random_vector(mesh: &PolytopalMesh, rng: &mut ChaCha8Rng) -> ToolboxVector {
        ToolboxVector {
            cells: (0..mesh.n_cells())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            faces: mesh
                .faces()
                .iter()
                .map(|f| {
                    if f.is_boundary() {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn unit_cell_by_hand() {
        let mesh = cartesian(1, 1, UNIT).unwrap();
        // Face on x = 1. A single-cell mesh has only boundary faces, so the
        // vector is built directly.
        let right = mesh
            .faces()
            .iter()
            .position(|f| (f.center - Point::new(1.0, 0.5)).norm() < 1e-14)
            .unwrap();
        let mut v = ToolboxVector::zeros(&mesh);
        v.faces[right] = 1.0;
        let g = gradient(&mesh, &v);
        assert!((g[0] - Vector2::new(1.0, 0.0)).norm() < 1e-14);
        assert!((norm(&mesh, &v, 2.0).unwrap().powi(2) - 2.0).abs() < 1e-14);
        assert!(ToolboxVector::new(&mesh, v.cells.clone(), v.faces.clone()).is_err());
    }

    #[test]
    fn step_reconstruction() {
        let mesh = cartesian(2, 2, UNIT).unwrap();
        let v =
            ToolboxVector::new(&mesh, vec![0.0, 1.0, 2.0, 3.0], vec![0.0; mesh.n_faces()]).unwrap();
        assert_eq!(reconstruction(&v), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn affine_exactness_and_both_forms() {
        let mesh = perturb(&cartesian(4, 4, UNIT).unwrap(), 0.25, 3).unwrap();
        let l = |x: Point| 0.5 + 2.0 * x.x - 1.5 * x.y;
        let v = ToolboxVector {
            cells: mesh.cells().iter().map(|c| l(c.center)).collect(),
            faces: mesh.faces().iter().map(|f| l(f.center)).collect(),
        };
        for (a, b) in gradient(&mesh, &v)
            .iter()
            .zip(gradient_faces_only(&mesh, &v))
        {
            assert!((a - Vector2::new(2.0, -1.5)).norm() < 1e-12);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn norm_matrix_matches_norm() {
        let mesh = perturb(&cartesian(3, 3, UNIT).unwrap(), 0.2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_vector(&mesh, &mut rng);
        let q = norm_matrix(&mesh).quad_form(&v.to_flat());
        assert!((q - norm(&mesh, &v, 2.0).unwrap().powi(2)).abs() < 1e-12 * q.max(1.0));
        // Cell-only vectors have a positive norm.
        let mut c = ToolboxVector::zeros(&mesh);
        c.cells[4] = 1.0;
        assert!(norm(&mesh, &c, 2.0).unwrap() > 0.0);
        assert!(norm(&mesh, &c, 1.0).is_err());
    }

    #[test]
    fn gradient_integral_matrix_matches_gradient() {
        let mesh = perturb(&cartesian(3, 3, UNIT).unwrap(), 0.2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_vector(&mesh, &mut rng);
        let m = gradient_integral_matrix(&mesh).mul_vec(&v.to_flat());
        for (k, g) in gradient(&mesh, &v).iter().enumerate() {
            let a = mesh.cells()[k].measure;
            assert!((m[2 * k] - a * g.x).abs() < 1e-13);
            assert!((m[2 * k + 1] - a * g.y).abs() < 1e-13);
        }
    }

    #[test]
    fn stokes_defect_of_affine_interpolant() {
        let psi = |x: Point| Vector2::new((std::f64::consts::PI * x.y).sin(), x.x * x.x);
        let div = |_: Point| 0.0;
        for n in [4, 8, 16] {
            let mesh = cartesian(n, n, UNIT).unwrap();
            let v = ToolboxVector::interpolate(&mesh, |x| x.x + 2.0 * x.y);
            let defect = stokes_defect(&mesh, &v, psi, div).unwrap();
            let bound = stokes_bound(&mesh, &v, std::f64::consts::PI + 2.0, 2.0).unwrap();
            assert!(defect <= bound, "n = {n}: {defect} > {bound}");
        }
        let mesh = cartesian(2, 2, UNIT).unwrap();
        assert_eq!(
            stokes_defect(&mesh, &ToolboxVector::zeros(&mesh), psi, div).unwrap(),
            0.0
        );
    }

    proptest! {
        #[test]
        fn gradient_bounded_by_norm(seed in 0u64..1000, p in prop::sample::select(vec![1.5, 2.0, 3.0])) {
            let mesh = perturb(&cartesian(3, 3, UNIT).unwrap(), 0.25, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_vector(&mesh, &mut rng);
            let lhs = gradient_lp_norm(&mesh, &v, p).unwrap();
            let rhs = 2f64.powf((p - 1.0) / p) * norm(&mesh, &v, p).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn gradient_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let mesh = perturb(&cartesian(3, 3, UNIT).unwrap(), 0.2, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let v = random_vector(&mesh, &mut rng);
            let w = random_vector(&mesh, &mut rng);
            let combo = ToolboxVector {
                cells: v.cells.iter().zip(&w.cells).map(|(x, y)| a * x + b * y).collect(),
                faces: v.faces.iter().zip(&w.faces).map(|(x, y)| a * x + b * y).collect(),
            };
            let (gv, gw, gc) = (gradient(&mesh, &v), gradient(&mesh, &w), gradient(&mesh, &combo));
            for k in 0..mesh.n_cells() {
                prop_assert!((gc[k] - (gv[k] * a + gw[k] * b)).norm() < 1e-12);
            }
        }
    }
}
