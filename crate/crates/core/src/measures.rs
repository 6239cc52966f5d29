//! Quality measures of a gradient discretisation at p = 2.
//!
//! Extremal quantities are largest eigenvalues of symmetric pencils whose
//! right-hand matrix is the ∇_D Gram matrix K; dual norms are `sqrt(rᵀK⁻¹r)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::Serialize;

use crate::gd::{lle_regularity, GradientDiscretisation};
use crate::linalg::{dot, pencil_max, solve_spd, CsrMatrix, EigenPath, Triplets};
use crate::mesh::{Point, PolytopalMesh};
use crate::toolbox;
use crate::{Error, Result};

/// Per-functional tolerance for the ω^∇ certificate, relative to |K|.
pub const CERTIFICATE_TOL: f64 = 1e-12;

/// A scalar test function with its gradient.
#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub value: fn(Point) -> f64,
    pub gradient: fn(Point) -> Vector2<f64>,
}

/// A vector test field ψ with its divergence and a bound on ‖ψ‖_{W^{1,∞}}.
#[derive(Clone, Copy)]
pub struct TestField {
    pub name: &'static str,
    pub value: fn(Point) -> Vector2<f64>,
    pub divergence: fn(Point) -> f64,
    pub w1inf: f64,
}

/// Functions vanishing on the boundary of the unit square.
pub fn test_functions() -> [TestFunction; 3] {
    [
        TestFunction {
            name: "sin_sin",
            value: |x| (PI * x.x).sin() * (PI * x.y).sin(),
            gradient: |x| {
                Vector2::new(
                    PI * (PI * x.x).cos() * (PI * x.y).sin(),
                    PI * (PI * x.x).sin() * (PI * x.y).cos(),
                )
            },
        },
        TestFunction {
            name: "bubble",
            value: |x| 16.0 * x.x * (1.0 - x.x) * x.y * (1.0 - x.y),
            gradient: |x| {
                Vector2::new(
                    16.0 * (1.0 - 2.0 * x.x) * x.y * (1.0 - x.y),
                    16.0 * x.x * (1.0 - x.x) * (1.0 - 2.0 * x.y),
                )
            },
        },
        TestFunction {
            name: "skew_bubble",
            value: |x| x.x * x.x * (1.0 - x.x) * x.y * (1.0 - x.y) * 20.0,
            gradient: |x| {
                Vector2::new(
                    20.0 * (2.0 * x.x - 3.0 * x.x * x.x) * x.y * (1.0 - x.y),
                    20.0 * x.x * x.x * (1.0 - x.x) * (1.0 - 2.0 * x.y),
                )
            },
        },
    ]
}

/// Polynomial fields of degree at most 3, integrated exactly by the
/// quadrature of every scheme.
pub fn polynomial_fields() -> [TestField; 3] {
    [
        TestField {
            name: "linear",
            value: |x| Vector2::new(1.0 + x.x - 2.0 * x.y, 0.5 * x.x + x.y),
            divergence: |_| 2.0,
            w1inf: 4.0,
        },
        TestField {
            name: "quadratic",
            value: |x| Vector2::new(x.x * x.y, x.x * x.x - x.y * x.y),
            divergence: |x| -x.y,
            w1inf: 5.0,
        },
        TestField {
            name: "cubic",
            value: |x| {
                Vector2::new(
                    x.y * x.y * x.y - x.x * x.x * x.y,
                    x.x * x.x * x.x + x.x * x.y * x.y,
                )
            },
            divergence: |_| 0.0,
            w1inf: 9.0,
        },
    ]
}

/// Smooth trigonometric fields.
pub fn trig_fields() -> [TestField; 3] {
    [
        TestField {
            name: "rotation",
            value: |x| Vector2::new((PI * x.y).sin(), (PI * x.x).sin()),
            divergence: |_| 0.0,
            w1inf: 1.0 + PI,
        },
        TestField {
            name: "gradient",
            value: |x| {
                Vector2::new(
                    PI * (PI * x.x).cos() * (PI * x.y).sin(),
                    PI * (PI * x.x).sin() * (PI * x.y).cos(),
                )
            },
            divergence: |x| -2.0 * PI * PI * (PI * x.x).sin() * (PI * x.y).sin(),
            w1inf: PI * PI * 2.0,
        },
        TestField {
            name: "shear",
            value: |x| Vector2::new((2.0 * x.y).cos() * x.x, (x.x + x.y).sin()),
            divergence: |x| (2.0 * x.y).cos() + (x.x + x.y).cos(),
            w1inf: 4.0,
        },
    ]
}

/// C_D = max ‖Π_D v‖ / ‖∇_D v‖.
pub fn coercivity_constant(gd: &GradientDiscretisation, path: EigenPath) -> Result<f64> {
    Ok(pencil_max(&gd.mass_matrix(), &gd.stiffness_matrix(), path)?
        .max(0.0)
        .sqrt())
}

/// Solves K z = r on the sparse path, or with a dense Cholesky factorisation
/// for [`EigenPath::Dense`].
fn solve_stiffness(k: &CsrMatrix, r: &[f64], path: EigenPath) -> Result<Vec<f64>> {
    if path == EigenPath::Dense {
        let chol = k
            .to_dense()
            .cholesky()
            .ok_or_else(|| Error::NotSpd("∇_D Gram matrix".into()))?;
        Ok(chol
            .solve(&DVector::from_column_slice(r))
            .as_slice()
            .to_vec())
    } else {
        solve_spd(k, r)
    }
}

/// ‖r‖_{K⁻¹} for a functional r on the interior dofs.
pub fn dual_norm(k: &CsrMatrix, r: &[f64], path: EigenPath) -> Result<f64> {
    if r.is_empty() {
        return Ok(0.0);
    }
    let z = solve_stiffness(k, r, path)?;
    Ok(dot(r, &z).max(0.0).sqrt())
}

/// W_D(ψ) = max over v of |∫ ∇_D v · ψ + Π_D v div ψ| / ‖∇_D v‖.
pub fn limit_conformity_defect(
    gd: &GradientDiscretisation,
    field: &TestField,
    path: EigenPath,
) -> Result<f64> {
    let r = gd.linear_form(|x| ((field.divergence)(x), (field.value)(x)));
    dual_norm(&gd.stiffness_matrix(), &r, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConsistencyDefect {
    /// ‖Π_D v − φ‖ + ‖∇_D v − ∇φ‖ at the interpolant v.
    pub interpolant: f64,
    /// Ŝ: least-squares minimum of sqrt(‖Π_D u − φ‖² + ‖∇_D u − ∇φ‖²).
    pub ls: f64,
    /// Ŝ ≤ S_D.
    pub lower: f64,
    /// S_D ≤ min(√2 Ŝ, interpolant bound).
    pub upper: f64,
}

fn distances(gd: &GradientDiscretisation, full: &[f64], phi: &TestFunction) -> Result<(f64, f64)> {
    let f = gd.evaluate_full(full)?;
    let (mut e0, mut e1) = (0.0, 0.0);
    for (((x, w), v), g) in gd.nodes().zip(&f.values).zip(&f.grads) {
        e0 += w * (v - (phi.value)(x)).powi(2);
        e1 += w * (g - (phi.gradient)(x)).norm_squared();
    }
    Ok((e0.sqrt(), e1.sqrt()))
}

/// Bracket of S_D(φ) from the interpolant and from the normal equations
/// (M + K) u = c.
pub fn consistency_defect(
    gd: &GradientDiscretisation,
    phi: &TestFunction,
) -> Result<ConsistencyDefect> {
    let v = gd.interpolate(phi.value);
    let (a, b) = distances(gd, v.values(), phi)?;
    let interpolant = a + b;
    let ls = if gd.n_free() == 0 {
        let (a, b) = distances(gd, &vec![0.0; gd.n_dofs()], phi)?;
        a.hypot(b)
    } else {
        let m = gd
            .mass_matrix()
            .add_scaled(1.0, &gd.stiffness_matrix(), 1.0);
        let c = gd.linear_form(|x| ((phi.value)(x), (phi.gradient)(x)));
        let u = solve_spd(&m, &c)?;
        let (a, b) = distances(gd, &gd.expand(&u), phi)?;
        a.hypot(b)
    };
    Ok(ConsistencyDefect {
        interpolant,
        ls,
        lower: ls,
        upper: (std::f64::consts::SQRT_2 * ls).min(interpolant),
    })
}

/// Discrete Poincaré constant max ‖Π_T v‖ / ‖v‖_{T,0,2} over X_{T,0}.
pub fn poincare_constant(mesh: &PolytopalMesh, path: EigenPath) -> Result<f64> {
    let nc = mesh.n_cells();
    let free: Vec<usize> = (0..nc)
        .chain(
            mesh.faces()
                .iter()
                .enumerate()
                .filter(|(_, f)| !f.is_boundary())
                .map(|(s, _)| nc + s),
        )
        .collect();
    let norm = restrict_square(&toolbox::norm_matrix(mesh), &free);
    let mut t = Triplets::new(free.len(), free.len());
    for (k, c) in mesh.cells().iter().enumerate() {
        t.push(k, k, c.measure);
    }
    Ok(pencil_max(&t.to_csr(), &norm, path)?.max(0.0).sqrt())
}

fn restrict_square(a: &CsrMatrix, keep: &[usize]) -> CsrMatrix {
    let mut new = vec![usize::MAX; a.n_rows()];
    for (i, &k) in keep.iter().enumerate() {
        new[k] = i;
    }
    let mut t = Triplets::new(keep.len(), keep.len());
    for (i, &k) in keep.iter().enumerate() {
        let (cols, vals) = a.row(k);
        for (&j, &v) in cols.iter().zip(vals) {
            if new[j] != usize::MAX {
                t.push(i, new[j], v);
            }
        }
    }
    t.to_csr()
}

/// Columns of `a` at the interior dofs of `gd`.
fn free_columns(gd: &GradientDiscretisation, a: &CsrMatrix) -> CsrMatrix {
    let mut t = Triplets::new(a.n_rows(), gd.n_free());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if let Some(k) = gd.free_index(j) {
                t.push(i, k, v);
            }
        }
    }
    t.to_csr()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum GradientDefect {
    /// ∫_K (∇_D e_j − ∇_T Φ e_j) = 0 for every cell and dof; the value is the
    /// largest per-functional residual divided by |K|.
    ExactlyZero(f64),
    /// Upper bound of max over v of Σ_K |∫_K (∇_D v − ∇_T Φ v)| / ‖∇_D v‖.
    BoundedBy(f64),
}

impl GradientDefect {
    pub fn is_exactly_zero(&self) -> bool {
        matches!(self, GradientDefect::ExactlyZero(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlReport {
    pub phi_norm: f64,
    pub omega_pi: f64,
    pub omega_grad: GradientDefect,
}

/// ‖Φ‖_{D,T}, ω^Π and ω^∇ for the control attached to `gd`.
pub fn control_report(gd: &GradientDiscretisation, path: EigenPath) -> Result<ControlReport> {
    let ctrl = gd
        .control()
        .ok_or_else(|| Error::InvalidArgument(format!("{} carries no control", gd.kind)))?;
    let t = &ctrl.toolbox;
    let nc = t.n_cells();
    if ctrl.map.n_rows() != nc + t.n_faces() || ctrl.map.n_cols() != gd.n_dofs() {
        return Err(Error::DofMismatch(format!(
            "control map is {}x{}, expected {}x{}",
            ctrl.map.n_rows(),
            ctrl.map.n_cols(),
            nc + t.n_faces(),
            gd.n_dofs()
        )));
    }
    let k = gd.stiffness_matrix();
    let phi = free_columns(gd, &ctrl.map);
    let phi_t = phi.transpose();

    let norm = phi_t.mul(&toolbox::norm_matrix(t)).mul(&phi);
    let phi_norm = pencil_max(&norm, &k, path)?.max(0.0).sqrt();

    // Gram matrix of Π_D − Π_T Φ, region by region.
    let mut gram = Triplets::new(gd.n_free(), gd.n_free());
    for r in gd.regions() {
        let (cols, vals) = phi.row(r.cell);
        let mut idx: Vec<usize> = r.dofs.iter().filter_map(|&d| gd.free_index(d)).collect();
        idx.extend_from_slice(cols);
        idx.sort_unstable();
        idx.dedup();
        let mut diff = DMatrix::<f64>::zeros(r.n_points(), idx.len());
        for (j, &d) in r.dofs.iter().enumerate() {
            if let Some(f) = gd.free_index(d) {
                let c = idx.binary_search(&f).unwrap();
                for q in 0..r.n_points() {
                    diff[(q, c)] += r.pi[(q, j)];
                }
            }
        }
        for (&f, &v) in cols.iter().zip(vals) {
            let c = idx.binary_search(&f).unwrap();
            for q in 0..r.n_points() {
                diff[(q, c)] -= v;
            }
        }
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&r.weights));
        let rows: Vec<Option<usize>> = idx.iter().map(|&i| Some(i)).collect();
        gram.push_block(&rows, &rows, &(diff.transpose() * w * diff));
    }
    let omega_pi = pencil_max(&gram.to_csr(), &k, path)?.max(0.0).sqrt();

    // Per-cell functionals ∫_K ∇_D e_j − |K| ∇_T Φ e_j.
    let defect = free_columns(gd, &gd.cell_gradient_integrals(nc)).add_scaled(
        1.0,
        &toolbox::gradient_integral_matrix(t).mul(&phi),
        -1.0,
    );
    let mut worst: f64 = 0.0;
    for row in 0..defect.n_rows() {
        let m = t.cells()[row / 2].measure;
        let (_, vals) = defect.row(row);
        worst = vals.iter().fold(worst, |w, v| w.max(v.abs() / m));
    }
    let omega_grad = if worst <= CERTIFICATE_TOL {
        GradientDefect::ExactlyZero(worst)
    } else {
        // Σ_K |R_K v| ≤ sqrt(2 n_cells) ‖R v‖₂ ≤ sqrt(2 n_cells λ_max(RᵀR, K)) ‖∇_D v‖.
        let rtr = defect.transpose().mul(&defect);
        let lambda = pencil_max(&rtr, &k, path)?.max(0.0);
        GradientDefect::BoundedBy((2.0 * nc as f64 * lambda).sqrt())
    };
    Ok(ControlReport {
        phi_norm,
        omega_pi,
        omega_grad,
    })
}

/// Everything measured on one discretisation.
#[derive(Debug, Clone, Serialize)]
pub struct GdMetrics {
    pub scheme: String,
    pub h: f64,
    pub dofs: usize,
    pub c_d: f64,
    pub s_d: Vec<(String, ConsistencyDefect)>,
    pub w_d: Vec<(String, f64)>,
    pub reg_lle: f64,
    pub zeta: Option<f64>,
    pub omega_companion: Option<f64>,
    pub control: Option<ControlReport>,
}

/// Computes [`GdMetrics`]; `companion` is the unlumped discretisation for
/// lumped schemes.
pub fn gd_metrics(
    gd: &GradientDiscretisation,
    companion: Option<&GradientDiscretisation>,
    path: EigenPath,
) -> Result<GdMetrics> {
    let s_d = test_functions()
        .iter()
        .map(|f| Ok((f.name.to_string(), consistency_defect(gd, f)?)))
        .collect::<Result<_>>()?;
    let w_d = trig_fields()
        .iter()
        .map(|f| Ok((f.name.to_string(), limit_conformity_defect(gd, f, path)?)))
        .collect::<Result<_>>()?;
    Ok(GdMetrics {
        scheme: gd.kind.to_string(),
        h: gd.h,
        dofs: gd.n_free(),
        c_d: coercivity_constant(gd, path)?,
        s_d,
        w_d,
        reg_lle: lle_regularity(gd)?.value,
        zeta: gd.zeta(),
        omega_companion: companion
            .map(|c| crate::transforms::reconstruction_distance(gd, c, path))
            .transpose()?,
        control: gd.control().map(|_| control_report(gd, path)).transpose()?,
    })
}
