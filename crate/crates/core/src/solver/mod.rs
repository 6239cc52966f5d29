//! Gradient schemes for linear and semilinear diffusion, error reports and
//! convergence studies.

mod problem;
mod study;

pub use problem::{DiffusionProblem, Nonlinearity, ProblemId, CUBE};
pub use study::{
    convergence_study, convergence_study_parallel, fit_error_constant, observed_orders, per_level,
    to_csv, MeshFamily, StudyFailure, StudyOptions, StudyRow, CSV_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::gd::{DofVector, GradientDiscretisation};
use crate::linalg::{norm, solve_general, solve_spd, CsrMatrix, EigenPath, SOLVE_CONTRACT};
use crate::measures::{consistency_defect, dual_norm, TestFunction};
use crate::{Error, Result};

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Smallest line-search step, 2⁻²⁰.
pub const LINE_SEARCH_FLOOR: f64 = 1.0 / 1048576.0;

/// Matrix and right-hand side over the interior dofs.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// A_{ij} = ∫ A ∇_D e_j · ∇_D e_i, b_i = ∫ f Π_D e_i.
pub fn assemble_linear(
    gd: &GradientDiscretisation,
    problem: &DiffusionProblem,
) -> Result<SparseSystem> {
    problem.check_tensor(gd.nodes().map(|(x, _)| x))?;
    let matrix = gd.weighted_stiffness(problem.tensor);
    let rhs = gd.linear_form(|x| ((problem.source)(x), nalgebra::Vector2::zeros()));
    Ok(SparseSystem { matrix, rhs })
}

/// Solves an assembled SPD system and checks the residual contract.
pub fn solve_system(gd: &GradientDiscretisation, system: &SparseSystem) -> Result<DofVector> {
    if system.rhs.is_empty() {
        return Ok(DofVector::zeros(gd));
    }
    let u = solve_spd(&system.matrix, &system.rhs)?;
    let res = relative_residual(&system.matrix, &u, &system.rhs);
    if res > SOLVE_CONTRACT {
        return Err(Error::NoConvergence {
            method: "linear solve",
            iterations: 1,
            residual: res,
        });
    }
    Ok(DofVector::from_free(gd, &u))
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r: Vec<f64> = a.mul_vec(x).iter().zip(b).map(|(u, v)| u - v).collect();
    let bn = norm(b);
    if bn == 0.0 {
        norm(&r)
    } else {
        norm(&r) / bn
    }
}

/// Solves the linear gradient scheme; β is ignored.
pub fn solve_linear(gd: &GradientDiscretisation, problem: &DiffusionProblem) -> Result<DofVector> {
    solve_system(gd, &assemble_linear(gd, problem)?)
}

/// Where the nonlinearity is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SemilinearForm {
    /// ∫ β(Π_D u) Π_D v.
    A,
    /// ∫ Π_D β(u) Π_D v with β(u)_i = β(u_i).
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Residual and Jacobian of the semilinear scheme at the interior vector `u`.
fn semilinear_parts(
    gd: &GradientDiscretisation,
    k: &CsrMatrix,
    mass: &CsrMatrix,
    rhs: &[f64],
    beta: &Nonlinearity,
    form: SemilinearForm,
    u: &[f64],
    with_jacobian: bool,
) -> (Vec<f64>, Option<CsrMatrix>) {
    let mut r = k.mul_vec(u);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri -= bi;
    }
    match form {
        SemilinearForm::B => {
            let bu: Vec<f64> = u.iter().map(|&s| (beta.value)(s)).collect();
            for (ri, m) in r.iter_mut().zip(mass.mul_vec(&bu)) {
                *ri += m;
            }
            let jac = with_jacobian.then(|| {
                let d: Vec<f64> = u.iter().map(|&s| (beta.derivative)(s)).collect();
                let mut t = crate::linalg::Triplets::new(u.len(), u.len());
                for i in 0..mass.n_rows() {
                    let (cols, vals) = mass.row(i);
                    for (&j, &v) in cols.iter().zip(vals) {
                        t.push(i, j, v * d[j]);
                    }
                }
                k.add_scaled(1.0, &t.to_csr(), 1.0)
            });
            (r, jac)
        }
        SemilinearForm::A => {
            let full = gd.expand(u);
            let n = u.len();
            let mut t = crate::linalg::Triplets::new(n, n);
            for reg in gd.regions() {
                let local: Vec<f64> = reg.dofs.iter().map(|&d| full[d]).collect();
                let idx: Vec<Option<usize>> = reg.dofs.iter().map(|&d| gd.free_index(d)).collect();
                let mut block = nalgebra::DMatrix::<f64>::zeros(reg.dofs.len(), reg.dofs.len());
                for q in 0..reg.n_points() {
                    let s = reg.value_at(q, &local);
                    let w = reg.weights[q];
                    let (b, db) = ((beta.value)(s), (beta.derivative)(s));
                    for (i, ii) in idx.iter().enumerate() {
                        let Some(ii) = ii else { continue };
                        r[*ii] += w * b * reg.pi[(q, i)];
                        if with_jacobian {
                            for j in 0..reg.dofs.len() {
                                block[(i, j)] += w * db * reg.pi[(q, i)] * reg.pi[(q, j)];
                            }
                        }
                    }
                }
                if with_jacobian {
                    t.push_block(&idx, &idx, &block);
                }
            }
            let jac = with_jacobian.then(|| k.add_scaled(1.0, &t.to_csr(), 1.0));
            (r, jac)
        }
    }
}

/// Newton's method with residual-norm halving line search for the
/// semilinear gradient scheme in the given form.
pub fn solve_semilinear(
    gd: &GradientDiscretisation,
    problem: &DiffusionProblem,
    form: SemilinearForm,
) -> Result<(DofVector, NewtonInfo)> {
    let Some(beta) = problem.beta else {
        let u = solve_linear(gd, problem)?;
        return Ok((
            u,
            NewtonInfo {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    };
    let system = assemble_linear(gd, problem)?;
    let (k, rhs) = (system.matrix, system.rhs);
    let mass = gd.mass_matrix();
    let scale = norm(&rhs).max(f64::MIN_POSITIVE);
    let mut u = vec![0.0; gd.n_free()];
    let (mut r, _) = semilinear_parts(gd, &k, &mass, &rhs, &beta, form, &u, false);
    let mut rn = norm(&r);
    for it in 0..NEWTON_MAX_ITER {
        if rn <= NEWTON_TOL * scale {
            return Ok((
                DofVector::from_free(gd, &u),
                NewtonInfo {
                    iterations: it,
                    relative_residual: rn / scale,
                },
            ));
        }
        let (_, jac) = semilinear_parts(gd, &k, &mass, &rhs, &beta, form, &u, true);
        let jac = jac.expect("jacobian requested");
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let symmetric =
            jac.asymmetry() <= 1e-14 * jac.diagonal().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let delta = if symmetric {
            solve_spd(&jac, &neg)?
        } else {
            solve_general(&jac, &neg)?
        };
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let (tr, _) = semilinear_parts(gd, &k, &mass, &rhs, &beta, form, &trial, false);
            let tn = norm(&tr);
            if tn < rn || tn <= NEWTON_TOL * scale {
                u = trial;
                r = tr;
                rn = tn;
                break;
            }
            step *= 0.5;
            if step < LINE_SEARCH_FLOOR {
                return Err(Error::NoConvergence {
                    method: "Newton line search",
                    iterations: it + 1,
                    residual: rn / scale,
                });
            }
        }
    }
    if rn <= NEWTON_TOL * scale {
        return Ok((
            DofVector::from_free(gd, &u),
            NewtonInfo {
                iterations: NEWTON_MAX_ITER,
                relative_residual: rn / scale,
            },
        ));
    }
    Err(Error::NoConvergence {
        method: "Newton",
        iterations: NEWTON_MAX_ITER,
        residual: rn / scale,
    })
}

/// Solves the scheme for `problem`: linear if β is absent, form A otherwise.
pub fn solve(gd: &GradientDiscretisation, problem: &DiffusionProblem) -> Result<DofVector> {
    match problem.beta {
        None => solve_linear(gd, problem),
        Some(_) => Ok(solve_semilinear(gd, problem, SemilinearForm::A)?.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    /// ‖Π_D u − ū‖_{L²}.
    pub err_l2: f64,
    /// ‖∇_D u − ∇ū‖_{L²}.
    pub err_h1: f64,
    /// W_D(A∇ū).
    pub w_d: f64,
    /// ‖Π_D v − ū‖ + ‖∇_D v − ∇ū‖ at the interpolant v of ū.
    pub s_d_interpolant: f64,
    /// Least-squares bracket of S_D(ū).
    pub s_d_lo: f64,
    pub s_d_hi: f64,
}

impl ErrorReport {
    pub fn lhs(&self) -> f64 {
        self.err_l2 + self.err_h1
    }

    /// W_D(A∇ū) + S_D(ū), with S_D bounded by the interpolant.
    pub fn rhs(&self) -> f64 {
        self.w_d + self.s_d_interpolant
    }
}

/// Errors of `u` against the manufactured solution and the quantities
/// bounding them.
pub fn error_report(
    gd: &GradientDiscretisation,
    u: &DofVector,
    problem: &DiffusionProblem,
    path: EigenPath,
) -> Result<ErrorReport> {
    let (Some(exact), Some(grad)) = (problem.exact, problem.exact_gradient) else {
        return Err(Error::InvalidArgument(format!(
            "problem {} has no manufactured solution",
            problem.id
        )));
    };
    let f = gd.evaluate(u)?;
    let (mut e0, mut e1) = (0.0, 0.0);
    for (((x, w), v), g) in gd.nodes().zip(&f.values).zip(&f.grads) {
        e0 += w * (v - exact(x)).powi(2);
        e1 += w * (g - grad(x)).norm_squared();
    }
    // ψ = A∇ū has div ψ = β(ū) − f.
    let r = gd.linear_form(|x| {
        let beta = problem.beta.map_or(0.0, |b| (b.value)(exact(x)));
        (beta - (problem.source)(x), (problem.tensor)(x) * grad(x))
    });
    let w_d = dual_norm(&gd.stiffness_matrix(), &r, path)?;
    let s = consistency_defect(
        gd,
        &TestFunction {
            name: problem.id.name(),
            value: exact,
            gradient: grad,
        },
    )?;
    Ok(ErrorReport {
        err_l2: e0.sqrt(),
        err_h1: e1.sqrt(),
        w_d,
        s_d_interpolant: s.interpolant,
        s_d_lo: s.lower,
        s_d_hi: s.upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{cartesian, simplicial};
    use crate::schemes::{build, build_p1, SchemeKind};

    const UNIT: [f64; 4] = [0.0, 1.0, 0.0, 1.0];

    #[test]
    fn zero_source_gives_zero() {
        let gd = build_p1(&simplicial(4, 4, UNIT).unwrap(), 1, false).unwrap();
        let mut p = ProblemId::Sin2d.problem();
        p.source = |_| 0.0;
        let sys = assemble_linear(&gd, &p).unwrap();
        assert!(sys.rhs.iter().all(|&b| b == 0.0));
        assert!(solve_linear(&gd, &p)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn all_boundary_mesh_gives_empty_system() {
        let gd = build_p1(&simplicial(1, 1, UNIT).unwrap(), 1, false).unwrap();
        let sys = assemble_linear(&gd, &ProblemId::Sin2d.problem()).unwrap();
        assert_eq!(sys.matrix.n_rows(), 0);
        assert!(solve_linear(&gd, &ProblemId::Sin2d.problem()).is_ok());
    }

    #[test]
    fn p1_stiffness_is_five_point_stencil() {
        // On the uniform simplicial mesh, P1 with A = I reproduces the
        // five-point Laplacian: 4 on the diagonal, −1 for axis neighbours.
        let mesh = simplicial(4, 4, UNIT).unwrap();
        let gd = build_p1(&mesh, 1, false).unwrap();
        let sys = assemble_linear(&gd, &ProblemId::Sin2d.problem()).unwrap();
        for i in 0..gd.n_dofs() {
            let Some(fi) = gd.free_index(i) else { continue };
            let xi = gd.points()[i];
            for j in 0..gd.n_dofs() {
                let Some(fj) = gd.free_index(j) else { continue };
                let d = gd.points()[j] - xi;
                let expected = if i == j {
                    4.0
                } else if (d.norm() - 0.25).abs() < 1e-12 && (d.x == 0.0 || d.y == 0.0) {
                    -1.0
                } else {
                    0.0
                };
                assert!((sys.matrix.get(fi, fj) - expected).abs() < 1e-12, "{i} {j}");
            }
        }
    }

    #[test]
    fn galerkin_residual_vanishes() {
        let mesh = cartesian(6, 6, UNIT).unwrap();
        let gd = build(SchemeKind::Hmm, &mesh).unwrap();
        let p = ProblemId::Sin2d.problem();
        let sys = assemble_linear(&gd, &p).unwrap();
        let u = solve_system(&gd, &sys).unwrap();
        let r: Vec<f64> = sys
            .matrix
            .mul_vec(&u.free(&gd))
            .iter()
            .zip(&sys.rhs)
            .map(|(a, b)| a - b)
            .collect();
        assert!(norm(&r) <= 1e-10 * norm(&sys.rhs));
    }

    #[test]
    fn vanishing_beta_matches_linear_solve() {
        let gd = build_p1(&simplicial(6, 6, UNIT).unwrap(), 1, false).unwrap();
        let mut p = ProblemId::Sin2d.problem();
        p.beta = Some(Nonlinearity {
            value: |_| 0.0,
            derivative: |_| 0.0,
        });
        let lin = solve_linear(&gd, &p).unwrap();
        for form in [SemilinearForm::A, SemilinearForm::B] {
            let (u, _) = solve_semilinear(&gd, &p, form).unwrap();
            for (a, b) in u.values().iter().zip(lin.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn semilinear_energy_is_nonnegative() {
        let gd = build_p1(&simplicial(6, 6, UNIT).unwrap(), 1, false).unwrap();
        let p = ProblemId::Cubic.problem();
        let (u, info) = solve_semilinear(&gd, &p, SemilinearForm::A).unwrap();
        assert!(info.relative_residual <= NEWTON_TOL);
        let f = gd.evaluate(&u).unwrap();
        let e: f64 = gd
            .nodes()
            .zip(&f.values)
            .map(|((_, w), v)| w * v.powi(3) * v)
            .sum();
        assert!(e >= -1e-10);
    }

    #[test]
    fn error_report_for_p1() {
        let gd = build_p1(&simplicial(8, 8, UNIT).unwrap(), 1, false).unwrap();
        let p = ProblemId::Sin2d.problem();
        let u = solve_linear(&gd, &p).unwrap();
        let rep = error_report(&gd, &u, &p, EigenPath::Auto).unwrap();
        assert!(rep.err_l2 > 0.0 && rep.err_h1 > rep.err_l2);
        // Conforming: W_D vanishes up to quadrature.
        assert!(rep.w_d < 1e-4);
        assert!(rep.s_d_lo <= rep.s_d_interpolant + 1e-12);
    }
}
