//! Largest eigenvalue of a symmetric pencil `A x = λ B x` with `A` positive
//! semi-definite and `B` positive definite.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dot, CsrMatrix, EnvelopeCholesky, DIRECT_LIMIT};
use crate::{Error, Result};

pub const LANCZOS_TOL: f64 = 1e-10;
pub const LANCZOS_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenPath {
    /// Dense below [`DIRECT_LIMIT`] unknowns, Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

pub fn pencil_max(a: &CsrMatrix, b: &CsrMatrix, path: EigenPath) -> Result<f64> {
    match path {
        EigenPath::Dense => pencil_max_dense(a, b),
        EigenPath::Lanczos => pencil_max_lanczos(a, b, LANCZOS_TOL, LANCZOS_MAX_ITER),
        EigenPath::Auto if a.n_rows() < DIRECT_LIMIT => pencil_max_dense(a, b),
        EigenPath::Auto => pencil_max_lanczos(a, b, LANCZOS_TOL, LANCZOS_MAX_ITER),
    }
}

/// Brute force: reduce with the dense Cholesky factor of `B` and take every
/// eigenvalue of `L⁻¹ A L⁻ᵀ`.
pub fn pencil_max_dense(a: &CsrMatrix, b: &CsrMatrix) -> Result<f64> {
    let n = a.n_rows();
    if n == 0 {
        return Ok(0.0);
    }
    let l = b
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::NotSpd("right-hand matrix of the pencil".into()))?
        .l();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::NotSpd("singular Cholesky factor".into()))?;
    let mut c = &linv * a.to_dense() * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    Ok(eig
        .eigenvalues
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
}

/// Lanczos on `B⁻¹A`, which is self-adjoint in the `B` inner product, with
/// full reorthogonalisation. Converged when the Ritz residual falls below
/// `tol` times the Ritz value.
pub fn pencil_max_lanczos(a: &CsrMatrix, b: &CsrMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.n_rows();
    if n == 0 {
        return Ok(0.0);
    }
    let chol = EnvelopeCholesky::new(b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bq = b.mul_vec(&q);
    let s = dot(&q, &bq).sqrt();
    q.iter_mut().for_each(|v| *v /= s);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut bbasis: Vec<Vec<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let limit = max_iter.min(n);
    let mut last = (0.0, f64::INFINITY);
    for j in 0..limit {
        let aq = a.mul_vec(&q);
        let alpha = dot(&aq, &q);
        let mut w = chol.solve(&aq);
        basis.push(q.clone());
        bbasis.push(b.mul_vec(&q));
        // Two passes of Gram-Schmidt in the B inner product.
        for _ in 0..2 {
            for (qk, bqk) in basis.iter().zip(&bbasis) {
                let c = dot(bqk, &w);
                w.iter_mut().zip(qk).for_each(|(wi, qi)| *wi -= c * qi);
            }
        }
        let beta = dot(&b.mul_vec(&w), &w).max(0.0).sqrt();
        alphas.push(alpha);

        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imax, theta) = eig.eigenvalues.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
        let residual = beta * eig.eigenvectors[(m - 1, imax)].abs();
        last = (theta, residual);
        if theta <= 0.0 && residual <= f64::EPSILON {
            return Ok(0.0);
        }
        if residual <= tol * theta.abs() || j + 1 == n || beta <= f64::EPSILON * theta.abs() {
            return Ok(theta);
        }
        betas.push(beta);
        q = w.into_iter().map(|v| v / beta).collect();
    }
    Err(Error::NoConvergence {
        method: "Lanczos",
        iterations: limit,
        residual: last.1,
    })
}
