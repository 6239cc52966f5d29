//! Envelope (profile) Cholesky factorisation with reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use super::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First stored column of each row of L (in permuted numbering).
    first: Vec<usize>,
    /// Start of each row inside `values`.
    start: Vec<usize>,
    values: Vec<f64>,
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity graph of `a`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let neighbours = |i: usize| a.row(i).0.iter().copied().filter(move |&j| j != i);
    let degree: Vec<usize> = (0..n).map(|i| neighbours(i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |root: usize, visited: &mut Vec<bool>, order: &mut Vec<usize>| {
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(i) = queue.pop_front() {
            order.push(i);
            let mut next: Vec<usize> = neighbours(i).filter(|&j| !visited[j]).collect();
            next.sort_unstable_by_key(|&j| (degree[j], j));
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    };
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        // One sweep towards a pseudo-peripheral node: restart from the last
        // node reached by a BFS from the seed.
        let mut probe_visited = visited.clone();
        let mut probe = Vec::new();
        bfs(seed, &mut probe_visited, &mut probe);
        let root = *probe.last().unwrap();
        bfs(root, &mut visited, &mut order);
    }
    order.reverse();
    order
}

impl EnvelopeCholesky {
    /// Factorises a symmetric positive definite matrix. Only the lower
    /// triangle (after permutation) is read.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(Error::InvalidArgument(
                "Cholesky needs a square matrix".into(),
            ));
        }
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for &c in a.row(old).0 {
                let j = inv[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; start[n]];
        for old in 0..n {
            let i = inv[old];
            let (cols, vals) = a.row(old);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = inv[c];
                if j <= i {
                    values[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = values[start[i] + j - fi];
                let ri = &values[start[i] + lo - fi..start[i] + j - fi];
                let rj = &values[start[j] + lo - fj..start[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                if j < i {
                    values[start[i] + j - fi] = s / values[start[j + 1] - 1];
                } else {
                    if !(s > 0.0) {
                        return Err(Error::NotSpd(format!(
                            "non-positive pivot {s:.3e} at row {}",
                            perm[i]
                        )));
                    }
                    values[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            start,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi]
                .iter()
                .zip(&y[fi..i])
                .map(|(l, x)| l * x)
                .sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (k, l) in row[..i - fi].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Triplets;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn laplacian_2d(n: usize) -> CsrMatrix {
        let id = |i: usize, j: usize| j * n + i;
        let mut t = Triplets::new(n * n, n * n);
        for j in 0..n {
            for i in 0..n {
                t.push(id(i, j), id(i, j), 4.0);
                if i > 0 {
                    t.push(id(i, j), id(i - 1, j), -1.0);
                }
                if i + 1 < n {
                    t.push(id(i, j), id(i + 1, j), -1.0);
                }
                if j > 0 {
                    t.push(id(i, j), id(i, j - 1), -1.0);
                }
                if j + 1 < n {
                    t.push(id(i, j), id(i, j + 1), -1.0);
                }
            }
        }
        t.to_csr()
    }

    #[test]
    fn solves_poisson() {
        let a = laplacian_2d(12);
        let x_true: Vec<f64> = (0..144).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = EnvelopeCholesky::new(&a).unwrap().solve(&b);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(matches!(EnvelopeCholesky::new(&a), Err(Error::NotSpd(_))));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_2d(5);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..25).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_dense_solve(seed in 0u64..10_000, n in 1usize..30) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut b = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if rng.random_bool(0.2) {
                        b[(i, j)] = rng.random_range(-1.0..1.0);
                    }
                }
            }
            let a = &b * b.transpose() + DMatrix::identity(n, n);
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = EnvelopeCholesky::new(&CsrMatrix::from_dense(&a)).unwrap().solve(&rhs);
            let xd = a.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(rhs));
            for i in 0..n {
                prop_assert!((x[i] - xd[i]).abs() < 1e-10);
            }
        }
    }
}
