//! Sparse symmetric matrices and top-of-spectrum eigensolvers.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Compressed sparse rows, square.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    /// Rows given as `(column, value)` lists; columns need not be sorted.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col = Vec::new();
        let mut val = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                col.push(c);
                val.push(v);
            }
            row_ptr.push(col.len());
        }
        Csr {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()]
            .iter()
            .copied()
            .zip(self.val[r].iter().copied())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v).sum())
            .collect()
    }

    /// Same pattern, values mapped by `(row, col, value)`.
    pub fn map(&self, f: impl Fn(usize, usize, f64) -> f64) -> Csr {
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.val[p] = f(i, self.col[p], self.val[p]);
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

/// Leading eigenpairs, eigenvalues descending, unit-norm eigenvectors.
#[derive(Debug, Clone)]
pub(crate) struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

fn top_of(eig: SymmetricEigen<f64, nalgebra::Dyn>, m: usize) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order.truncate(m);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (order, values)
}

/// Full dense decomposition of a symmetric matrix, top `m` pairs kept.
pub(crate) fn dense_top(a: &Csr, m: usize) -> EigenPairs {
    let dense = a.to_dense();
    let sym = (&dense + dense.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (order, values) = top_of(eig.clone(), m);
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    EigenPairs { values, vectors }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    // Two passes of classical Gram-Schmidt.
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

/// Lanczos iteration with full reorthogonalization for the `m` largest
/// eigenpairs of a symmetric matrix.
///
/// Converged when every wanted Ritz pair has residual estimate
/// `|beta_k * s_k| <= tol`. The Krylov dimension never exceeds `n`, where the
/// factorization is exact.
pub(crate) fn lanczos_top(a: &Csr, m: usize, tol: f64, seed: u64) -> Result<EigenPairs> {
    let n = a.n();
    if m == 0 || m > n {
        return Err(Error::Parameter(format!(
            "requested {m} eigenpairs of a {n} × {n} matrix"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_unit = |basis: &[Vec<f64>]| -> Option<Vec<f64>> {
        for _ in 0..8 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            orthogonalize(&mut v, basis);
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-8 {
                v.iter_mut().for_each(|x| *x /= norm);
                return Some(v);
            }
        }
        None
    };

    let mut basis: Vec<Vec<f64>> = vec![random_unit(&[]).expect("n >= 1")];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    // Each check solves the projected problem densely, so checks are spaced
    // geometrically to keep their total cost near that of the last one.
    let mut next_check = 10.max(m);
    let mut scale = 0.0f64;

    loop {
        let j = basis.len() - 1;
        a.matvec(&basis[j], &mut w);
        let aj = dot(&basis[j], &w);
        alpha.push(aj);
        orthogonalize(&mut w, &basis);
        let bj = dot(&w, &w).sqrt();
        scale = scale.max(aj.abs()).max(bj);
        let dim = j + 1;
        let breakdown = bj <= 1e-12 * scale.max(1.0);

        // A breakdown only proves an invariant subspace, not that it holds the
        // top of the spectrum, so convergence is never declared there.
        if dim == n || (dim >= next_check && !breakdown) {
            next_check = dim + 10.max(m).max(dim / 4);
            let t = tridiagonal(&alpha, &beta);
            let eig = SymmetricEigen::new(t);
            let (order, values) = top_of(eig.clone(), m);
            let converged = dim == n
                || order
                    .iter()
                    .all(|&i| (bj * eig.eigenvectors[(dim - 1, i)]).abs() <= tol);
            if converged && order.len() == m {
                let vectors = order
                    .iter()
                    .map(|&i| {
                        let s = eig.eigenvectors.column(i);
                        let mut y = vec![0.0; n];
                        for (q, &c) in basis.iter().zip(s.iter()) {
                            axpy(c, q, &mut y);
                        }
                        let norm = dot(&y, &y).sqrt();
                        y.iter_mut().for_each(|x| *x /= norm);
                        y
                    })
                    .collect();
                return Ok(EigenPairs { values, vectors });
            }
        }
        if dim == n {
            return Err(Error::NoConvergence(format!(
                "Krylov space exhausted at dimension {n} without {m} pairs"
            )));
        }
        if breakdown {
            // Invariant subspace found; continue from a fresh orthogonal direction.
            let next = random_unit(&basis).ok_or_else(|| {
                Error::NoConvergence("could not extend an exhausted Krylov basis".into())
            })?;
            beta.push(0.0);
            basis.push(next);
        } else {
            beta.push(bj);
            basis.push(w.iter().map(|x| x / bj).collect());
        }
    }
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}
