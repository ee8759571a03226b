//! Diffusion maps and diffusion pseudotime (DPT) on a symmetric neighbor graph.
//!
//! Kernel: adaptive Gaussian `K_ij = exp(-d_ij^2 / (sigma_i sigma_j))` on graph
//! edges, where `sigma_i` is the distance to the `ceil(k/2)`-th neighbor of
//! `i`. Density normalization `K' = Q^-a K Q^-a` (a = 1 by default) with
//! `Q = diag(rowsum K)`, then `T = D^-1 K'` with `D = diag(rowsum K')`.
//!
//! Eigenpairs of `T` come from the symmetric conjugate
//! `S = D^1/2 T D^-1/2 = D^-1/2 K' D^-1/2`; right eigenvectors of `T` are
//! `psi = D^-1/2 v`. DPT from a root `r` is
//!
//! ```text
//! dpt(r, y)^2 = sum_{i >= 2} (lambda_i / (1 - lambda_i))^2 (psi_i(r) - psi_i(y))^2
//! ```
//!
//! min-max normalized to `[0, 1]`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::container::CellAnnotations;
use crate::error::{Error, Result};
use crate::linalg::{dense_top, lanczos_top, Csr, EigenPairs};
use crate::neighbors::NeighborGraph;

pub const DEFAULT_N_COMPONENTS: usize = 10;
/// Eigenvalues above `1 - UNIT_EIGEN_TOL` count as the trivial eigenvalue.
pub const UNIT_EIGEN_TOL: f64 = 1e-10;
const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Gauss,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EigenSolver {
    /// Dense below `dense_max_n` nodes, Lanczos above.
    #[default]
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub kernel: KernelKind,
    /// Density-normalization exponent.
    pub alpha: f64,
    pub n_components: usize,
    pub solver: EigenSolver,
    pub dense_max_n: usize,
    /// Lanczos Ritz residual tolerance.
    pub tol: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            kernel: KernelKind::Gauss,
            alpha: 1.0,
            n_components: DEFAULT_N_COMPONENTS,
            solver: EigenSolver::Auto,
            dense_max_n: 600,
            tol: 1e-10,
        }
    }
}

/// Row-stochastic diffusion operator, held as the symmetric kernel `K'`
/// and its degree vector. After [`spectral_decompose`] it also carries the
/// leading eigenpairs of `T`.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    kernel: Csr,
    degree: Vec<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudotimeResult {
    pub root: usize,
    /// Per-cell DPT in `[0, 1]`, zero at the root.
    pub dpt: Vec<f64>,
    /// Non-trivial diffusion components that entered the distance.
    pub n_components: usize,
}

fn bandwidth(g: &NeighborGraph, i: usize) -> f64 {
    let list = g.neighbors(i);
    let rank = g.k().div_ceil(2).clamp(1, list.len().max(1));
    list.get(rank - 1)
        .map_or(SIGMA_FLOOR, |nb| nb.distance)
        .max(SIGMA_FLOOR)
}

/// Builds the kernel and transition operator for a symmetric graph.
pub fn transition_operator(g: &NeighborGraph, cfg: &DiffusionConfig) -> Result<DiffusionOperator> {
    if !g.is_symmetric() {
        return Err(Error::Parameter(
            "diffusion requires a symmetrized neighbor graph".into(),
        ));
    }
    if !(cfg.alpha.is_finite() && cfg.alpha >= 0.0) {
        return Err(Error::Parameter(format!(
            "alpha must be >= 0, got {}",
            cfg.alpha
        )));
    }
    let n = g.n();
    let sigma: Vec<f64> = (0..n).map(|i| bandwidth(g, i)).collect();
    let rows = (0..n)
        .map(|i| {
            g.neighbors(i)
                .iter()
                .map(|nb| {
                    let w = match cfg.kernel {
                        KernelKind::Gauss => {
                            (-(nb.distance * nb.distance) / (sigma[i] * sigma[nb.index])).exp()
                        }
                        KernelKind::Binary => 1.0,
                    };
                    (nb.index, w)
                })
                .collect()
        })
        .collect();
    let k = Csr::from_rows(rows);
    let q = k.row_sums();
    if let Some(i) = q.iter().position(|&s| s <= 0.0) {
        return Err(Error::IsolatedNode(i));
    }
    let qa: Vec<f64> = q.iter().map(|s| s.powf(cfg.alpha)).collect();
    let kernel = k.map(|i, j, v| v / (qa[i] * qa[j]));
    let degree = kernel.row_sums();
    if let Some(i) = degree.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::IsolatedNode(i));
    }
    Ok(DiffusionOperator {
        kernel,
        degree,
        eigenvalues: Vec::new(),
        eigenvectors: Vec::new(),
    })
}

impl DiffusionOperator {
    pub fn n(&self) -> usize {
        self.degree.len()
    }

    /// Row sums of the density-normalized kernel (the diagonal of `D`).
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Eigenvalues of `T`, descending. Empty before decomposition.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Right eigenvectors `psi_i` of `T`, aligned with [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &[Vec<f64>] {
        &self.eigenvectors
    }

    /// `T x`.
    pub fn apply_transition(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.kernel.matvec(x, &mut y);
        y.iter_mut().zip(&self.degree).for_each(|(v, d)| *v /= d);
        y
    }

    /// Dense `T`, for inspection and small-scale checks.
    pub fn transition_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut t = Array2::zeros((n, n));
        for i in 0..n {
            for (j, v) in self.kernel.row(i) {
                t[[i, j]] = v / self.degree[i];
            }
        }
        t
    }

    /// `max_i ||T psi_i - lambda_i psi_i||_inf`.
    pub fn max_residual(&self) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&l, psi)| {
                self.apply_transition(psi)
                    .iter()
                    .zip(psi)
                    .map(|(tp, p)| (tp - l * p).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    fn n_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for i in 0..self.n() {
            for (j, _) in self.kernel.row(i) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..self.n()).filter(|&i| find(&mut parent, i) == i).count()
    }
}

/// Computes the top `cfg.n_components` eigenpairs of `T` (capped at `n`).
///
/// Eigenvector signs are fixed so the first clearly nonzero entry is positive.
pub fn spectral_decompose(
    mut op: DiffusionOperator,
    cfg: &DiffusionConfig,
) -> Result<DiffusionOperator> {
    let n = op.n();
    if cfg.n_components == 0 {
        return Err(Error::Parameter("n_components must be positive".into()));
    }
    let components = op.n_components();
    if components > 1 {
        return Err(Error::Disconnected(components));
    }
    let m = cfg.n_components.min(n);
    let inv_sqrt: Vec<f64> = op.degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let s = op.kernel.map(|i, j, v| v * inv_sqrt[i] * inv_sqrt[j]);
    let dense = match cfg.solver {
        EigenSolver::Dense => true,
        EigenSolver::Lanczos => false,
        EigenSolver::Auto => n <= cfg.dense_max_n,
    };
    let EigenPairs { values, vectors } = if dense {
        dense_top(&s, m)
    } else {
        lanczos_top(&s, m, cfg.tol, 0x5eed)?
    };
    let unit = values.iter().filter(|&&l| l > 1.0 - UNIT_EIGEN_TOL).count();
    if unit > 1 {
        return Err(Error::Disconnected(unit));
    }
    op.eigenvectors = vectors
        .into_iter()
        .map(|v| {
            let mut psi: Vec<f64> = v.iter().zip(&inv_sqrt).map(|(x, s)| x * s).collect();
            let peak = psi.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if let Some(first) = psi.iter().find(|x| x.abs() > 1e-10 * peak) {
                if *first < 0.0 {
                    psi.iter_mut().for_each(|x| *x = -*x);
                }
            }
            psi
        })
        .collect();
    op.eigenvalues = values;
    Ok(op)
}

/// Diffusion pseudotime from `root` over the decomposed operator.
pub fn dpt_distances(op: &DiffusionOperator, root: usize) -> Result<PseudotimeResult> {
    let n = op.n();
    if root >= n {
        return Err(Error::Parameter(format!(
            "root {root} out of range for {n} cells"
        )));
    }
    if op.eigenvalues.len() < 2 {
        return Err(Error::DegenerateSpectrum(format!(
            "{} diffusion components available, at least 2 needed",
            op.eigenvalues.len()
        )));
    }
    let mut used = Vec::new();
    for (i, &l) in op.eigenvalues.iter().enumerate().skip(1) {
        if l > 1.0 - UNIT_EIGEN_TOL {
            log::warn!("diffusion component {} has eigenvalue {l}; excluded", i + 1);
        } else {
            used.push(i);
        }
    }
    if used.is_empty() {
        return Err(Error::DegenerateSpectrum(
            "no non-trivial diffusion component is usable".into(),
        ));
    }
    let mut dist = vec![0.0; n];
    for &i in &used {
        let l = op.eigenvalues[i];
        let w = l / (1.0 - l);
        let psi = &op.eigenvectors[i];
        let at_root = psi[root];
        for (d, p) in dist.iter_mut().zip(psi) {
            let diff = w * (at_root - p);
            *d += diff * diff;
        }
    }
    let dist: Vec<f64> = dist.into_iter().map(f64::sqrt).collect();
    let max = dist.iter().fold(0.0f64, |a, &b| a.max(b));
    let dpt = if max > 0.0 {
        dist.iter().map(|d| d / max).collect()
    } else {
        dist
    };
    Ok(PseudotimeResult {
        root,
        dpt,
        n_components: used.len(),
    })
}

/// Explicit `root_cell` if annotated, else the argmin of the reference
/// pseudotime (lowest index among ties).
pub fn pick_root(ann: &CellAnnotations) -> Result<usize> {
    if let Some(id) = ann.root_cell() {
        return ann
            .index_of(id)
            .ok_or_else(|| Error::Config(format!("root cell {id:?} not found")));
    }
    let t = ann.reference_pseudotime().ok_or_else(|| {
        Error::Config("no root cell and no reference pseudotime to choose one".into())
    })?;
    t.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Config("empty annotations".into()))
}
