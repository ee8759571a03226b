//! Synthetic scenarios with planted ground truth, and brute-force oracles.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, stream)`:
//! stream 0 holds scenario-level parameters and stream `1 + c` belongs to
//! cell `c`. Generation is therefore a pure function of the scenario and
//! independent of thread scheduling.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{CellAnnotations, CountMatrix, EmbeddingStack};
use crate::error::{Error, Result};
use crate::neighbors::NeighborGraph;

/// Largest input the O(n^2)–O(n^3) oracles accept.
pub const ORACLE_MAX_N: usize = 500;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn cell_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(4);
    (0..n)
        .map(|i| format!("cell{:0width$}", i, width = width))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScenario {
    pub n_cells: usize,
    pub dims: usize,
    /// Per-layer isotropic Gaussian noise level; one layer per entry.
    pub noise: Vec<f64>,
    pub seed: u64,
}

impl TrajectoryScenario {
    /// Cubic polynomial coefficients, `dims × 4`, constant term first.
    ///
    /// Raw coefficients are standard normal; the whole curve is then scaled
    /// so that its total variance along `t ~ U(0, 1)` is 1, which makes the
    /// noise levels comparable across dimensions.
    fn curve(&self) -> Array2<f64> {
        let mut rng = stream(self.seed, 0);
        let coef = Array2::from_shape_fn((self.dims, 4), |_| gauss(&mut rng));
        // Cov(t^p, t^q) = 1/(p+q+1) - 1/((p+1)(q+1)) for t ~ U(0, 1).
        let cov = |p: usize, q: usize| 1.0 / (p + q + 1) as f64 - 1.0 / ((p + 1) * (q + 1)) as f64;
        let total: f64 = coef
            .rows()
            .into_iter()
            .map(|c| {
                (1..4)
                    .flat_map(|p| (1..4).map(move |q| (p, q)))
                    .map(|(p, q)| c[p] * c[q] * cov(p, q))
                    .sum::<f64>()
            })
            .sum();
        coef / total.sqrt()
    }
}

/// Cells along a smooth random cubic curve `gamma(t)` in `R^d`, one noisy copy
/// per layer. Reference pseudotime is the latent `t ~ U(0, 1)` and the root
/// is the cell with the smallest `t`.
pub fn gen_trajectory(sc: &TrajectoryScenario) -> Result<(EmbeddingStack, CellAnnotations)> {
    if sc.dims < 2 {
        return Err(Error::Parameter(format!(
            "trajectory needs at least 2 dims, got {}",
            sc.dims
        )));
    }
    if sc.n_cells < 2 || sc.noise.is_empty() {
        return Err(Error::Parameter(
            "trajectory needs at least 2 cells and 1 layer".into(),
        ));
    }
    if let Some(s) = sc.noise.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::Parameter(format!("noise level {s} must be >= 0")));
    }
    let coef = sc.curve();
    let (d, n_layers) = (sc.dims, sc.noise.len());
    let cells: Vec<(f64, Vec<f32>)> = (0..sc.n_cells)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(sc.seed, 1 + c as u64);
            let t: f64 = rng.random();
            let point: Vec<f64> = (0..d)
                .map(|j| coef[[j, 0]] + t * (coef[[j, 1]] + t * (coef[[j, 2]] + t * coef[[j, 3]])))
                .collect();
            let mut row = Vec::with_capacity(n_layers * d);
            for &sigma in &sc.noise {
                row.extend(point.iter().map(|p| (p + sigma * gauss(&mut rng)) as f32));
            }
            (t, row)
        })
        .collect();

    let layers = (0..n_layers)
        .map(|l| Array2::from_shape_fn((sc.n_cells, d), |(c, j)| cells[c].1[l * d + j]))
        .collect();
    let t: Vec<f64> = cells.iter().map(|c| c.0).collect();
    let root = t
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("n_cells >= 2");
    let ids = cell_ids(sc.n_cells);
    let root_id = ids[root].clone();
    let ann = CellAnnotations::new(ids)?
        .with_pseudotime(t)?
        .with_root(root_id)?;
    let stack = EmbeddingStack::new("synthetic-trajectory", layers)?;
    Ok((stack, ann))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    /// Random linear map of each cell's noisy effect, plus isotropic noise.
    Signal { dim: usize, noise: f64 },
    /// Label-independent Gaussian noise.
    Scrambled { dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScenario {
    pub n_cells_per_label: usize,
    /// Total labels, control included.
    pub n_labels: usize,
    pub n_genes: usize,
    /// Number of shared gene programs that give the effects block structure.
    pub n_programs: usize,
    /// Standard deviation of a program's per-gene log-effect.
    pub effect_scale: f64,
    /// Mean baseline Poisson rate per gene.
    pub baseline: f64,
    /// Per-cell Gaussian jitter around the label effect, in log space.
    pub cell_noise: f64,
    pub layers: Vec<LayerKind>,
    pub control_label: String,
    pub condition: Option<String>,
    pub seed: u64,
}

impl Default for PerturbationScenario {
    fn default() -> Self {
        PerturbationScenario {
            n_cells_per_label: 300,
            n_labels: 20,
            n_genes: 500,
            n_programs: 4,
            effect_scale: 0.5,
            baseline: 10.0,
            cell_noise: 0.3,
            layers: vec![
                LayerKind::Signal {
                    dim: 512,
                    noise: 0.5,
                },
                LayerKind::Scrambled { dim: 512 },
            ],
            control_label: "non-targeting".into(),
            condition: None,
            seed: 0,
        }
    }
}

impl PerturbationScenario {
    /// Label names; the control comes first.
    pub fn labels(&self) -> Vec<String> {
        std::iter::once(self.control_label.clone())
            .chain((1..self.n_labels).map(|i| format!("PERT{i:02}")))
            .collect()
    }

    /// Planted `labels × genes` log-effects. Row 0 (control) is zero.
    ///
    /// Each label mixes the shared programs with positive weights dominated by
    /// one "home" program, plus a smaller label-specific component. Labels
    /// sharing a home program have correlated effects.
    pub fn planted_effects(&self) -> Array2<f64> {
        let mut rng = stream(self.seed, 0);
        let g = self.n_genes;
        let k = self.n_programs.max(1);
        let programs = Array2::from_shape_fn((k, g), |_| gauss(&mut rng));
        let mut effects = Array2::zeros((self.n_labels, g));
        for p in 1..self.n_labels {
            let home = (p - 1) % k;
            let weights: Vec<f64> = (0..k)
                .map(|b| {
                    let base = if b == home { 1.0 } else { 0.0 };
                    base + 0.35 * rng.random::<f64>()
                })
                .collect();
            for j in 0..g {
                let shared: f64 = (0..k).map(|b| weights[b] * programs[[b, j]]).sum();
                effects[[p, j]] = self.effect_scale * (shared + 0.3 * gauss(&mut rng));
            }
        }
        effects
    }

    fn baseline_rates(&self) -> Vec<f64> {
        let mut rng = stream(self.seed, u64::MAX);
        (0..self.n_genes)
            .map(|_| self.baseline * (0.5 * gauss(&mut rng)).exp())
            .collect()
    }
}

/// Planted scenario: `(embeddings, annotations, counts)`.
pub fn gen_perturbation(
    sc: &PerturbationScenario,
) -> Result<(EmbeddingStack, CellAnnotations, CountMatrix)> {
    simulate_perturbation(sc, &sc.planted_effects())
}

/// Simulates cells from explicit `labels × genes` log-effects.
///
/// Counts are Poisson with rate `baseline_g * exp(effect_pg)`. A cell's
/// embedding in a signal layer is `M_l (effect_p + jitter) + noise`, with
/// `M_l` a fixed Gaussian map per layer.
pub fn simulate_perturbation(
    sc: &PerturbationScenario,
    effects: &Array2<f64>,
) -> Result<(EmbeddingStack, CellAnnotations, CountMatrix)> {
    if sc.n_labels < 3 {
        return Err(Error::Parameter(format!(
            "perturbation scenario needs at least 3 labels including control, got {}",
            sc.n_labels
        )));
    }
    if !(sc.baseline.is_finite() && sc.baseline > 0.0) {
        return Err(Error::Parameter(format!(
            "baseline rate must be positive, got {}",
            sc.baseline
        )));
    }
    if effects.dim() != (sc.n_labels, sc.n_genes) {
        return Err(Error::Shape(format!(
            "effects are {:?}, scenario needs ({}, {})",
            effects.dim(),
            sc.n_labels,
            sc.n_genes
        )));
    }
    if effects.row(0).iter().any(|&v| v != 0.0) {
        return Err(Error::Parameter(
            "control effect vector must be zero".into(),
        ));
    }
    if sc.n_cells_per_label == 0 || sc.layers.is_empty() {
        return Err(Error::Parameter("need cells and at least one layer".into()));
    }
    let g = sc.n_genes;
    let baseline = sc.baseline_rates();
    let mut rng = stream(sc.seed, u64::MAX - 1);
    let maps: Vec<Option<Array2<f64>>> = sc
        .layers
        .iter()
        .map(|kind| match *kind {
            LayerKind::Signal { dim, .. } => {
                let scale = 1.0 / (g as f64).sqrt();
                Some(Array2::from_shape_fn((dim, g), |_| scale * gauss(&mut rng)))
            }
            LayerKind::Scrambled { .. } => None,
        })
        .collect();

    let n_cells = sc.n_labels * sc.n_cells_per_label;
    let dims: Vec<usize> = sc
        .layers
        .iter()
        .map(|kind| match *kind {
            LayerKind::Signal { dim, .. } | LayerKind::Scrambled { dim } => dim,
        })
        .collect();
    // Per cell: realized effect, counts, then one noise vector per layer.
    struct Cell {
        realized: Vec<f64>,
        counts: Vec<(usize, u32)>,
        noise: Vec<Vec<f64>>,
    }
    let cells: Vec<Cell> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let label = c / sc.n_cells_per_label;
            let mut rng = stream(sc.seed, 1 + c as u64);
            let effect = effects.row(label);
            let realized = effect
                .iter()
                .map(|e| e + sc.cell_noise * gauss(&mut rng))
                .collect();
            let counts = (0..g)
                .filter_map(|j| {
                    let rate = baseline[j] * effect[j].exp();
                    let v = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u32;
                    (v > 0).then_some((j, v))
                })
                .collect();
            let noise = dims
                .iter()
                .map(|&d| (0..d).map(|_| gauss(&mut rng)).collect())
                .collect();
            Cell {
                realized,
                counts,
                noise,
            }
        })
        .collect();

    let realized = Array2::from_shape_fn((n_cells, g), |(c, j)| cells[c].realized[j]);
    let layers = sc
        .layers
        .iter()
        .zip(&maps)
        .enumerate()
        .map(|(l, (kind, map))| match (*kind, map) {
            (LayerKind::Signal { noise, .. }, Some(m)) => {
                let signal = realized.dot(&m.t());
                Array2::from_shape_fn(signal.dim(), |(c, j)| {
                    (signal[[c, j]] + noise * cells[c].noise[l][j]) as f32
                })
            }
            (LayerKind::Scrambled { dim }, _) => {
                Array2::from_shape_fn((n_cells, dim), |(c, j)| cells[c].noise[l][j] as f32)
            }
            _ => unreachable!("maps align with layer kinds"),
        })
        .collect();
    let ids = cell_ids(n_cells);
    let labels = sc.labels();
    let per_cell: Vec<Option<String>> = (0..n_cells)
        .map(|c| Some(labels[c / sc.n_cells_per_label].clone()))
        .collect();
    let mut ann = CellAnnotations::new(ids.clone())?.with_perturbation(per_cell)?;
    if let Some(cond) = &sc.condition {
        ann = ann.with_condition(vec![Some(cond.clone()); n_cells])?;
    }
    let genes = (0..g).map(|j| format!("GENE{j:04}")).collect();
    let triplets = cells
        .iter()
        .enumerate()
        .flat_map(|(c, cell)| cell.counts.iter().map(move |&(j, v)| (j, c, v)));
    let counts = CountMatrix::from_triplets(genes, ids, triplets)?;
    let stack = EmbeddingStack::new("synthetic-perturbation", layers)?;
    Ok((stack, ann, counts))
}

/// Gaussian matrix with the given seed; handy for null scenarios.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f32> {
    let mut rng = stream(seed, 0);
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    Array2::from_shape_fn((rows, cols), |_| normal.sample(&mut rng))
}

fn oracle_scale(n: usize) -> Result<()> {
    if n > ORACLE_MAX_N {
        return Err(Error::Parameter(format!(
            "oracle input has {n} items; limit is {ORACLE_MAX_N}"
        )));
    }
    Ok(())
}

/// Brute-force kNN: every pairwise cosine distance, fully sorted.
pub fn oracle_knn(x: ArrayView2<'_, f32>, k: usize) -> Result<NeighborGraph> {
    let n = x.nrows();
    oracle_scale(n)?;
    if k == 0 || k >= n {
        return Err(Error::Parameter(format!(
            "oracle kNN needs n > k >= 1 (n = {n}, k = {k})"
        )));
    }
    let rows: Vec<Vec<f64>> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut edges = Vec::with_capacity(n * k);
    for i in 0..n {
        let mut all: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
        for j in 0..n {
            if i == j {
                continue;
            }
            let (ni, nj) = (norm(&rows[i]), norm(&rows[j]));
            let d = if ni == 0.0 || nj == 0.0 {
                1.0
            } else {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                (1.0 - dot / (ni * nj)).clamp(0.0, 2.0)
            };
            all.push((d, j));
        }
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        edges.extend(all.into_iter().take(k).map(|(d, j)| (i, j, d)));
    }
    NeighborGraph::from_edges(n, k, &edges, false)
}

/// Spearman correlation straight from the definitions: mid-ranks by
/// counting, then the pairwise-difference form of the Pearson coefficient,
/// `sum_{i<j} (r_i - r_j)(s_i - s_j) / sqrt(sum (r_i - r_j)^2 sum (s_i - s_j)^2)`.
pub fn oracle_spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    oracle_scale(n)?;
    if y.len() != n || n < 3 {
        return Err(Error::Shape(
            "oracle spearman needs equal lengths >= 3".into(),
        ));
    }
    let ranks = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let below = v.iter().filter(|&&w| w < v[i]).count() as f64;
                let equal = v.iter().filter(|&&w| w == v[i]).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (r, s) = (ranks(x), ranks(y));
    let (mut num, mut rr, mut ss) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (r[i] - r[j], s[i] - s[j]);
            num += a * b;
            rr += a * a;
            ss += b * b;
        }
    }
    if rr == 0.0 || ss == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input".into()));
    }
    Ok(num / (rr * ss).sqrt())
}

/// Top-`m` eigenpairs of a reversible row-stochastic matrix `T` by cyclic
/// Jacobi rotations on its symmetrization `Pi^1/2 T Pi^-1/2`. The stationary
/// weights come from detailed balance along a spanning tree of `T`.
/// Eigenvectors are right eigenvectors of `T` with unit Euclidean norm.
#[allow(clippy::needless_range_loop)] // index form mirrors the rotation formulas
pub fn oracle_eig(t: ArrayView2<'_, f64>, m: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = t.nrows();
    oracle_scale(n)?;
    if t.ncols() != n || m == 0 || m > n {
        return Err(Error::Parameter(
            "oracle_eig needs square T and 1 <= m <= n".into(),
        ));
    }
    // Detailed balance: pi_j = pi_i T_ij / T_ji.
    let mut pi = vec![0.0f64; n];
    pi[0] = 1.0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut seen = vec![false; n];
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && t[[i, j]] > 0.0 && t[[j, i]] > 0.0 {
                pi[j] = pi[i] * t[[i, j]] / t[[j, i]];
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Disconnected(2));
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| (pi[i] / pi[j]).sqrt() * t[[i, j]]).collect())
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = avg;
            a[j][i] = avg;
        }
    }
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let tan = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cos = 1.0 / (tan * tan + 1.0).sqrt();
                let sin = tan * cos;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = cos * akp - sin * akq;
                    a[k][q] = sin * akp + cos * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = cos * apk - sin * aqk;
                    a[q][k] = sin * apk + cos * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = cos * vkp - sin * vkq;
                    row[q] = sin * vkp + cos * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().take(m).map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .take(m)
        .map(|&c| {
            let psi: Vec<f64> = (0..n).map(|r| v[r][c] / pi[r].sqrt()).collect();
            let norm = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
            psi.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    Ok((values, vectors))
}
