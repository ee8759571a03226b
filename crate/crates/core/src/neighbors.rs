//! Exact cosine k-nearest-neighbor graphs.
//!
//! Distances are `1 - cos(x_i, x_j)` computed in f64. Neighbor lists are
//! ordered by `(distance, index)`, so the output is deterministic regardless
//! of how row blocks are scheduled.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 15;
const DEFAULT_BLOCK_ROWS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrization {
    /// Keep an edge if either endpoint lists the other.
    #[default]
    Union,
    /// Keep an edge only if both endpoints list each other.
    Mutual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.index.cmp(&b.index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    n: usize,
    k: usize,
    adjacency: Vec<Vec<Neighbor>>,
    symmetric: bool,
    zero_norm_rows: usize,
}

impl NeighborGraph {
    /// Builds a graph from explicit directed edges `(src, dst, distance)`.
    /// With `symmetric = true` every edge must appear in both directions.
    pub fn from_edges(
        n: usize,
        k: usize,
        edges: &[(usize, usize, f64)],
        symmetric: bool,
    ) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        for &(i, j, d) in edges {
            if i >= n || j >= n {
                return Err(Error::Shape(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if i == j {
                return Err(Error::Parameter(format!("self-edge at node {i}")));
            }
            if !(0.0..=2.0).contains(&d) {
                return Err(Error::Parameter(format!(
                    "edge ({i}, {j}) distance {d} outside [0, 2]"
                )));
            }
            adjacency[i].push(Neighbor {
                index: j,
                distance: d,
            });
        }
        for list in &mut adjacency {
            list.sort_by(by_distance_then_index);
            if list.windows(2).any(|w| w[0].index == w[1].index) {
                return Err(Error::Parameter("repeated edge".into()));
            }
        }
        let g = NeighborGraph {
            n,
            k,
            adjacency,
            symmetric,
            zero_norm_rows: 0,
        };
        if symmetric && !g.is_mirrored() {
            return Err(Error::Parameter("edge list is not symmetric".into()));
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Rows whose embedding had zero norm (distance 1 to everything).
    pub fn zero_norm_rows(&self) -> usize {
        self.zero_norm_rows
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.adjacency[i]
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    fn distance(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .iter()
            .find(|nb| nb.index == j)
            .map(|nb| nb.distance)
    }

    fn is_mirrored(&self) -> bool {
        (0..self.n).all(|i| {
            self.adjacency[i]
                .iter()
                .all(|nb| self.distance(nb.index, i) == Some(nb.distance))
        })
    }

    /// Number of connected components, treating edges as undirected.
    pub fn n_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for i in 0..self.n {
            for nb in &self.adjacency[i] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, nb.index));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..self.n).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// Edge list as CSV `src,dst,distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,dst,distance\n");
        for (i, list) in self.adjacency.iter().enumerate() {
            for nb in list {
                writeln!(out, "{},{},{:?}", i, nb.index, nb.distance).unwrap();
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

struct Rows {
    data: Vec<f64>,
    dim: usize,
    norms: Vec<f64>,
}

impl Rows {
    fn new(x: ArrayView2<'_, f32>) -> Self {
        let dim = x.ncols();
        let data: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
        let norms = data
            .chunks(dim.max(1))
            .take(x.nrows())
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Rows { data, dim, norms }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn zero_norm(&self) -> usize {
        self.norms.iter().filter(|&&n| n == 0.0).count()
    }
}

fn pair_distance(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// Cosine distances between every row of `x` and every row of `y`.
/// Zero-norm rows are at distance 1 from everything.
pub fn cosine_distance_block(
    x: ArrayView2<'_, f32>,
    y: ArrayView2<'_, f32>,
) -> Result<Array2<f64>> {
    if x.ncols() != y.ncols() {
        return Err(Error::Shape(format!(
            "distance block needs equal widths, got {} and {}",
            x.ncols(),
            y.ncols()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Shape("zero-width embeddings".into()));
    }
    let (rx, ry) = (Rows::new(x), Rows::new(y));
    let zero = rx.zero_norm() + ry.zero_norm();
    if zero > 0 {
        log::warn!("{zero} zero-norm rows in cosine distance block");
    }
    Ok(Array2::from_shape_fn((x.nrows(), y.nrows()), |(i, j)| {
        pair_distance(rx.row(i), rx.norms[i], ry.row(j), ry.norms[j])
    }))
}

/// Exact cosine kNN graph (directed, self excluded).
pub fn knn_graph(x: ArrayView2<'_, f32>, k: usize) -> Result<NeighborGraph> {
    knn_graph_blocked(x, k, DEFAULT_BLOCK_ROWS)
}

/// [`knn_graph`] with an explicit number of rows per distance block.
pub fn knn_graph_blocked(
    x: ArrayView2<'_, f32>,
    k: usize,
    block_rows: usize,
) -> Result<NeighborGraph> {
    let n = x.nrows();
    if k == 0 || n <= k {
        return Err(Error::Parameter(format!(
            "kNN needs n > k >= 1, got n = {n}, k = {k}"
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Shape("zero-width embeddings".into()));
    }
    if block_rows == 0 {
        return Err(Error::Parameter("block_rows must be positive".into()));
    }
    let rows = Rows::new(x);
    let zero_norm_rows = rows.zero_norm();
    if zero_norm_rows > 0 {
        log::warn!("{zero_norm_rows} zero-norm embedding rows; their distances are set to 1");
    }
    let starts: Vec<usize> = (0..n).step_by(block_rows).collect();
    let adjacency: Vec<Vec<Neighbor>> = starts
        .par_iter()
        .flat_map_iter(|&start| {
            let end = (start + block_rows).min(n);
            let rows = &rows;
            (start..end).map(move |i| {
                let (ri, ni) = (rows.row(i), rows.norms[i]);
                let mut cand: Vec<Neighbor> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| Neighbor {
                        index: j,
                        distance: pair_distance(ri, ni, rows.row(j), rows.norms[j]),
                    })
                    .collect();
                if k < cand.len() {
                    cand.select_nth_unstable_by(k - 1, by_distance_then_index);
                    cand.truncate(k);
                }
                cand.sort_by(by_distance_then_index);
                cand
            })
        })
        .collect();
    Ok(NeighborGraph {
        n,
        k,
        adjacency,
        symmetric: false,
        zero_norm_rows,
    })
}

/// Symmetrizes a directed kNN graph. Mirrored edges carry the original
/// distance. Already-symmetric graphs are returned unchanged.
pub fn symmetrize(g: &NeighborGraph, mode: Symmetrization) -> NeighborGraph {
    if g.symmetric {
        return g.clone();
    }
    let mut adjacency: Vec<Vec<Neighbor>> = vec![Vec::new(); g.n];
    for i in 0..g.n {
        for nb in &g.adjacency[i] {
            let reverse = g.distance(nb.index, i);
            match mode {
                Symmetrization::Union => {
                    adjacency[i].push(*nb);
                    if reverse.is_none() {
                        adjacency[nb.index].push(Neighbor {
                            index: i,
                            distance: nb.distance,
                        });
                    }
                }
                Symmetrization::Mutual => {
                    if reverse.is_some() {
                        adjacency[i].push(*nb);
                    }
                }
            }
        }
    }
    for list in &mut adjacency {
        list.sort_by(by_distance_then_index);
    }
    NeighborGraph {
        n: g.n,
        k: g.k,
        adjacency,
        symmetric: true,
        zero_norm_rows: g.zero_norm_rows,
    }
}
