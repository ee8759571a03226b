//! Representational similarity analysis between perturbation centroids and
//! differential-expression profiles.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prep::DEProfile;
use crate::stats::{cosine_or_none, rank_average_ties, spearman, CorrelationResult, PValueMethod};

/// Labels with fewer cells than this still count but trigger a warning.
pub const LOW_COVERAGE_CELLS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCentroids {
    pub labels: Vec<String>,
    /// Row `p` is the mean embedding of label `p`.
    pub matrix: Array2<f64>,
    pub counts: Vec<usize>,
}

/// Mean embedding per label, labels in first-appearance order. Cells with
/// no label are ignored; labels with fewer than `min_cells` cells are dropped.
pub fn centroids(
    e: ArrayView2<'_, f32>,
    labels: &[Option<String>],
    min_cells: usize,
) -> Result<PerturbationCentroids> {
    if labels.len() != e.nrows() {
        return Err(Error::Shape(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            e.nrows()
        )));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l.as_deref() {
            members
                .entry(l)
                .or_insert_with(|| {
                    order.push(l);
                    Vec::new()
                })
                .push(i);
        }
    }
    let kept: Vec<&str> = order
        .into_iter()
        .filter(|l| {
            let n = members[l].len();
            if n < min_cells {
                log::warn!("label {l:?} has {n} cells (< {min_cells}); dropped");
                false
            } else {
                if n < LOW_COVERAGE_CELLS {
                    log::warn!("label {l:?} has only {n} cells");
                }
                true
            }
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no label has at least {min_cells} cells"
        )));
    }
    let d = e.ncols();
    let rows: Vec<Vec<f64>> = kept
        .par_iter()
        .map(|l| {
            let idx = &members[l];
            let mut sum = vec![0.0f64; d];
            for &i in idx {
                for (s, &v) in sum.iter_mut().zip(e.row(i)) {
                    *s += f64::from(v);
                }
            }
            sum.iter().map(|s| s / idx.len() as f64).collect()
        })
        .collect();
    let matrix = Array2::from_shape_fn((kept.len(), d), |(p, j)| rows[p][j]);
    Ok(PerturbationCentroids {
        counts: kept.iter().map(|l| members[l].len()).collect(),
        labels: kept.into_iter().map(String::from).collect(),
        matrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Bio,
    Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Array2<f64>,
    pub kind: SimilarityKind,
}

fn fill_symmetric(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Array2<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|p| (p + 1..n).map(|q| f(p, q)).collect())
        .collect();
    let mut out = Array2::from_elem((n, n), 1.0);
    for (p, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            out[[p, p + 1 + off]] = v;
            out[[p + 1 + off, p]] = v;
        }
    }
    out
}

/// Cosine similarity between centroids. A zero-norm centroid gets 0 against
/// every other label and 1 on the diagonal.
pub fn embedding_similarity(c: &PerturbationCentroids) -> Result<SimilarityMatrix> {
    let n = c.labels.len();
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 labels, got {n}")));
    }
    let rows: Vec<Vec<f64>> = c.matrix.rows().into_iter().map(|r| r.to_vec()).collect();
    for (l, r) in c.labels.iter().zip(&rows) {
        if r.iter().all(|&v| v == 0.0) {
            log::warn!("centroid of {l:?} has zero norm; its similarities are set to 0");
        }
    }
    Ok(SimilarityMatrix {
        labels: c.labels.clone(),
        values: fill_symmetric(n, |p, q| cosine_or_none(&rows[p], &rows[q]).unwrap_or(0.0)),
        kind: SimilarityKind::Embedding,
    })
}

/// Spearman correlation between every pair of DE profiles.
pub fn bio_similarity(profiles: &[DEProfile]) -> Result<SimilarityMatrix> {
    let n = profiles.len();
    if n < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 DE profiles, got {n}"
        )));
    }
    let genes = &profiles[0].genes;
    if let Some(p) = profiles
        .iter()
        .find(|p| &p.genes != genes || p.logfc.len() != genes.len())
    {
        return Err(Error::Alignment(format!(
            "profile {:?} does not share the gene universe of {:?}",
            p.perturbation, profiles[0].perturbation
        )));
    }
    let mut seen = HashSet::new();
    if let Some(p) = profiles.iter().find(|p| !seen.insert(&p.perturbation)) {
        return Err(Error::Alignment(format!(
            "duplicate profile {:?}",
            p.perturbation
        )));
    }
    // Centered, unit-norm ranks: the dot product of two is their Spearman rho.
    let ranks: Vec<Vec<f64>> = profiles
        .par_iter()
        .map(|p| {
            let r = rank_average_ties(&p.logfc)?;
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let c: Vec<f64> = r.iter().map(|v| v - mean).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::UndefinedCorrelation(format!(
                    "DE profile {:?} is constant",
                    p.perturbation
                )));
            }
            Ok(c.into_iter().map(|v| v / norm).collect())
        })
        .collect::<Result<_>>()?;
    Ok(SimilarityMatrix {
        labels: profiles.iter().map(|p| p.perturbation.clone()).collect(),
        values: fill_symmetric(n, |p, q| {
            let dot: f64 = ranks[p].iter().zip(&ranks[q]).map(|(a, b)| a * b).sum();
            dot.clamp(-1.0, 1.0)
        }),
        kind: SimilarityKind::Bio,
    })
}

impl SimilarityMatrix {
    /// Rows and columns rearranged to `labels`, which must be a subset.
    pub fn select(&self, labels: &[String]) -> Result<SimilarityMatrix> {
        let pos: HashMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let idx = labels
            .iter()
            .map(|l| {
                pos.get(l.as_str())
                    .copied()
                    .ok_or_else(|| Error::Alignment(format!("label {l:?} not in matrix")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SimilarityMatrix {
            labels: labels.to_vec(),
            values: Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| {
                self.values[[idx[a], idx[b]]]
            }),
            kind: self.kind,
        })
    }

    /// CSV with a label header row and a label first column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(self.values.rows()) {
            out.push_str(l);
            for v in row {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Strictly-above-diagonal entries in row-major order.
pub fn upper_tri(s: &SimilarityMatrix) -> Vec<f64> {
    let n = s.labels.len();
    (0..n)
        .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
        .map(|(p, q)| s.values[[p, q]])
        .collect()
}

fn label_diff(a: &[String], b: &[String]) -> String {
    let sa: HashSet<&String> = a.iter().collect();
    let sb: HashSet<&String> = b.iter().collect();
    let only = |x: &[String], other: &HashSet<&String>| {
        x.iter()
            .filter(|l| !other.contains(l))
            .cloned()
            .collect::<Vec<_>>()
    };
    let (ia, ib) = (only(a, &sb), only(b, &sa));
    if ia.is_empty() && ib.is_empty() {
        "same labels in a different order".into()
    } else {
        format!("only in reference: {ia:?}; only in embedding: {ib:?}")
    }
}

/// Brings the embedding matrix into the reference's label order. Differing
/// label sets are an error unless `intersect` is set, in which case both
/// matrices are cut down to the shared labels (reference order).
pub fn align(
    bio: &SimilarityMatrix,
    emb: &SimilarityMatrix,
    intersect: bool,
) -> Result<(SimilarityMatrix, SimilarityMatrix)> {
    let in_emb: HashSet<&String> = emb.labels.iter().collect();
    let shared: Vec<String> = bio
        .labels
        .iter()
        .filter(|l| in_emb.contains(l))
        .cloned()
        .collect();
    let same_set = shared.len() == bio.labels.len() && shared.len() == emb.labels.len();
    if !same_set && !intersect {
        return Err(Error::Alignment(label_diff(&bio.labels, &emb.labels)));
    }
    if shared.len() < 3 {
        return Err(Error::Alignment(format!(
            "{} shared labels; at least 3 are needed",
            shared.len()
        )));
    }
    Ok((bio.select(&shared)?, emb.select(&shared)?))
}

/// Spearman correlation of the two upper triangles. Label order must match.
pub fn rsa_score(bio: &SimilarityMatrix, emb: &SimilarityMatrix) -> Result<CorrelationResult> {
    if bio.labels != emb.labels {
        return Err(Error::Alignment(label_diff(&bio.labels, &emb.labels)));
    }
    spearman(&upper_tri(bio), &upper_tri(emb))
}

/// [`rsa_score`] with a chosen p-value. The permutation variant shuffles the
/// embedding matrix's labels (rows and columns jointly), replicate `r` drawing
/// from ChaCha stream `(seed, r)`.
pub fn rsa_score_with(
    bio: &SimilarityMatrix,
    emb: &SimilarityMatrix,
    method: PValueMethod,
    n_perm: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    let observed = rsa_score(bio, emb)?;
    if method == PValueMethod::Asymptotic {
        return Ok(observed);
    }
    if n_perm < 1 {
        return Err(Error::Parameter("n_perm must be at least 1".into()));
    }
    let x = upper_tri(bio);
    let n = emb.labels.len();
    let hits = (0..n_perm)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let y: Vec<f64> = (0..n)
                .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
                .map(|(p, q)| emb.values[[perm[p], perm[q]]])
                .collect();
            spearman(&x, &y).map(|r| r.rho.abs() >= observed.rho.abs() - 1e-12)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&h| h)
        .count();
    Ok(CorrelationResult {
        p_value: (1 + hits) as f64 / (n_perm + 1) as f64,
        method: PValueMethod::Permutation,
        ..observed
    })
}
