//! Rank statistics and similarity primitives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PValueMethod {
    #[default]
    Asymptotic,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub n: usize,
    /// Two-sided, in (0, 1].
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Ranks 1..n; each block of tied values gets the mean of the ranks it spans.
pub fn rank_average_ties(v: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = v.iter().position(|x| x.is_nan()) {
        return Err(Error::Parameter(format!(
            "NaN at position {i} cannot be ranked"
        )));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    // Stable sort keeps equal values in index order, so tie blocks are contiguous.
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // Ranks start+1 ..= end, mean = (start + 1 + end) / 2.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

fn centered(v: &[f64]) -> (Vec<f64>, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let c: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let ss = c.iter().map(|x| x * x).sum::<f64>();
    (c, ss)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "correlation inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Parameter(format!(
            "correlation needs at least 3 observations, got {}",
            x.len()
        )));
    }
    Ok(())
}

struct RankedPair {
    cx: Vec<f64>,
    cy: Vec<f64>,
    denom: f64,
    rho: f64,
}

fn ranked_pair(x: &[f64], y: &[f64]) -> Result<RankedPair> {
    check_pair(x, y)?;
    let (cx, ssx) = centered(&rank_average_ties(x)?);
    let (cy, ssy) = centered(&rank_average_ties(y)?);
    for (name, ss) in [("first", ssx), ("second", ssy)] {
        if ss <= 0.0 {
            return Err(Error::UndefinedCorrelation(format!(
                "{name} input is constant"
            )));
        }
    }
    let denom = (ssx * ssy).sqrt();
    let rho = (dot(&cx, &cy) / denom).clamp(-1.0, 1.0);
    Ok(RankedPair { cx, cy, denom, rho })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-sided p-value of a correlation coefficient from the t approximation
/// with `n - 2` degrees of freedom.
pub fn asymptotic_p(rho: f64, n: usize) -> f64 {
    let dof = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho.abs() * (dof / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
        2.0 * dist.sf(t)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Spearman rank correlation (Pearson correlation of tie-averaged ranks)
/// with an asymptotic two-sided p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    let r = ranked_pair(x, y)?;
    Ok(CorrelationResult {
        rho: r.rho,
        n: x.len(),
        p_value: asymptotic_p(r.rho, x.len()),
        method: PValueMethod::Asymptotic,
    })
}

/// Spearman correlation with a permutation p-value,
/// `(1 + #{|rho_perm| >= |rho_obs|}) / (n_perm + 1)`.
///
/// Replicate `r` shuffles with its own ChaCha stream `(seed, r)`, so the
/// result does not depend on how replicates are scheduled across threads.
pub fn spearman_permutation_p(
    x: &[f64],
    y: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<CorrelationResult> {
    if n_perm < 1 {
        return Err(Error::Parameter("n_perm must be at least 1".into()));
    }
    let r = ranked_pair(x, y)?;
    let observed = r.rho.abs();
    let hits = (0..n_perm)
        .into_par_iter()
        .filter(|&rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut cy = r.cy.clone();
            cy.shuffle(&mut rng);
            (dot(&r.cx, &cy) / r.denom).abs() >= observed - 1e-12
        })
        .count();
    Ok(CorrelationResult {
        rho: r.rho,
        n: x.len(),
        p_value: (1 + hits) as f64 / (n_perm + 1) as f64,
        method: PValueMethod::Permutation,
    })
}

/// Cosine similarity, or `None` when either vector has zero norm.
pub(crate) fn cosine_or_none(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `<a, b> / (|a| |b|)`. A zero-norm input yields 0 and logs a warning.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cosine inputs have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(cosine_or_none(a, b).unwrap_or_else(|| {
        log::warn!("cosine similarity with a zero-norm vector; using 0");
        0.0
    }))
}
