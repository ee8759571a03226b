use std::collections::{HashMap, HashSet};

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{config_digest, report_depth, LayerFailure, LayerScoreReport, ScoreRow, Task};
use crate::container::{CellAnnotations, EmbeddingStack};
use crate::diffusion::{
    dpt_distances, pick_root, spectral_decompose, transition_operator, DiffusionConfig,
};
use crate::error::{Error, Result};
use crate::neighbors::{knn_graph, symmetrize, Symmetrization, DEFAULT_K};
use crate::prep::{DEProfile, DEFAULT_CONTROL};
use crate::rsa::{
    bio_similarity, centroids, embedding_similarity, rsa_score_with, SimilarityMatrix,
};
use crate::stats::{spearman, spearman_permutation_p, CorrelationResult, PValueMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k: usize,
    pub symmetrize: Symmetrization,
    pub diffusion: DiffusionConfig,
    pub pvalue: PValueMethod,
    pub n_perm: usize,
    pub seed: u64,
    pub control: String,
    pub min_cells: usize,
    pub intersect_labels: bool,
    /// Layers evaluated concurrently; `None` uses the global thread pool.
    /// Not part of the digest: it never changes results.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k: DEFAULT_K,
            symmetrize: Symmetrization::Union,
            diffusion: DiffusionConfig::default(),
            pvalue: PValueMethod::Asymptotic,
            n_perm: 1000,
            seed: 0,
            control: DEFAULT_CONTROL.into(),
            min_cells: 1,
            intersect_labels: false,
            jobs: None,
        }
    }
}

impl SweepConfig {
    fn correlate(&self, x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
        match self.pvalue {
            PValueMethod::Asymptotic => spearman(x, y),
            PValueMethod::Permutation => spearman_permutation_p(x, y, self.n_perm, self.seed),
        }
    }

    fn digest(&self, task: Task, condition: Option<&str>) -> String {
        config_digest(&(task, condition, self))
    }
}

/// Trajectory score of one layer: kNN graph, diffusion pseudotime from
/// `root`, Spearman against the reference pseudotime.
pub fn trajectory_layer(
    x: ArrayView2<'_, f32>,
    reference: &[f64],
    root: usize,
    cfg: &SweepConfig,
) -> Result<CorrelationResult> {
    let g = symmetrize(&knn_graph(x, cfg.k)?, cfg.symmetrize);
    let op = spectral_decompose(transition_operator(&g, &cfg.diffusion)?, &cfg.diffusion)?;
    let dpt = dpt_distances(&op, root)?;
    cfg.correlate(reference, &dpt.dpt)
}

/// Perturbation score of one layer against a prepared reference matrix.
/// `labels` must already be restricted to the reference's labels.
pub fn perturbation_layer(
    x: ArrayView2<'_, f32>,
    labels: &[Option<String>],
    bio: &SimilarityMatrix,
    cfg: &SweepConfig,
) -> Result<CorrelationResult> {
    let emb = embedding_similarity(&centroids(x, labels, cfg.min_cells)?)?;
    let emb = emb.select(&bio.labels)?;
    rsa_score_with(bio, &emb, cfg.pvalue, cfg.n_perm, cfg.seed)
}

fn run_layers<F>(stack: &EmbeddingStack, jobs: Option<usize>, f: F) -> Result<Vec<ScoreRow>>
where
    F: Fn(ArrayView2<'_, f32>) -> Result<CorrelationResult> + Sync,
{
    let n = stack.n_layers();
    let eval = || {
        (1..=n)
            .into_par_iter()
            .map(|l| (l, f(stack.layer(l).expect("layer in range"))))
            .collect::<Vec<_>>()
    };
    let results = match jobs {
        Some(0) => return Err(Error::Parameter("jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(eval),
        None => eval(),
    };
    results
        .into_iter()
        .map(|(layer, r)| {
            let depth = report_depth(layer, n)?;
            Ok(match r {
                Ok(c) => ScoreRow {
                    layer,
                    depth,
                    rho: Some(c.rho),
                    p_value: Some(c.p_value),
                    failure: None,
                },
                Err(e) => {
                    log::warn!("layer {layer} failed: {e}");
                    ScoreRow {
                        layer,
                        depth,
                        rho: None,
                        p_value: None,
                        failure: Some(LayerFailure::from(&e)),
                    }
                }
            })
        })
        .collect()
}

fn check_rows(stack: &EmbeddingStack, ann: &CellAnnotations) -> Result<()> {
    if stack.n_cells() != ann.len() {
        return Err(Error::Shape(format!(
            "{} embedding rows but {} annotated cells",
            stack.n_cells(),
            ann.len()
        )));
    }
    Ok(())
}

/// Scores every layer by how well its diffusion pseudotime tracks the
/// reference pseudotime. Layer failures become failed rows.
pub fn trajectory_sweep(
    stack: &EmbeddingStack,
    ann: &CellAnnotations,
    cfg: &SweepConfig,
) -> Result<LayerScoreReport> {
    check_rows(stack, ann)?;
    let reference = ann
        .reference_pseudotime()
        .ok_or_else(|| Error::Config("annotations carry no reference pseudotime".into()))?;
    let root = pick_root(ann)?;
    let rows = run_layers(stack, cfg.jobs, |x| {
        trajectory_layer(x, reference, root, cfg)
    })?;
    Ok(LayerScoreReport {
        task: Task::Trajectory,
        condition: None,
        rows,
        config_digest: cfg.digest(Task::Trajectory, None),
    })
}

/// Per-cell labels used for centroids: cells outside `condition`, control
/// cells and cells of labels outside `keep` become unlabeled.
fn effective_labels(
    ann: &CellAnnotations,
    condition: Option<&str>,
    control: &str,
) -> Result<Vec<Option<String>>> {
    let per_cell = ann
        .perturbation()
        .ok_or_else(|| Error::Annotation("annotations carry no perturbation column".into()))?;
    let in_condition: Vec<bool> = match condition {
        None => vec![true; ann.len()],
        Some(c) => {
            let cond = ann.condition().ok_or_else(|| {
                Error::Config(format!(
                    "condition {c:?} requested but annotations have none"
                ))
            })?;
            cond.iter().map(|v| v.as_deref() == Some(c)).collect()
        }
    };
    if !in_condition.iter().any(|&b| b) {
        return Err(Error::EmptyResult(format!(
            "no cells in condition {condition:?}"
        )));
    }
    Ok(per_cell
        .iter()
        .zip(&in_condition)
        .map(|(l, &inside)| l.clone().filter(|l| inside && l != control))
        .collect())
}

/// Scores every layer by the rank agreement between its centroid cosine
/// similarities and the DE-profile similarities. The reference matrix is
/// computed once; the control label never enters either matrix.
pub fn perturbation_sweep(
    stack: &EmbeddingStack,
    ann: &CellAnnotations,
    profiles: &[DEProfile],
    condition: Option<&str>,
    cfg: &SweepConfig,
) -> Result<LayerScoreReport> {
    check_rows(stack, ann)?;
    let mut labels = effective_labels(ann, condition, &cfg.control)?;
    let profiles: Vec<DEProfile> = profiles
        .iter()
        .filter(|p| p.perturbation != cfg.control)
        .cloned()
        .collect();
    let bio = bio_similarity(&profiles)?;

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for l in labels.iter().flatten() {
        *counts.entry(l.as_str()).or_default() += 1;
    }
    let observed: HashSet<&str> = counts
        .iter()
        .filter(|(_, &c)| c >= cfg.min_cells)
        .map(|(l, _)| *l)
        .collect();
    let shared: Vec<String> = bio
        .labels
        .iter()
        .filter(|l| observed.contains(l.as_str()))
        .cloned()
        .collect();
    if shared.len() != bio.labels.len() || shared.len() != observed.len() {
        let in_bio: HashSet<&str> = bio.labels.iter().map(String::as_str).collect();
        let mut no_cells: Vec<&str> = in_bio.difference(&observed).copied().collect();
        let mut no_profile: Vec<&str> = observed.difference(&in_bio).copied().collect();
        no_cells.sort_unstable();
        no_profile.sort_unstable();
        if !cfg.intersect_labels {
            return Err(Error::Alignment(format!(
                "labels without cells: {no_cells:?}; labels without a DE profile: {no_profile:?}"
            )));
        }
        log::warn!(
            "intersecting labels: dropping {} without cells and {} without a DE profile",
            no_cells.len(),
            no_profile.len()
        );
    }
    if shared.len() < 3 {
        return Err(Error::Alignment(format!(
            "{} labels shared by cells and DE profiles; at least 3 are needed",
            shared.len()
        )));
    }
    let keep: HashSet<&str> = shared.iter().map(String::as_str).collect();
    for l in labels.iter_mut() {
        if l.as_deref().is_some_and(|v| !keep.contains(v)) {
            *l = None;
        }
    }
    let bio = bio.select(&shared)?;
    let rows = run_layers(stack, cfg.jobs, |x| {
        perturbation_layer(x, &labels, &bio, cfg)
    })?;
    Ok(LayerScoreReport {
        task: Task::Perturbation,
        condition: condition.map(String::from),
        rows,
        config_digest: cfg.digest(Task::Perturbation, condition),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gaussian_matrix, gen_perturbation, PerturbationScenario};
    use ndarray::Array2;

    fn arc_stack(n: usize) -> (EmbeddingStack, CellAnnotations) {
        // Pseudotime mapped to an angle: the cosine-geometry analogue of a
        // one-dimensional embedding that equals the reference.
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let arc = Array2::from_shape_fn((n, 2), |(i, j)| {
            let a = t[i] * std::f64::consts::FRAC_PI_2;
            (if j == 0 { a.cos() } else { a.sin() }) as f32
        });
        let noise = gaussian_matrix(n, 8, 3);
        let stack = EmbeddingStack::new("arc", vec![arc, noise]).unwrap();
        let ids = (0..n).map(|i| format!("c{i}")).collect();
        let ann = CellAnnotations::new(ids)
            .unwrap()
            .with_pseudotime(t)
            .unwrap();
        (stack, ann)
    }

    #[test]
    fn noiseless_chain_is_recovered() {
        let (stack, ann) = arc_stack(300);
        let report = trajectory_sweep(&stack, &ann, &SweepConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[0].rho.unwrap() >= 0.99, "{:?}", report.rows[0]);
        assert!(
            report.rows[1].rho.unwrap().abs() < 0.3,
            "{:?}",
            report.rows[1]
        );
    }

    #[test]
    fn single_layer_equals_sweep_row() {
        let (stack, ann) = arc_stack(120);
        let cfg = SweepConfig::default();
        let report = trajectory_sweep(&stack, &ann, &cfg).unwrap();
        let alone = trajectory_layer(
            stack.layer(2).unwrap(),
            ann.reference_pseudotime().unwrap(),
            0,
            &cfg,
        )
        .unwrap();
        assert_eq!(report.rows[1].rho.unwrap().to_bits(), alone.rho.to_bits());
    }

    #[test]
    fn failing_layer_does_not_abort() {
        let (stack, ann) = arc_stack(60);
        let mut layers = stack.layers().to_vec();
        // Two far-apart clusters: the kNN graph splits in two.
        layers.push(Array2::from_shape_fn((60, 2), |(i, j)| {
            let hot = if i < 30 { 0 } else { 1 };
            if j == hot {
                1.0
            } else {
                0.001 * (i % 30) as f32
            }
        }));
        let stack = EmbeddingStack::new("m", layers).unwrap();
        let report = trajectory_sweep(&stack, &ann, &SweepConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.rows[0].rho.is_some());
        let failure = report.rows[2].failure.as_ref().expect("layer 3 fails");
        assert_eq!(failure.code, "E_DISCONNECTED");
    }

    #[test]
    fn trajectory_requires_pseudotime() {
        let (stack, _) = arc_stack(30);
        let ann = CellAnnotations::new((0..30).map(|i| format!("c{i}")).collect()).unwrap();
        assert!(matches!(
            trajectory_sweep(&stack, &ann, &SweepConfig::default()),
            Err(Error::Config(_))
        ));
    }

    fn small_perturbation() -> (EmbeddingStack, CellAnnotations, Vec<DEProfile>) {
        let sc = PerturbationScenario {
            n_cells_per_label: 40,
            n_labels: 8,
            n_genes: 120,
            ..Default::default()
        };
        let (stack, ann, counts) = gen_perturbation(&sc).unwrap();
        let de = crate::prep::de_profiles(&counts, &ann, &Default::default()).unwrap();
        (stack, ann, de)
    }

    #[test]
    fn perturbation_sweep_scores_every_layer() {
        let (stack, ann, de) = small_perturbation();
        let report = perturbation_sweep(&stack, &ann, &de, None, &SweepConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[0].rho.unwrap() > report.rows[1].rho.unwrap());
    }

    #[test]
    fn missing_profile_is_an_alignment_error() {
        let (stack, ann, de) = small_perturbation();
        let short = &de[1..];
        let err =
            perturbation_sweep(&stack, &ann, short, None, &SweepConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)), "{err}");
        assert!(err.to_string().contains(&de[0].perturbation));
        let cfg = SweepConfig {
            intersect_labels: true,
            ..Default::default()
        };
        let report = perturbation_sweep(&stack, &ann, short, None, &cfg).unwrap();
        assert!(report.rows.iter().all(|r| r.rho.is_some()));
    }

    #[test]
    fn unknown_condition_is_rejected() {
        let (stack, ann, de) = small_perturbation();
        assert!(
            perturbation_sweep(&stack, &ann, &de, Some("Rest"), &SweepConfig::default()).is_err()
        );
    }

    #[test]
    fn digest_ignores_jobs() {
        let a = SweepConfig::default();
        let b = SweepConfig {
            jobs: Some(3),
            ..Default::default()
        };
        assert_eq!(
            a.digest(Task::Trajectory, None),
            b.digest(Task::Trajectory, None)
        );
        assert_ne!(
            a.digest(Task::Trajectory, None),
            a.digest(Task::Perturbation, None)
        );
    }
}
