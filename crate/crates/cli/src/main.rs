//! `layerwise`: per-layer trajectory and perturbation scores for embedding
//! containers.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use layerwise::container::{
    read_container, read_counts, validate_container, write_container, write_counts, CellAnnotations,
};
use layerwise::diffusion::KernelKind;
use layerwise::neighbors::Symmetrization;
use layerwise::prep::{de_profiles, read_de_csv, write_de_csv, DEProfile, DeConfig};
use layerwise::stats::PValueMethod;
use layerwise::sweep::{
    check_claims, emit_report, perturbation_sweep, read_scores_csv, summarize, summary_json,
    trajectory_sweep, write_combined_svg, ClaimStatus, LayerScoreReport, SweepConfig, Task,
};
use layerwise::synth::{
    gen_perturbation, gen_trajectory, LayerKind, PerturbationScenario, TrajectoryScenario,
};
use layerwise::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_COMPUTATION: u8 = 2;
const EXIT_CLAIM_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "layerwise",
    version,
    about = "Layer-wise representation quality scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diffusion-pseudotime agreement with a reference pseudotime, per layer.
    Trajectory(TrajectoryArgs),
    /// Centroid similarity vs DE-profile similarity (RSA), per layer.
    Perturbation(PerturbationArgs),
    /// Peak, final layer and range of an existing scores table.
    Summarize(SummarizeArgs),
    /// Write a synthetic container with planted structure.
    Synth(SynthArgs),
    /// Check a container without loading every layer at once.
    Validate {
        #[arg(long)]
        container: PathBuf,
    },
    /// Recompute the headline numbers from the bundled result tables.
    ClaimsCheck {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Gauss,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum SymArg {
    Union,
    Mutual,
}

#[derive(Clone, Copy, ValueEnum)]
enum PArg {
    Asymptotic,
    Permutation,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    container: PathBuf,
    #[arg(long, default_value_t = 15)]
    k: usize,
    /// Diffusion components, trivial one included.
    #[arg(long = "n-dcs", default_value_t = 10)]
    n_dcs: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Gauss)]
    kernel: KernelArg,
    #[arg(long, value_enum, default_value_t = SymArg::Union)]
    symmetrize: SymArg,
    #[arg(long, value_enum, default_value_t = PArg::Asymptotic)]
    pvalue: PArg,
    #[arg(long = "n-perm", default_value_t = 1000)]
    n_perm: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layers evaluated at once (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> SweepConfig {
        let mut cfg = SweepConfig {
            k: self.k,
            symmetrize: match self.symmetrize {
                SymArg::Union => Symmetrization::Union,
                SymArg::Mutual => Symmetrization::Mutual,
            },
            pvalue: match self.pvalue {
                PArg::Asymptotic => PValueMethod::Asymptotic,
                PArg::Permutation => PValueMethod::Permutation,
            },
            n_perm: self.n_perm,
            seed: self.seed,
            jobs: self.jobs,
            ..Default::default()
        };
        cfg.diffusion.n_components = self.n_dcs;
        cfg.diffusion.kernel = match self.kernel {
            KernelArg::Gauss => KernelKind::Gauss,
            KernelArg::Binary => KernelKind::Binary,
        };
        cfg
    }
}

#[derive(Args)]
struct TrajectoryArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct PerturbationArgs {
    #[command(flatten)]
    common: Common,
    /// Raw counts (`counts.mtx` with `genes.txt` and `barcodes.txt` beside it).
    #[arg(
        long,
        conflicts_with = "de_profiles",
        required_unless_present = "de_profiles"
    )]
    counts: Option<PathBuf>,
    /// Precomputed `perturbation,gene,logfc` table.
    #[arg(long = "de-profiles")]
    de_profiles: Option<PathBuf>,
    #[arg(long, default_value = "non-targeting")]
    control: String,
    #[arg(long = "min-cells", default_value_t = 1)]
    min_cells: usize,
    /// Gene universe: genes expressed in at least this many labels.
    #[arg(long = "min-labels", default_value_t = 2)]
    min_labels: usize,
    #[arg(long, default_value_t = 1.0)]
    pseudocount: f64,
    /// Score only the labels present in both cells and DE profiles.
    #[arg(long = "intersect-labels")]
    intersect_labels: bool,
    /// Restrict to one condition; by default every condition runs separately.
    #[arg(long)]
    condition: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Trajectory,
    Perturbation,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Table with a `layer` column and one or more score columns.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskArg::Trajectory)]
    task: TaskArg,
}

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    kind: SynthKind,
}

#[derive(Subcommand)]
enum SynthKind {
    /// Noisy copies of a random cubic curve, one per noise level.
    Trajectory {
        #[arg(long = "n-cells", default_value_t = 2000)]
        n_cells: usize,
        #[arg(long, default_value_t = 32)]
        dims: usize,
        /// Comma-separated noise level per layer.
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.2,1.0")]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labelled cells with planted effects, plus raw counts.
    Perturbation {
        /// Labels including the control.
        #[arg(long = "n-labels", default_value_t = 20)]
        n_labels: usize,
        #[arg(long = "cells-per-label", default_value_t = 300)]
        cells_per_label: usize,
        #[arg(long = "n-genes", default_value_t = 500)]
        n_genes: usize,
        #[arg(long, default_value_t = 512)]
        dim: usize,
        /// Comma-separated layer kinds: `signal` or `scrambled`.
        #[arg(long, value_delimiter = ',', default_value = "signal,scrambled")]
        layers: Vec<String>,
        #[arg(long = "layer-noise", default_value_t = 0.5)]
        layer_noise: f64,
        #[arg(long, default_value = "non-targeting")]
        control: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error [{}]: {e}", e.code());
    ExitCode::from(if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_COMPUTATION
    })
}

fn print_summary(report: &LayerScoreReport) -> layerwise::Result<()> {
    let label = report.condition.as_deref().unwrap_or("all");
    match summarize(report) {
        Ok(s) => println!(
            "{label}: peak layer {} (depth {:.3}, rho {:.4}); final rho {}",
            s.peak_layer,
            s.peak_depth,
            s.peak_rho,
            s.final_rho
                .map_or_else(|| "NA".into(), |v| format!("{v:.4}"))
        ),
        Err(e) => println!("{label}: no summary ({e})"),
    }
    Ok(())
}

fn emit(report: &LayerScoreReport, out: &Path) -> layerwise::Result<()> {
    let summary = summarize(report).ok();
    emit_report(report, summary.as_ref(), out)?;
    print_summary(report)
}

fn run_trajectory(a: &TrajectoryArgs) -> layerwise::Result<()> {
    let (stack, ann) = read_container(&a.common.container)?;
    let report = trajectory_sweep(&stack, &ann, &a.common.config())?;
    emit(&report, &a.common.out)
}

fn mask_condition(ann: &CellAnnotations, condition: &str) -> layerwise::Result<CellAnnotations> {
    let labels = ann.perturbation().unwrap_or_default();
    let cond = ann.condition().unwrap_or_default();
    let masked = labels
        .iter()
        .zip(cond)
        .map(|(l, c)| l.clone().filter(|_| c.as_deref() == Some(condition)))
        .collect();
    ann.clone().with_perturbation(masked)
}

fn run_perturbation(a: &PerturbationArgs) -> layerwise::Result<()> {
    let (stack, ann) = read_container(&a.common.container)?;
    let mut cfg = a.common.config();
    cfg.control = a.control.clone();
    cfg.min_cells = a.min_cells;
    cfg.intersect_labels = a.intersect_labels;
    let de_cfg = DeConfig {
        control: a.control.clone(),
        pseudocount: a.pseudocount,
        min_labels: a.min_labels,
        min_genes: 0,
    };
    let counts = a.counts.as_deref().map(read_counts).transpose()?;
    let external = a.de_profiles.as_deref().map(read_de_csv).transpose()?;
    let profiles_for = |ann_c: &CellAnnotations| -> layerwise::Result<Vec<DEProfile>> {
        match (&external, &counts) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(c)) => de_profiles(c, ann_c, &de_cfg),
            (None, None) => Err(Error::Config("need --counts or --de-profiles".into())),
        }
    };

    let conditions = match &a.condition {
        Some(c) => vec![Some(c.clone())],
        None if ann.conditions().is_empty() => vec![None],
        None => ann.conditions().into_iter().map(Some).collect(),
    };
    let split = a.condition.is_none() && conditions.len() > 1;
    let mut reports = Vec::new();
    for cond in &conditions {
        let ann_c = match cond {
            Some(c) => mask_condition(&ann, c)?,
            None => ann.clone(),
        };
        let profiles = profiles_for(&ann_c)?;
        let report = perturbation_sweep(&stack, &ann, &profiles, cond.as_deref(), &cfg)?;
        let out = match (split, cond) {
            (true, Some(c)) => a.common.out.join(c),
            _ => a.common.out.clone(),
        };
        if external.is_none() {
            std::fs::create_dir_all(&out).map_err(|e| layerwise::Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_de_csv(&profiles, &out.join("de_profiles.csv"))?;
        }
        emit(&report, &out)?;
        reports.push(report);
    }
    if split {
        write_combined_svg(&reports, &a.common.out.join("curve.svg"))?;
    }
    Ok(())
}

fn run_summarize(a: &SummarizeArgs) -> layerwise::Result<()> {
    let task = match a.task {
        TaskArg::Trajectory => Task::Trajectory,
        TaskArg::Perturbation => Task::Perturbation,
    };
    for report in read_scores_csv(&a.scores, task)? {
        let summary = summarize(&report)?;
        print!("{}", summary_json(&report, Some(&summary)));
    }
    Ok(())
}

fn run_synth(a: &SynthArgs) -> layerwise::Result<()> {
    match &a.kind {
        SynthKind::Trajectory {
            n_cells,
            dims,
            noise,
            seed,
            out,
        } => {
            let sc = TrajectoryScenario {
                n_cells: *n_cells,
                dims: *dims,
                noise: noise.clone(),
                seed: *seed,
            };
            let (stack, ann) = gen_trajectory(&sc)?;
            write_container(&stack, &ann, out)?;
            println!(
                "wrote {} cells × {} layers to {}",
                stack.n_cells(),
                stack.n_layers(),
                out.display()
            );
        }
        SynthKind::Perturbation {
            n_labels,
            cells_per_label,
            n_genes,
            dim,
            layers,
            layer_noise,
            control,
            seed,
            out,
        } => {
            let layers = layers
                .iter()
                .map(|k| match k.as_str() {
                    "signal" => Ok(LayerKind::Signal {
                        dim: *dim,
                        noise: *layer_noise,
                    }),
                    "scrambled" => Ok(LayerKind::Scrambled { dim: *dim }),
                    other => Err(Error::Parameter(format!(
                        "unknown layer kind {other:?} (expected signal or scrambled)"
                    ))),
                })
                .collect::<layerwise::Result<Vec<_>>>()?;
            let sc = PerturbationScenario {
                n_cells_per_label: *cells_per_label,
                n_labels: *n_labels,
                n_genes: *n_genes,
                layers,
                control_label: control.clone(),
                seed: *seed,
                ..Default::default()
            };
            let (stack, ann, counts) = gen_perturbation(&sc)?;
            write_container(&stack, &ann, out)?;
            write_counts(&counts, out)?;
            println!(
                "wrote {} cells × {} layers and {} genes to {}",
                stack.n_cells(),
                stack.n_layers(),
                counts.n_genes(),
                out.display()
            );
        }
    }
    Ok(())
}

fn run_validate(container: &Path) -> ExitCode {
    let report = validate_container(container);
    for e in &report.entries {
        let status = if e.passed { "ok  " } else { "FAIL" };
        let code = e
            .code
            .as_deref()
            .map(|c| format!(" [{c}]"))
            .unwrap_or_default();
        println!("{status} {}{code}: {}", e.check, e.detail);
    }
    if report.is_valid() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn run_claims(out: Option<&Path>) -> ExitCode {
    let claims = match check_claims() {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    for c in &claims {
        let status = match c.status {
            ClaimStatus::Pass => "PASS",
            ClaimStatus::Fail => "FAIL",
            ClaimStatus::Flagged => "FLAG",
        };
        println!(
            "{status} {:<32} expected {:<18} observed {:<22} {}",
            c.id, c.expected, c.observed, c.description
        );
    }
    if let Some(dir) = out {
        let path = dir.join("claims.json");
        let json = serde_json::to_string_pretty(&claims).expect("claims serialize") + "\n";
        if let Err(e) = std::fs::create_dir_all(dir).and_then(|()| std::fs::write(&path, json)) {
            return fail(&Error::Io { path, source: e });
        }
    }
    if claims.iter().any(|c| c.status == ClaimStatus::Fail) {
        ExitCode::from(EXIT_CLAIM_MISMATCH)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Trajectory(a) => run_trajectory(a),
        Command::Perturbation(a) => run_perturbation(a),
        Command::Summarize(a) => run_summarize(a),
        Command::Synth(a) => run_synth(a),
        Command::Validate { container } => return run_validate(container),
        Command::ClaimsCheck { out } => return run_claims(out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
