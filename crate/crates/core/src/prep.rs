//! Count preprocessing and pseudobulk log-fold-change profiles.
//!
//! The differential-expression model is deliberately small: median-of-ratios
//! size factors and pseudocounted log2 ratios against a control label.
//! Externally computed profiles can be loaded with [`read_de_csv`] instead.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::container::annotations::csv_err;
use crate::container::{CellAnnotations, CountMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_CONTROL: &str = "non-targeting";
pub const DEFAULT_SCALE: f64 = 1e4;
pub const DEFAULT_PSEUDOCOUNT: f64 = 1.0;
pub const DEFAULT_MIN_LABELS: usize = 2;

/// Keeps cells with at least `min_genes` nonzero genes.
pub fn filter_cells(counts: &CountMatrix, min_genes: usize) -> Result<CountMatrix> {
    let keep: Vec<usize> = (0..counts.n_cells())
        .filter(|&j| counts.cell_nnz(j) >= min_genes)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no cell has at least {min_genes} expressed genes"
        )));
    }
    Ok(counts.select_cells(&keep))
}

/// Sparse `ln(1 + scale * x / total)` values with the sparsity of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCounts {
    genes: Vec<String>,
    cells: Vec<String>,
    columns: Vec<Vec<(usize, f64)>>,
}

impl NormalizedCounts {
    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    /// Nonzero `(gene index, value)` entries of cell `j`.
    pub fn cell(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    /// Dense gene × cell matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.genes.len(), self.cells.len()));
        for (j, col) in self.columns.iter().enumerate() {
            for &(g, v) in col {
                out[[g, j]] = v;
            }
        }
        out
    }
}

pub fn library_normalize_log1p(counts: &CountMatrix, scale: f64) -> Result<NormalizedCounts> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Parameter(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let columns = (0..counts.n_cells())
        .map(|j| {
            let total = counts.cell_total(j);
            if total == 0 {
                return Err(Error::ZeroTotal(counts.cells()[j].clone()));
            }
            let total = total as f64;
            Ok(counts
                .cell(j)
                .map(|(g, v)| (g, (scale * f64::from(v) / total).ln_1p()))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(NormalizedCounts {
        genes: counts.genes().to_vec(),
        cells: counts.cells().to_vec(),
        columns,
    })
}

/// Summed raw counts per label, `genes × labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudobulkTable {
    pub labels: Vec<String>,
    pub genes: Vec<String>,
    pub values: Array2<f64>,
}

impl PseudobulkTable {
    pub fn new(labels: Vec<String>, genes: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (genes.len(), labels.len()) {
            return Err(Error::Shape(format!(
                "pseudobulk values are {:?}, expected ({}, {})",
                values.dim(),
                genes.len(),
                labels.len()
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter(
                "pseudobulk values must be finite and >= 0".into(),
            ));
        }
        Ok(PseudobulkTable {
            labels,
            genes,
            values,
        })
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Keeps genes with a nonzero sum in at least `min_labels` labels.
    pub fn restrict_genes(&self, min_labels: usize) -> Result<PseudobulkTable> {
        let keep: Vec<usize> = (0..self.genes.len())
            .filter(|&g| self.values.row(g).iter().filter(|&&v| v > 0.0).count() >= min_labels)
            .collect();
        if keep.is_empty() {
            return Err(Error::EmptyResult(format!(
                "no gene is expressed in at least {min_labels} labels"
            )));
        }
        Ok(PseudobulkTable {
            labels: self.labels.clone(),
            genes: keep.iter().map(|&g| self.genes[g].clone()).collect(),
            values: self.values.select(ndarray::Axis(0), &keep),
        })
    }
}

/// Sums counts over the cells of each perturbation label.
///
/// Count columns are matched to annotations by cell id. Cells without a label
/// or without an annotation row are excluded. Labels are ordered by first
/// appearance in the annotations; a label none of whose cells is present in
/// `counts` is an error.
pub fn pseudobulk(counts: &CountMatrix, ann: &CellAnnotations) -> Result<PseudobulkTable> {
    let per_cell = ann
        .perturbation()
        .ok_or_else(|| Error::Annotation("annotations carry no perturbation column".into()))?;
    let mut labels: Vec<String> = Vec::new();
    let mut label_of: HashMap<&str, usize> = HashMap::new();
    for l in per_cell.iter().flatten() {
        if !label_of.contains_key(l.as_str()) {
            label_of.insert(l, labels.len());
            labels.push(l.clone());
        }
    }
    let row_of = ann.id_index();
    let mut values = Array2::zeros((counts.n_genes(), labels.len()));
    let mut n_cells = vec![0usize; labels.len()];
    for (j, id) in counts.cells().iter().enumerate() {
        let Some(label) = row_of
            .get(id.as_str())
            .and_then(|&r| per_cell[r].as_deref())
        else {
            continue;
        };
        let p = label_of[label];
        n_cells[p] += 1;
        for (g, v) in counts.cell(j) {
            values[[g, p]] += f64::from(v);
        }
    }
    let empty: Vec<String> = labels
        .iter()
        .zip(&n_cells)
        .filter(|(_, &c)| c == 0)
        .map(|(l, _)| l.clone())
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyLabels(empty));
    }
    PseudobulkTable::new(labels, counts.genes().to_vec(), values)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median-of-ratios size factor per label, over genes positive in every label.
pub fn size_factors(pb: &PseudobulkTable) -> Result<Vec<f64>> {
    let n_labels = pb.labels.len();
    if n_labels == 0 {
        return Err(Error::EmptyResult("pseudobulk table has no labels".into()));
    }
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); n_labels];
    for row in pb.values.rows() {
        if row.iter().any(|&v| v <= 0.0) {
            continue;
        }
        // Running mean: exact when every entry is equal, so identical
        // columns get size factors of exactly 1.
        let log_geo = row
            .iter()
            .enumerate()
            .fold(0.0, |m, (i, v)| m + (v.ln() - m) / (i + 1) as f64);
        for (r, &v) in ratios.iter_mut().zip(row.iter()) {
            r.push((v.ln() - log_geo).exp());
        }
    }
    if ratios[0].is_empty() {
        return Err(Error::NoCommonGene);
    }
    Ok(ratios.iter_mut().map(|r| median(r)).collect())
}

/// Log2 fold-change profile of one perturbation against the control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEProfile {
    pub perturbation: String,
    pub genes: Vec<String>,
    pub logfc: Vec<f64>,
}

/// `log2((pb_p / sf_p + c) / (pb_ctrl / sf_ctrl + c))` per gene, for every
/// label except the control, in table order. Evaluated as a difference of
/// logs so that swapping the two labels negates the result exactly.
pub fn log_fold_change(
    pb: &PseudobulkTable,
    sf: &[f64],
    control: &str,
    pseudocount: f64,
) -> Result<Vec<DEProfile>> {
    if !(pseudocount.is_finite() && pseudocount > 0.0) {
        return Err(Error::Parameter(format!(
            "pseudocount must be positive, got {pseudocount}"
        )));
    }
    if sf.len() != pb.labels.len() {
        return Err(Error::Shape(format!(
            "{} size factors for {} labels",
            sf.len(),
            pb.labels.len()
        )));
    }
    if let Some(s) = sf.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Parameter(format!("size factor {s} is not positive")));
    }
    let c = pb
        .label_index(control)
        .ok_or_else(|| Error::Config(format!("control label {control:?} not present")))?;
    let ctrl: Vec<f64> = pb
        .values
        .column(c)
        .iter()
        .map(|v| (v / sf[c] + pseudocount).log2())
        .collect();
    Ok((0..pb.labels.len())
        .filter(|&p| p != c)
        .map(|p| DEProfile {
            perturbation: pb.labels[p].clone(),
            genes: pb.genes.clone(),
            logfc: pb
                .values
                .column(p)
                .iter()
                .zip(&ctrl)
                .map(|(v, base)| (v / sf[p] + pseudocount).log2() - base)
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub control: String,
    pub pseudocount: f64,
    pub min_labels: usize,
    pub min_genes: usize,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            control: DEFAULT_CONTROL.into(),
            pseudocount: DEFAULT_PSEUDOCOUNT,
            min_labels: DEFAULT_MIN_LABELS,
            min_genes: 0,
        }
    }
}

/// Filter, pseudobulk, restrict the gene universe, then log fold changes.
pub fn de_profiles(
    counts: &CountMatrix,
    ann: &CellAnnotations,
    cfg: &DeConfig,
) -> Result<Vec<DEProfile>> {
    let filtered = filter_cells(counts, cfg.min_genes)?;
    let pb = pseudobulk(&filtered, ann)?.restrict_genes(cfg.min_labels)?;
    let sf = size_factors(&pb)?;
    log_fold_change(&pb, &sf, &cfg.control, cfg.pseudocount)
}

pub fn write_de_csv(profiles: &[DEProfile], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["perturbation", "gene", "logfc"])
        .map_err(|e| csv_err(path, e))?;
    for p in profiles {
        for (g, v) in p.genes.iter().zip(&p.logfc) {
            w.write_record([p.perturbation.as_str(), g.as_str(), &format!("{v:?}")])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `perturbation,gene,logfc` rows. Profiles keep first-appearance
/// order; every profile is reordered to the first profile's gene order and
/// must cover exactly the same genes.
pub fn read_de_csv(path: &Path) -> Result<Vec<DEProfile>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                what: path.display().to_string(),
                msg: format!("missing column {name:?}"),
            })
    };
    let (cp, cg, cv) = (col("perturbation")?, col("gene")?, col("logfc")?);
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parse_err = |msg: String| Error::Parse {
            what: format!("{} row {}", path.display(), line + 2),
            msg,
        };
        let value: f64 = rec[cv]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("bad logfc {:?}", &rec[cv])))?;
        if !value.is_finite() {
            return Err(parse_err(format!("non-finite logfc {value}")));
        }
        let pert = rec[cp].to_string();
        if !rows.contains_key(&pert) {
            order.push(pert.clone());
        }
        rows.entry(pert)
            .or_default()
            .push((rec[cg].to_string(), value));
    }
    let Some(first) = order.first() else {
        return Err(Error::EmptyResult(format!(
            "{} has no DE rows",
            path.display()
        )));
    };
    let genes: Vec<String> = rows[first].iter().map(|(g, _)| g.clone()).collect();
    let position: HashMap<&str, usize> = genes
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    if position.len() != genes.len() {
        return Err(Error::Alignment(format!(
            "duplicate gene in profile {first:?}"
        )));
    }
    order
        .iter()
        .map(|p| {
            let entries = &rows[p];
            let mut logfc = vec![f64::NAN; genes.len()];
            for (g, v) in entries {
                let i = *position.get(g.as_str()).ok_or_else(|| {
                    Error::Alignment(format!(
                        "profile {p:?} has gene {g:?} absent from {first:?}"
                    ))
                })?;
                if !logfc[i].is_nan() {
                    return Err(Error::Alignment(format!(
                        "profile {p:?} repeats gene {g:?}"
                    )));
                }
                logfc[i] = *v;
            }
            if entries.len() != genes.len() {
                return Err(Error::Alignment(format!(
                    "profile {p:?} covers {} of {} genes",
                    entries.len(),
                    genes.len()
                )));
            }
            Ok(DEProfile {
                perturbation: p.clone(),
                genes: genes.clone(),
                logfc,
            })
        })
        .collect()
}
