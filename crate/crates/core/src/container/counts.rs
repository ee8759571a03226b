use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MTX_HEADER: &str = "%%MatrixMarket matrix coordinate integer general";

/// Sparse gene × cell raw counts, stored column-compressed by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    genes: Vec<String>,
    cells: Vec<String>,
    col_ptr: Vec<usize>,
    gene_idx: Vec<usize>,
    counts: Vec<u32>,
}

fn check_unique(kind: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Annotation(format!("duplicate {kind} id {id:?}")));
        }
    }
    Ok(())
}

impl CountMatrix {
    /// Builds from `(gene, cell, count)` triplets (0-based). Zero counts are
    /// dropped; a repeated coordinate is an error.
    pub fn from_triplets(
        genes: Vec<String>,
        cells: Vec<String>,
        triplets: impl IntoIterator<Item = (usize, usize, u32)>,
    ) -> Result<Self> {
        check_unique("gene", &genes)?;
        check_unique("cell", &cells)?;
        let mut entries: Vec<(usize, usize, u32)> = Vec::new();
        for (g, c, v) in triplets {
            if g >= genes.len() || c >= cells.len() {
                return Err(Error::Shape(format!(
                    "entry ({g}, {c}) outside {} genes × {} cells",
                    genes.len(),
                    cells.len()
                )));
            }
            if v > 0 {
                entries.push((c, g, v));
            }
        }
        entries.sort_unstable();
        if let Some(w) = entries
            .windows(2)
            .find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1)
        {
            return Err(Error::Shape(format!(
                "duplicate entry for gene {} in cell {}",
                genes[w[0].1], cells[w[0].0]
            )));
        }
        let mut col_ptr = vec![0usize; cells.len() + 1];
        for &(c, _, _) in &entries {
            col_ptr[c + 1] += 1;
        }
        for j in 0..cells.len() {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(CountMatrix {
            genes,
            cells,
            col_ptr,
            gene_idx: entries.iter().map(|e| e.1).collect(),
            counts: entries.iter().map(|e| e.2).collect(),
        })
    }

    /// Dense gene × cell input.
    pub fn from_dense(genes: Vec<String>, cells: Vec<String>, dense: &Array2<u32>) -> Result<Self> {
        if dense.dim() != (genes.len(), cells.len()) {
            return Err(Error::Shape(format!(
                "dense counts are {:?}, ids give ({}, {})",
                dense.dim(),
                genes.len(),
                cells.len()
            )));
        }
        let triplets = dense
            .indexed_iter()
            .map(|((g, c), &v)| (g, c, v))
            .collect::<Vec<_>>();
        Self::from_triplets(genes, cells, triplets)
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    /// Nonzero `(gene index, count)` entries of cell `j`, ascending by gene.
    pub fn cell(&self, j: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        self.gene_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.counts[range].iter().copied())
    }

    pub fn cell_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    pub fn cell_total(&self, j: usize) -> u64 {
        self.cell(j).map(|(_, v)| u64::from(v)).sum()
    }

    /// Keeps cells `cols`, in that order. Genes are unchanged.
    pub fn select_cells(&self, cols: &[usize]) -> CountMatrix {
        let mut col_ptr = Vec::with_capacity(cols.len() + 1);
        col_ptr.push(0);
        let mut gene_idx = Vec::new();
        let mut counts = Vec::new();
        for &j in cols {
            for (g, v) in self.cell(j) {
                gene_idx.push(g);
                counts.push(v);
            }
            col_ptr.push(gene_idx.len());
        }
        CountMatrix {
            genes: self.genes.clone(),
            cells: cols.iter().map(|&j| self.cells[j].clone()).collect(),
            col_ptr,
            gene_idx,
            counts,
        }
    }

    pub fn to_dense(&self) -> Array2<u32> {
        let mut out = Array2::zeros((self.n_genes(), self.n_cells()));
        for j in 0..self.n_cells() {
            for (g, v) in self.cell(j) {
                out[[g, j]] = v;
            }
        }
        out
    }
}

fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Reads `counts.mtx` plus the `genes.txt` and `barcodes.txt` sidecars that
/// sit next to it.
pub fn read_counts(mtx: &Path) -> Result<CountMatrix> {
    let dir = mtx.parent().unwrap_or_else(|| Path::new("."));
    let genes = read_ids(&dir.join("genes.txt"))?;
    let cells = read_ids(&dir.join("barcodes.txt"))?;
    let text = fs::read_to_string(mtx).map_err(|e| Error::io(mtx, e))?;
    let bad = |line: usize, msg: String| Error::Parse {
        what: format!("{}:{}", mtx.display(), line + 1),
        msg,
    };

    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().eq_ignore_ascii_case(MTX_HEADER) => {}
        Some((i, h)) => return Err(bad(i, format!("expected {MTX_HEADER:?}, found {h:?}"))),
        None => return Err(bad(0, "empty file".into())),
    }
    let mut body = lines.filter(|(_, l)| !l.starts_with('%') && !l.trim().is_empty());
    let (i, size) = body
        .next()
        .ok_or_else(|| bad(1, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| bad(i, format!("{t:?}: {e}"))))
        .collect::<Result<_>>()?;
    let [n_rows, n_cols, nnz] = dims[..] else {
        return Err(bad(
            i,
            format!("size line needs 3 integers, found {size:?}"),
        ));
    };
    if n_rows != genes.len() || n_cols != cells.len() {
        return Err(Error::Shape(format!(
            "{} declares {n_rows} × {n_cols} but sidecars list {} genes and {} barcodes",
            mtx.display(),
            genes.len(),
            cells.len()
        )));
    }
    let mut triplets = Vec::with_capacity(nnz);
    for (i, line) in body {
        let mut it = line.split_whitespace();
        let mut field = |name: &str| -> Result<u64> {
            let t = it.next().ok_or_else(|| bad(i, format!("missing {name}")))?;
            t.parse().map_err(|e| bad(i, format!("{name} {t:?}: {e}")))
        };
        let (g, c, v) = (field("row")?, field("column")?, field("value")?);
        if g == 0 || c == 0 {
            return Err(bad(i, "coordinates are 1-based".into()));
        }
        let v = u32::try_from(v).map_err(|_| bad(i, format!("count {v} overflows u32")))?;
        triplets.push((g as usize - 1, c as usize - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::Shape(format!(
            "{} declares {nnz} entries, found {}",
            mtx.display(),
            triplets.len()
        )));
    }
    CountMatrix::from_triplets(genes, cells, triplets)
}

/// Writes `counts.mtx`, `genes.txt` and `barcodes.txt` into `dir`.
pub fn write_counts(counts: &CountMatrix, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut mtx = String::new();
    writeln!(mtx, "{MTX_HEADER}").unwrap();
    writeln!(
        mtx,
        "{} {} {}",
        counts.n_genes(),
        counts.n_cells(),
        counts.nnz()
    )
    .unwrap();
    for j in 0..counts.n_cells() {
        for (g, v) in counts.cell(j) {
            writeln!(mtx, "{} {} {}", g + 1, j + 1, v).unwrap();
        }
    }
    let put = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    put("counts.mtx", mtx)?;
    put(
        "genes.txt",
        counts.genes.iter().map(|g| format!("{g}\n")).collect(),
    )?;
    put(
        "barcodes.txt",
        counts.cells.iter().map(|c| format!("{c}\n")).collect(),
    )?;
    Ok(())
}
