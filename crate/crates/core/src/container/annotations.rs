use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const CELLS_HEADER: [&str; 5] = [
    "cell_id",
    "reference_pseudotime",
    "perturbation",
    "condition",
    "is_root",
];

const MISSING: &str = "NA";

/// Per-cell metadata paired row-by-row with an [`EmbeddingStack`](super::EmbeddingStack).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellAnnotations {
    cell_ids: Vec<String>,
    reference_pseudotime: Option<Vec<f64>>,
    perturbation: Option<Vec<Option<String>>>,
    condition: Option<Vec<Option<String>>>,
    root_cell: Option<String>,
}

impl CellAnnotations {
    pub fn new(cell_ids: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(cell_ids.len());
        for id in &cell_ids {
            if id.is_empty() || id == MISSING {
                return Err(Error::Annotation(format!("invalid cell id {id:?}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Annotation(format!("duplicate cell id {id:?}")));
            }
        }
        Ok(CellAnnotations {
            cell_ids,
            ..Default::default()
        })
    }

    pub fn with_pseudotime(mut self, t: Vec<f64>) -> Result<Self> {
        self.check_len("reference_pseudotime", t.len())?;
        if let Some((i, v)) = t
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Annotation(format!(
                "reference pseudotime of cell {} is {v}; must be finite and >= 0",
                self.cell_ids[i]
            )));
        }
        self.reference_pseudotime = Some(t);
        Ok(self)
    }

    pub fn with_perturbation(mut self, labels: Vec<Option<String>>) -> Result<Self> {
        self.check_len("perturbation", labels.len())?;
        self.perturbation = Some(labels);
        Ok(self)
    }

    pub fn with_condition(mut self, labels: Vec<Option<String>>) -> Result<Self> {
        self.check_len("condition", labels.len())?;
        self.condition = Some(labels);
        Ok(self)
    }

    pub fn with_root(mut self, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if !self.cell_ids.contains(&id) {
            return Err(Error::Annotation(format!(
                "root cell {id:?} is not a known cell id"
            )));
        }
        self.root_cell = Some(id);
        Ok(self)
    }

    fn check_len(&self, column: &str, len: usize) -> Result<()> {
        if len != self.cell_ids.len() {
            return Err(Error::Shape(format!(
                "{column} has {len} entries for {} cells",
                self.cell_ids.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_ids.is_empty()
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn reference_pseudotime(&self) -> Option<&[f64]> {
        self.reference_pseudotime.as_deref()
    }

    pub fn perturbation(&self) -> Option<&[Option<String>]> {
        self.perturbation.as_deref()
    }

    pub fn condition(&self) -> Option<&[Option<String>]> {
        self.condition.as_deref()
    }

    pub fn root_cell(&self) -> Option<&str> {
        self.root_cell.as_deref()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.cell_ids.iter().position(|c| c == id)
    }

    pub(crate) fn id_index(&self) -> HashMap<&str, usize> {
        self.cell_ids
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect()
    }

    /// Distinct condition labels in first-appearance order.
    pub fn conditions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if let Some(c) = &self.condition {
            for v in c.iter().flatten() {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    /// Subset of rows, in the given order. The root is kept only if selected.
    pub fn select(&self, rows: &[usize]) -> Result<CellAnnotations> {
        let pick = |v: &Vec<Option<String>>| rows.iter().map(|&r| v[r].clone()).collect();
        let ids = rows.iter().map(|&r| self.cell_ids[r].clone()).collect();
        let mut out = CellAnnotations::new(ids)?;
        out.reference_pseudotime = self
            .reference_pseudotime
            .as_ref()
            .map(|t| rows.iter().map(|&r| t[r]).collect());
        out.perturbation = self.perturbation.as_ref().map(pick);
        out.condition = self.condition.as_ref().map(pick);
        out.root_cell = self
            .root_cell
            .clone()
            .filter(|id| out.cell_ids.contains(id));
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(CELLS_HEADER).map_err(|e| csv_err(path, e))?;
        for (i, id) in self.cell_ids.iter().enumerate() {
            let t = match &self.reference_pseudotime {
                // `{:?}` on f64 prints the shortest string that round-trips.
                Some(t) => format!("{:?}", t[i]),
                None => MISSING.to_string(),
            };
            let label = |col: &Option<Vec<Option<String>>>| {
                col.as_ref()
                    .and_then(|v| v[i].clone())
                    .unwrap_or_else(|| MISSING.to_string())
            };
            let root = if self.root_cell.as_deref() == Some(id) {
                "1"
            } else {
                "0"
            };
            w.write_record([
                id.as_str(),
                &t,
                &label(&self.perturbation),
                &label(&self.condition),
                root,
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<CellAnnotations> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != CELLS_HEADER {
            return Err(Error::Parse {
                what: path.display().to_string(),
                msg: format!("expected header {CELLS_HEADER:?}, found {header:?}"),
            });
        }
        let mut ids = Vec::new();
        let mut times = Vec::new();
        let mut perts = Vec::new();
        let mut conds = Vec::new();
        let mut roots = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let bad = |msg: String| Error::Parse {
                what: format!("{} row {}", path.display(), line + 1),
                msg,
            };
            let id = rec[0].to_string();
            let t = match &rec[1] {
                MISSING => None,
                s => Some(
                    s.parse::<f64>()
                        .map_err(|e| bad(format!("pseudotime {s:?}: {e}")))?,
                ),
            };
            let opt = |s: &str| (s != MISSING && !s.is_empty()).then(|| s.to_string());
            let is_root = match &rec[4] {
                "1" | "true" => true,
                "0" | "false" | MISSING | "" => false,
                s => return Err(bad(format!("is_root must be 0/1, found {s:?}"))),
            };
            if is_root {
                roots.push(id.clone());
            }
            ids.push(id);
            times.push(t);
            perts.push(opt(&rec[2]));
            conds.push(opt(&rec[3]));
        }
        let mut ann = CellAnnotations::new(ids)?;
        let n_time = times.iter().filter(|t| t.is_some()).count();
        if n_time == ann.len() && n_time > 0 {
            ann = ann.with_pseudotime(times.into_iter().flatten().collect())?;
        } else if n_time > 0 {
            return Err(Error::Annotation(format!(
                "reference_pseudotime is present for {n_time} of {} cells; \
                 it must be given for all cells or none",
                ann.len()
            )));
        }
        if perts.iter().any(Option::is_some) {
            ann = ann.with_perturbation(perts)?;
        }
        if conds.iter().any(Option::is_some) {
            ann = ann.with_condition(conds)?;
        }
        match roots.as_slice() {
            [] => {}
            [one] => ann = ann.with_root(one.clone())?,
            many => {
                return Err(Error::Annotation(format!(
                    "{} cells are flagged is_root; at most one allowed",
                    many.len()
                )))
            }
        }
        Ok(ann)
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let msg = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        _ => Error::Parse {
            what: path.display().to_string(),
            msg,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = CellAnnotations::new(vec!["a".into(), "a".into()]).unwrap_err();
        assert!(matches!(err, Error::Annotation(_)));
    }

    #[test]
    fn root_must_exist() {
        let ann = CellAnnotations::new(ids(3)).unwrap();
        assert!(ann.clone().with_root("c2").is_ok());
        assert!(ann.with_root("c9").is_err());
    }

    #[test]
    fn column_length_checked() {
        let ann = CellAnnotations::new(ids(3)).unwrap();
        assert!(matches!(
            ann.with_pseudotime(vec![0.0, 1.0]).unwrap_err(),
            Error::Shape(_)
        ));
    }

    #[test]
    fn csv_round_trip_with_missing_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cells.csv");
        let ann = CellAnnotations::new(ids(3))
            .unwrap()
            .with_pseudotime(vec![0.1, 0.0, 0.30000000000000004])
            .unwrap()
            .with_perturbation(vec![Some("A".into()), None, Some("B, C".into())])
            .unwrap()
            .with_root("c1")
            .unwrap();
        ann.write_csv(&path).unwrap();
        let back = CellAnnotations::read_csv(&path).unwrap();
        assert_eq!(back, ann);
        assert!(back.condition().is_none());
    }
}
