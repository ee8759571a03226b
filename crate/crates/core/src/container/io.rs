use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stack::check_finite;
use super::{fnv1a64_hex, CellAnnotations, EmbeddingStack};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const CELLS: &str = "cells.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    /// 1-based layer index.
    pub index: usize,
    pub dim: usize,
    pub file: String,
    /// Hex-encoded FNV-1a 64 of the layer file bytes.
    pub fnv1a64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model_name: String,
    pub n_cells: usize,
    pub layers: Vec<LayerEntry>,
    pub dtype: String,
    pub endianness: String,
    pub layout: String,
}

impl Manifest {
    pub fn dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.dim).collect()
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "unsupported format_version {}",
                self.format_version
            ));
        }
        if self.dtype != "f32" {
            return bad(format!("dtype {:?} (only \"f32\" supported)", self.dtype));
        }
        if self.endianness != "little" {
            return bad(format!(
                "endianness {:?} (only \"little\")",
                self.endianness
            ));
        }
        if self.layout != "row-major" {
            return bad(format!("layout {:?} (only \"row-major\")", self.layout));
        }
        if self.layers.is_empty() {
            return bad("no layers listed".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.index != i + 1 {
                return bad(format!("layer entry {} has index {}", i + 1, l.index));
            }
            if l.dim == 0 {
                return bad(format!("layer {} has dim 0", l.index));
            }
            if l.file.contains(['/', '\\']) {
                return bad(format!("layer file {:?} must be a bare file name", l.file));
            }
        }
        Ok(())
    }
}

pub(crate) fn layer_file_name(index: usize) -> String {
    format!("layer_{index:03}.f32")
}

fn encode_layer(layer: &Array2<f32>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(layer.len() * 4);
    for v in layer.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Writes `stack` and `ann` as a container directory (created if absent).
pub fn write_container(stack: &EmbeddingStack, ann: &CellAnnotations, dir: &Path) -> Result<()> {
    if ann.len() != stack.n_cells() {
        return Err(Error::Shape(format!(
            "stack has {} cells but annotations have {} rows",
            stack.n_cells(),
            ann.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(stack.n_layers());
    for (i, layer) in stack.layers().iter().enumerate() {
        let file = layer_file_name(i + 1);
        let bytes = encode_layer(layer);
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(LayerEntry {
            index: i + 1,
            dim: layer.ncols(),
            file,
            fnv1a64: fnv1a64_hex(&bytes),
        });
    }
    ann.write_csv(&dir.join(CELLS))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model_name: stack.model_name().to_string(),
        n_cells: stack.n_cells(),
        layers: entries,
        dtype: "f32".into(),
        endianness: "little".into(),
        layout: "row-major".into(),
    };
    let path = dir.join(MANIFEST);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    manifest.check()?;
    Ok(manifest)
}

fn load_layer(dir: &Path, n_cells: usize, entry: &LayerEntry) -> Result<Array2<f32>> {
    let path: PathBuf = dir.join(&entry.file);
    if !path.is_file() {
        return Err(Error::MissingLayerFile(path));
    }
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = (n_cells * entry.dim * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::LayerSize {
            file: entry.file.clone(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let actual = fnv1a64_hex(&bytes);
    if !actual.eq_ignore_ascii_case(&entry.fnv1a64) {
        return Err(Error::Checksum {
            file: entry.file.clone(),
            expected: entry.fnv1a64.clone(),
            actual,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let m = Array2::from_shape_vec((n_cells, entry.dim), values).expect("size checked");
    check_finite(entry.index, m.view())?;
    Ok(m)
}

fn load_annotations(dir: &Path, n_cells: usize) -> Result<CellAnnotations> {
    let ann = CellAnnotations::read_csv(&dir.join(CELLS))?;
    if ann.len() != n_cells {
        return Err(Error::Shape(format!(
            "{CELLS} has {} rows, manifest declares {n_cells} cells",
            ann.len()
        )));
    }
    Ok(ann)
}

/// Loads and fully validates a container. Layer files are read in parallel.
pub fn read_container(dir: &Path) -> Result<(EmbeddingStack, CellAnnotations)> {
    let manifest = load_manifest(dir)?;
    let layers = manifest
        .layers
        .par_iter()
        .map(|entry| load_layer(dir, manifest.n_cells, entry))
        .collect::<Result<Vec<_>>>()?;
    let ann = load_annotations(dir, manifest.n_cells)?;
    let stack = EmbeddingStack::new(manifest.model_name, layers)?;
    Ok((stack, ann))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub check: String,
    pub passed: bool,
    pub code: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn failures(&self) -> Vec<&CheckEntry> {
        self.entries.iter().filter(|e| !e.passed).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    fn record<T>(&mut self, check: impl Into<String>, r: &Result<T>, ok_detail: String) {
        let (passed, code, detail) = match r {
            Ok(_) => (true, None, ok_detail),
            Err(e) => (false, Some(e.code().to_string()), e.to_string()),
        };
        self.entries.push(CheckEntry {
            check: check.into(),
            passed,
            code,
            detail,
        });
    }
}

/// Checks every container invariant, one layer file in memory at a time.
/// Failures become report entries rather than errors.
pub fn validate_container(dir: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let manifest = load_manifest(dir);
    report.record(
        MANIFEST,
        &manifest,
        "format tags and layer list valid".into(),
    );
    let Ok(manifest) = manifest else {
        return report;
    };
    for entry in &manifest.layers {
        let loaded = load_layer(dir, manifest.n_cells, entry).map(drop);
        let loaded = match loaded {
            Err(Error::LayerSize {
                file,
                expected,
                actual,
            }) if manifest.n_cells > 0 && actual % (4 * manifest.n_cells as u64) == 0 => {
                Err(Error::Shape(format!(
                    "{file}: manifest dim {} but file holds n_cells × {} floats \
                     ({actual} bytes, expected {expected})",
                    entry.dim,
                    actual / (4 * manifest.n_cells as u64)
                )))
            }
            other => other,
        };
        report.record(
            format!("layer {}", entry.index),
            &loaded,
            format!("{} × {} finite, checksum ok", manifest.n_cells, entry.dim),
        );
    }
    let ann = load_annotations(dir, manifest.n_cells);
    report.record(CELLS, &ann, format!("{} unique cells", manifest.n_cells));
    report
}
