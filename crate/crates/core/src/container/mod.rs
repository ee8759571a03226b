//! On-disk embedding container and the in-memory data model.
//!
//! A container is a directory:
//!
//! ```text
//! manifest.json      format tags, n_cells, per-layer {index, dim, file, fnv1a64}
//! cells.csv          cell_id,reference_pseudotime,perturbation,condition,is_root
//! layer_001.f32      n_cells × d_1 little-endian f32, row-major
//! ...
//! layer_LLL.f32
//! ```
//!
//! Row `i` of every layer file is the cell named on row `i` of `cells.csv`.

pub(crate) mod annotations;
mod counts;
mod io;
mod stack;

pub use annotations::CellAnnotations;
pub use counts::{read_counts, write_counts, CountMatrix};
pub use io::{
    read_container, validate_container, write_container, CheckEntry, LayerEntry, Manifest,
    ValidationReport, FORMAT_VERSION,
};
pub use stack::EmbeddingStack;

/// 64-bit FNV-1a digest, hex encoded (16 lowercase digits).
pub fn fnv1a64_hex(bytes: &[u8]) -> String {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_vectors() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a64_hex(b"a"), "af63dc4c8601ec8c");
        assert_eq!(fnv1a64_hex(b"foobar"), "85944171f73967e8");
    }
}
