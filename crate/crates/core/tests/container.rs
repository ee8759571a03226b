//! Container round trips and corruption handling through the public API.

use std::fs;
use std::path::Path;

use layerwise::container::{
    read_container, read_counts, validate_container, write_container, write_counts,
    CellAnnotations, CountMatrix, EmbeddingStack,
};
use layerwise::Error;
use ndarray::Array2;
use proptest::prelude::*;

fn awkward_floats() -> Vec<f32> {
    vec![
        0.0,
        -0.0,
        1.0,
        -1.5,
        f32::MIN_POSITIVE,
        f32::MIN_POSITIVE / 8.0, // subnormal
        f32::MAX,
        f32::MIN,
        f32::EPSILON,
        std::f32::consts::PI,
        1e-30,
        -7.25e12,
    ]
}

fn sample() -> (EmbeddingStack, CellAnnotations) {
    let vals = awkward_floats();
    let l1 = Array2::from_shape_fn((4, 3), |(i, j)| vals[i * 3 + j]);
    let l2 = Array2::from_shape_fn((4, 5), |(i, j)| (i as f32 + 0.1) * (j as f32 - 2.3));
    let stack = EmbeddingStack::new("toy model", vec![l1, l2]).unwrap();
    let ann = CellAnnotations::new(["a", "b", "c,d", "e"].map(String::from).to_vec())
        .unwrap()
        .with_pseudotime(vec![0.0, 0.5, 0.25, 1.0])
        .unwrap()
        .with_perturbation(vec![
            Some("x".into()),
            None,
            Some("y".into()),
            Some("x".into()),
        ])
        .unwrap()
        .with_condition(vec![Some("Rest".into()); 4])
        .unwrap()
        .with_root("a")
        .unwrap();
    (stack, ann)
}

fn bits(stack: &EmbeddingStack) -> Vec<Vec<u32>> {
    stack
        .layers()
        .iter()
        .map(|l| l.iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn write_validate_read_is_bit_exact() {
    let (stack, ann) = sample();
    let dir = tempfile::tempdir().unwrap();
    write_container(&stack, &ann, dir.path()).unwrap();
    let report = validate_container(dir.path());
    assert!(report.is_valid(), "{:?}", report.failures());
    let (back, back_ann) = read_container(dir.path()).unwrap();
    assert_eq!(bits(&back), bits(&stack));
    assert_eq!(back.model_name(), "toy model");
    assert_eq!(back_ann, ann);
}

#[test]
fn corrupted_byte_is_a_checksum_error() {
    let (stack, ann) = sample();
    let dir = tempfile::tempdir().unwrap();
    write_container(&stack, &ann, dir.path()).unwrap();
    let path = dir.path().join("layer_002.f32");
    let mut bytes = fs::read(&path).unwrap();
    bytes[13] ^= 0x01;
    fs::write(&path, bytes).unwrap();

    let report = validate_container(dir.path());
    let failures = report.failures();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].code.as_deref(), Some("E_CHECKSUM"));
    assert!(matches!(
        read_container(dir.path()),
        Err(Error::Checksum { .. })
    ));
}

#[test]
fn truncated_and_missing_layers() {
    let (stack, ann) = sample();
    let dir = tempfile::tempdir().unwrap();
    write_container(&stack, &ann, dir.path()).unwrap();
    let path = dir.path().join("layer_001.f32");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(
        read_container(dir.path()),
        Err(Error::LayerSize { .. })
    ));
    fs::remove_file(&path).unwrap();
    assert!(matches!(
        read_container(dir.path()),
        Err(Error::MissingLayerFile(_))
    ));
    assert!(!validate_container(dir.path()).is_valid());
}

#[test]
fn manifest_dim_mismatch_is_reported() {
    let (stack, ann) = sample();
    let dir = tempfile::tempdir().unwrap();
    write_container(&stack, &ann, dir.path()).unwrap();
    let mpath = dir.path().join("manifest.json");
    let text = fs::read_to_string(&mpath)
        .unwrap()
        .replace("\"dim\": 5", "\"dim\": 6");
    fs::write(&mpath, text).unwrap();
    let report = validate_container(dir.path());
    let failures = report.failures();
    assert_eq!(failures.len(), 1, "{failures:?}");
    assert_eq!(failures[0].code.as_deref(), Some("E_SHAPE"));
    assert!(failures[0].detail.contains("n_cells × 5"));
}

#[test]
fn duplicate_cell_id_is_reported() {
    let (stack, ann) = sample();
    let dir = tempfile::tempdir().unwrap();
    write_container(&stack, &ann, dir.path()).unwrap();
    let cpath = dir.path().join("cells.csv");
    let text = fs::read_to_string(&cpath).unwrap().replace("\ne,", "\nb,");
    fs::write(&cpath, text).unwrap();
    let report = validate_container(dir.path());
    assert_eq!(report.failures()[0].code.as_deref(), Some("E_ANNOTATION"));
    assert!(read_container(dir.path()).is_err());
}

#[test]
fn nan_is_rejected_with_layer_and_row() {
    let (stack, ann) = sample();
    let dir = tempfile::tempdir().unwrap();
    write_container(&stack, &ann, dir.path()).unwrap();
    // Write a NaN into row 2 of layer 2 and re-sign the file so only the
    // finiteness check can catch it.
    let path = dir.path().join("layer_002.f32");
    let mut bytes = fs::read(&path).unwrap();
    let offset = (2 * 5 + 1) * 4;
    bytes[offset..offset + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&path, &bytes).unwrap();
    let mpath = dir.path().join("manifest.json");
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
    manifest["layers"][1]["fnv1a64"] = layerwise::container::fnv1a64_hex(&bytes).into();
    fs::write(&mpath, serde_json::to_string(&manifest).unwrap()).unwrap();

    match read_container(dir.path()) {
        Err(Error::NonFinite { layer, row, .. }) => assert_eq!((layer, row), (2, 2)),
        other => panic!("{other:?}"),
    }
    assert_eq!(
        validate_container(dir.path()).failures()[0].code.as_deref(),
        Some("E_NON_FINITE")
    );
}

#[test]
fn counts_round_trip() {
    let dense = ndarray::array![[0u32, 3, 1], [7, 0, 0]];
    let genes = vec!["g1".to_string(), "g2".to_string()];
    let cells = vec!["c1".to_string(), "c2".to_string(), "c3".to_string()];
    let m = CountMatrix::from_dense(genes, cells, &dense).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_counts(&m, dir.path()).unwrap();
    assert_eq!(read_counts(&dir.path().join("counts.mtx")).unwrap(), m);
}

fn corrupt(dir: &Path, what: u8, at: usize) {
    let layer = dir.join("layer_001.f32");
    match what % 5 {
        0 => {
            let mut b = fs::read(&layer).unwrap();
            let i = at % b.len();
            b[i] = b[i].wrapping_add(1);
            fs::write(&layer, b).unwrap();
        }
        1 => {
            let b = fs::read(&layer).unwrap();
            fs::write(&layer, &b[..at % b.len()]).unwrap();
        }
        2 => {
            let mut b = fs::read(&layer).unwrap();
            b.push(0);
            fs::write(&layer, b).unwrap();
        }
        3 => {
            let cells = dir.join("cells.csv");
            let text = fs::read_to_string(&cells).unwrap();
            let lines: Vec<&str> = text.lines().collect();
            let keep = lines.len() - 1 - at % (lines.len() - 1);
            fs::write(&cells, lines[..keep].join("\n") + "\n").unwrap();
        }
        _ => {} // untouched
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn validate_passes_iff_read_succeeds(what in 0u8..5, at in 0usize..1000) {
        let (stack, ann) = sample();
        let dir = tempfile::tempdir().unwrap();
        write_container(&stack, &ann, dir.path()).unwrap();
        corrupt(dir.path(), what, at);
        prop_assert_eq!(validate_container(dir.path()).is_valid(), read_container(dir.path()).is_ok());
    }
}
