//! Property tests for count preprocessing.

use layerwise::container::{CellAnnotations, CountMatrix};
use layerwise::prep::{
    library_normalize_log1p, log_fold_change, pseudobulk, size_factors, PseudobulkTable,
};
use ndarray::Array2;
use proptest::prelude::*;

const LABELS: [&str; 3] = ["ctrl", "A", "B"];

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("c{i}")).collect()
}

fn genes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("g{i}")).collect()
}

/// Random gene × cell counts with a label per cell; every label gets a cell.
fn scenario() -> impl Strategy<Value = (Array2<u32>, Vec<usize>)> {
    (2usize..6, 3usize..12).prop_flat_map(|(g, n)| {
        (
            proptest::collection::vec(0u32..50, g * n)
                .prop_map(move |v| Array2::from_shape_vec((g, n), v).unwrap()),
            proptest::collection::vec(0usize..3, n).prop_map(|mut l| {
                l[0] = 0;
                l[1] = 1;
                l[2] = 2;
                l
            }),
        )
    })
}

fn annotations(labels: &[usize]) -> CellAnnotations {
    CellAnnotations::new(ids(labels.len()))
        .unwrap()
        .with_perturbation(
            labels
                .iter()
                .map(|&l| Some(LABELS[l].to_string()))
                .collect(),
        )
        .unwrap()
}

proptest! {
    #[test]
    fn pseudobulk_ignores_cell_order((dense, labels) in scenario(), seed in any::<u64>()) {
        let (g, n) = dense.dim();
        let ann = annotations(&labels);
        let counts = CountMatrix::from_dense(genes(g), ids(n), &dense).unwrap();
        // Rotate the count columns; annotations still match by id.
        let shift = (seed as usize) % n;
        let order: Vec<usize> = (0..n).map(|j| (j + shift) % n).collect();
        let shuffled = CountMatrix::from_dense(
            genes(g),
            order.iter().map(|&j| format!("c{j}")).collect(),
            &dense.select(ndarray::Axis(1), &order),
        )
        .unwrap();
        prop_assert_eq!(pseudobulk(&counts, &ann).unwrap(), pseudobulk(&shuffled, &ann).unwrap());
    }

    #[test]
    fn pseudobulk_is_additive_over_partitions((dense, labels) in scenario(), cut in 0usize..12) {
        let (g, n) = dense.dim();
        let counts = CountMatrix::from_dense(genes(g), ids(n), &dense).unwrap();
        let whole = pseudobulk(&counts, &annotations(&labels)).unwrap();
        // Split label A into A and a fresh label A2 at an arbitrary cell.
        let split = CellAnnotations::new(ids(n))
            .unwrap()
            .with_perturbation(
                labels
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| {
                        let name = if l == 1 && i > 1 && i >= cut { "A2" } else { LABELS[l] };
                        Some(name.to_string())
                    })
                    .collect(),
            )
            .unwrap();
        let parts = pseudobulk(&counts, &split).unwrap();
        let a = whole.label_index("A").unwrap();
        let a1 = parts.label_index("A").unwrap();
        for gi in 0..g {
            let rebuilt = parts.values[[gi, a1]]
                + parts.label_index("A2").map_or(0.0, |a2| parts.values[[gi, a2]]);
            prop_assert_eq!(rebuilt, whole.values[[gi, a]]);
        }
    }

    #[test]
    fn identical_columns_have_unit_size_factors(
        column in proptest::collection::vec(1u32..10_000, 1..20),
        k in 1usize..8,
    ) {
        let g = column.len();
        let values = Array2::from_shape_fn((g, k), |(i, _)| f64::from(column[i]));
        let labels = (0..k).map(|i| format!("L{i}")).collect();
        let pb = PseudobulkTable::new(labels, genes(g), values).unwrap();
        prop_assert!(size_factors(&pb).unwrap().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn fold_change_is_antisymmetric((dense, labels) in scenario()) {
        let (g, n) = dense.dim();
        let counts = CountMatrix::from_dense(genes(g), ids(n), &dense).unwrap();
        let pb = pseudobulk(&counts, &annotations(&labels)).unwrap();
        let sf: Vec<f64> = (0..pb.labels.len()).map(|i| 1.0 + 0.25 * i as f64).collect();
        let forward = log_fold_change(&pb, &sf, "ctrl", 1.0).unwrap();
        let backward = log_fold_change(&pb, &sf, "A", 1.0).unwrap();
        let a_vs_ctrl = forward.iter().find(|p| p.perturbation == "A").unwrap();
        let ctrl_vs_a = backward.iter().find(|p| p.perturbation == "ctrl").unwrap();
        for (x, y) in a_vs_ctrl.logfc.iter().zip(&ctrl_vs_a.logfc) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn log1p_ignores_per_cell_rescaling((dense, _) in scenario(), factor in 2u32..50) {
        let (g, n) = dense.dim();
        let mut dense = dense;
        // Every cell needs a positive total.
        dense.row_mut(0).mapv_inplace(|v| v + 1);
        let scaled = dense.mapv(|v| v * factor);
        let a = library_normalize_log1p(&CountMatrix::from_dense(genes(g), ids(n), &dense).unwrap(), 1e4)
            .unwrap()
            .to_dense();
        let b = library_normalize_log1p(&CountMatrix::from_dense(genes(g), ids(n), &scaled).unwrap(), 1e4)
            .unwrap()
            .to_dense();
        for (x, y) in a.iter().zip(b.iter()) {
            prop_assert!((x - y).abs() <= 1e-12, "{} vs {}", x, y);
        }
    }
}
