use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Per-layer cell embeddings `E^(l)`, rows = cells, columns = embedding dims.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStack {
    model_name: String,
    layers: Vec<Array2<f32>>,
}

impl EmbeddingStack {
    pub fn new(model_name: impl Into<String>, layers: Vec<Array2<f32>>) -> Result<Self> {
        let stack = EmbeddingStack {
            model_name: model_name.into(),
            layers,
        };
        stack.validate()?;
        Ok(stack)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Shape("an embedding stack needs at least one layer".into()))?;
        let n = first.nrows();
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.nrows() != n {
                return Err(Error::Shape(format!(
                    "layer {} has {} rows, layer 1 has {}",
                    i + 1,
                    layer.nrows(),
                    n
                )));
            }
            if layer.ncols() == 0 {
                return Err(Error::Shape(format!("layer {} has zero columns", i + 1)));
            }
            check_finite(i + 1, layer.view())?;
        }
        Ok(())
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn n_cells(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.ncols()).collect()
    }

    /// Layer by 1-based index.
    pub fn layer(&self, index: usize) -> Option<ArrayView2<'_, f32>> {
        index
            .checked_sub(1)
            .and_then(|i| self.layers.get(i))
            .map(|l| l.view())
    }

    pub fn layers(&self) -> &[Array2<f32>] {
        &self.layers
    }

    /// Rows `rows` of every layer, in the given order.
    pub fn select_cells(&self, rows: &[usize]) -> Result<EmbeddingStack> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_cells()) {
            return Err(Error::Shape(format!(
                "row {bad} out of range for {} cells",
                self.n_cells()
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|l| l.select(ndarray::Axis(0), rows))
            .collect();
        EmbeddingStack::new(self.model_name.clone(), layers)
    }
}

pub(crate) fn check_finite(layer: usize, m: ArrayView2<'_, f32>) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { layer, row, col });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_ragged_layers() {
        let err =
            EmbeddingStack::new("m", vec![array![[1.0f32]], array![[1.0f32], [2.0]]]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(EmbeddingStack::new("m", vec![]).is_err());
        let err = EmbeddingStack::new("m", vec![array![[1.0f32, f32::NAN]]]).unwrap_err();
        assert!(matches!(
            err,
            Error::NonFinite {
                layer: 1,
                row: 0,
                col: 1
            }
        ));
    }

    #[test]
    fn layer_lookup_is_one_based() {
        let s = EmbeddingStack::new("m", vec![array![[1.0f32]], array![[2.0f32]]]).unwrap();
        assert_eq!(s.layer(2).unwrap()[[0, 0]], 2.0);
        assert!(s.layer(0).is_none());
        assert!(s.layer(3).is_none());
        assert_eq!(s.dims(), vec![1, 1]);
    }
}
