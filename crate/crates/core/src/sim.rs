//! Dense similarity matrices over candidate entity sets.

use ndarray::Array2;
use std::collections::HashMap;

use crate::error::{EchoError, Result};

/// A dense left-by-right similarity matrix carrying the entity ids behind
/// its rows and columns. Higher entries mean more similar.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub left_ids: Vec<usize>,
    pub right_ids: Vec<usize>,
    pub data: Array2<f64>,
    row_index: HashMap<usize, usize>,
    col_index: HashMap<usize, usize>,
}

impl SimilarityMatrix {
    pub fn new(left_ids: Vec<usize>, right_ids: Vec<usize>, data: Array2<f64>) -> Result<Self> {
        if data.nrows() != left_ids.len() || data.ncols() != right_ids.len() {
            return Err(EchoError::Argument(format!(
                "similarity shape {}x{} does not match id lists {}x{}",
                data.nrows(),
                data.ncols(),
                left_ids.len(),
                right_ids.len()
            )));
        }
        let row_index = left_ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let col_index = right_ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        Ok(Self {
            left_ids,
            right_ids,
            data,
            row_index,
            col_index,
        })
    }

    /// Matrix whose row/column ids are just their positions.
    pub fn from_raw(data: Array2<f64>) -> Self {
        let left: Vec<usize> = (0..data.nrows()).collect();
        let right: Vec<usize> = (0..data.ncols()).collect();
        Self::new(left, right, data).expect("positional ids always match")
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn row_of(&self, left_entity: usize) -> Option<usize> {
        self.row_index.get(&left_entity).copied()
    }

    pub fn col_of(&self, right_entity: usize) -> Option<usize> {
        self.col_index.get(&right_entity).copied()
    }

    /// Maps a (row, col) position pair back to entity ids.
    pub fn ids_at(&self, row: usize, col: usize) -> (usize, usize) {
        (self.left_ids[row], self.right_ids[col])
    }
}

/// Min-max normalizes `m` into [0, 1] in place. A constant matrix has no
/// order information, so it maps to 0.5 everywhere instead of dividing by
/// zero.
pub fn min_max_normalize(m: &mut Array2<f64>) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in m.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if m.is_empty() {
        return;
    }
    if hi > lo {
        let span = hi - lo;
        m.mapv_inplace(|v| (v - lo) / span);
    } else {
        m.fill(0.5);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn id_lookup_round_trips() {
        let s = SimilarityMatrix::new(vec![7, 9], vec![3, 4, 5], Array2::zeros((2, 3))).unwrap();
        assert_eq!(s.row_of(9), Some(1));
        assert_eq!(s.col_of(5), Some(2));
        assert_eq!(s.ids_at(1, 0), (9, 3));
        assert_eq!(s.row_of(8), None);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(SimilarityMatrix::new(vec![0], vec![0], Array2::zeros((2, 1))).is_err());
    }

    #[test]
    fn min_max_handles_degenerate_matrix() {
        let mut m = array![[2.0, 2.0], [2.0, 2.0]];
        min_max_normalize(&mut m);
        assert_eq!(m, array![[0.5, 0.5], [0.5, 0.5]]);

        let mut m = array![[1.0, 3.0], [2.0, 5.0]];
        min_max_normalize(&mut m);
        assert_eq!(m, array![[0.0, 0.5], [0.25, 1.0]]);
    }
}
