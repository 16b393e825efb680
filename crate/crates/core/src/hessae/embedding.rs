use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Variance-ranked selection from the concatenation of original features and
/// the previous hidden layer. Realizes `G^T (x ++ h)` for a 0/1 matrix `G`
/// with exactly one 1 per column and at most one per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingUnit {
    /// Zero-based positions in `x ++ h`, ordered by descending variance.
    pub selected: Vec<usize>,
    pub n_original: usize,
    pub n_hidden: usize,
}

/// Per-column sample variance with `1/(N-1)` normalization (zero when N < 2).
pub fn column_variances(x: ArrayView2<f64>) -> Array1<f64> {
    let n = x.nrows();
    if n < 2 {
        return Array1::zeros(x.ncols());
    }
    let mean = x.mean_axis(Axis(0)).unwrap();
    let mut var = Array1::zeros(x.ncols());
    for row in x.rows() {
        for ((v, &xi), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (xi - m) * (xi - m);
        }
    }
    var / (n - 1) as f64
}

/// Pick the `d_out` columns of `concat` (original columns first, then hidden
/// columns) with the largest variance. Ties go to the lower index.
pub fn build_embedding(concat: ArrayView2<f64>, n_original: usize, d_out: usize) -> Result<EmbeddingUnit> {
    let width = concat.ncols();
    if n_original > width {
        return Err(Error::shape("more original columns than concatenated columns"));
    }
    if d_out > width {
        return Err(Error::param(format!("cannot select {d_out} of {width} columns")));
    }
    let var = column_variances(concat);
    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    order.truncate(d_out);
    Ok(EmbeddingUnit { selected: order, n_original, n_hidden: width - n_original })
}

impl EmbeddingUnit {
    pub fn d_in(&self) -> usize {
        self.n_original + self.n_hidden
    }

    pub fn d_out(&self) -> usize {
        self.selected.len()
    }

    /// `output_j = (x ++ h)[selected_j]`.
    pub fn apply(&self, x: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.len() != self.n_original || h.len() != self.n_hidden {
            return Err(Error::shape(format!(
                "embedding expects ({}, {}) inputs, got ({}, {})",
                self.n_original,
                self.n_hidden,
                x.len(),
                h.len()
            )));
        }
        Ok(self
            .selected
            .iter()
            .map(|&i| if i < self.n_original { x[i] } else { h[i - self.n_original] })
            .collect())
    }

    /// Row-wise [`apply`](Self::apply) over a batch.
    pub fn apply_batch(&self, x: ArrayView2<f64>, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_original || h.ncols() != self.n_hidden || x.nrows() != h.nrows() {
            return Err(Error::shape(format!(
                "embedding expects (N x {}, N x {}) inputs, got {:?} and {:?}",
                self.n_original,
                self.n_hidden,
                x.dim(),
                h.dim()
            )));
        }
        let mut out = Array2::zeros((x.nrows(), self.d_out()));
        for (j, &i) in self.selected.iter().enumerate() {
            let src = if i < self.n_original { x.column(i) } else { h.column(i - self.n_original) };
            out.column_mut(j).assign(&src);
        }
        Ok(out)
    }

    /// The `(n + d) x d_out` 0/1 selection matrix `G`.
    pub fn g_matrix(&self) -> Array2<f64> {
        let mut g = Array2::zeros((self.d_in(), self.d_out()));
        for (j, &i) in self.selected.iter().enumerate() {
            g[[i, j]] = 1.0;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn variance_ranking_example() {
        // two rows [-a, a] have sample variance 2a^2: variances 2.0, 0.5, 3.0
        let c = 1.5f64.sqrt();
        let x = array![[-1.0, -0.5, -c], [1.0, 0.5, c]];
        let var = column_variances(x.view());
        for (v, e) in var.iter().zip([2.0, 0.5, 3.0]) {
            assert!((v - e).abs() < 1e-12);
        }
        let unit = build_embedding(x.view(), 2, 2).unwrap();
        // 1-based (3, 1)
        assert_eq!(unit.selected, vec![2, 0]);
    }

    #[test]
    fn full_selection_is_permutation() {
        let x = array![[0.0, 1.0, 5.0, 2.0], [1.0, 1.0, -5.0, 2.5]];
        let unit = build_embedding(x.view(), 2, 4).unwrap();
        let mut s = unit.selected.clone();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3]);
        assert_eq!(unit.selected[0], 2);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        assert_eq!(build_embedding(x.view(), 1, 2).unwrap().selected, vec![0, 1]);
    }

    #[test]
    fn too_many_requested() {
        let x = array![[0.0, 1.0]];
        assert!(build_embedding(x.view(), 1, 3).is_err());
    }

    #[test]
    fn selection_semantics() {
        let unit = EmbeddingUnit { selected: vec![2, 0], n_original: 2, n_hidden: 1 };
        let out = unit.apply(array![10.0, 20.0].view(), array![30.0].view()).unwrap();
        assert_eq!(out, array![30.0, 10.0]);
        assert_eq!(out, unit.apply(array![10.0, 20.0].view(), array![30.0].view()).unwrap());
        let identity = EmbeddingUnit { selected: vec![0, 1, 2], n_original: 2, n_hidden: 1 };
        assert_eq!(identity.apply(array![1.0, 2.0].view(), array![3.0].view()).unwrap(), array![1.0, 2.0, 3.0]);
        assert!(unit.apply(array![1.0].view(), array![3.0].view()).is_err());
    }

    #[test]
    fn g_matrix_structure() {
        let unit = EmbeddingUnit { selected: vec![3, 1], n_original: 2, n_hidden: 2 };
        let g = unit.g_matrix();
        assert_eq!(g.sum(), 2.0);
        for col in g.columns() {
            assert_eq!(col.sum(), 1.0);
        }
        for row in g.rows() {
            assert!(row.sum() <= 1.0);
        }
    }
}
