//! Constant sparse operators used to move rows between nodes, hyperedges and
//! incidences.

use crate::matrix::DenseMatrix;

/// Compressed sparse rows with `f64` values. Entries within a row keep the
/// order they were pushed in, which fixes the summation order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists.
    pub fn from_rows<I, R>(cols: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = (usize, f64)>,
    {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < cols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: indptr.len() - 1,
            cols,
            indptr,
            indices,
            values,
        }
    }

    /// Row `i` of the result picks row `idx[i]` of the operand.
    pub fn gather(cols: usize, idx: &[usize]) -> Self {
        Self::from_rows(cols, idx.iter().map(|&c| [(c, 1.0)]))
    }

    /// Sums consecutive operand rows `offsets[s]..offsets[s+1]` into row `s`.
    pub fn segment_sum(offsets: &[usize]) -> Self {
        let cols = offsets.last().copied().unwrap_or(0);
        Self::from_rows(
            cols,
            offsets.windows(2).map(|w| (w[0]..w[1]).map(|c| (c, 1.0))),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let cur = m.get(r, c);
                m.set(r, c, cur + v);
            }
        }
        m
    }

    /// `self · x`.
    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        debug_assert_eq!(self.cols, x.rows());
        let f = x.cols();
        let mut out = DenseMatrix::zeros(self.rows, f);
        for r in 0..self.rows {
            let dst = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                let w = self.values[k];
                for (o, s) in dst.iter_mut().zip(x.row(self.indices[k])) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// `acc += selfᵀ · g`.
    pub(crate) fn t_mul_accumulate(&self, g: &DenseMatrix, acc: &mut DenseMatrix) {
        debug_assert_eq!(self.rows, g.rows());
        debug_assert_eq!(self.cols, acc.rows());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let w = self.values[k];
                let src = g.row(r);
                for (o, s) in acc.row_mut(self.indices[k]).iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_and_segment_sum() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let g = CsrMatrix::gather(3, &[2, 0, 2]);
        assert_eq!(g.mul_dense(&x).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let s = CsrMatrix::segment_sum(&[0, 2, 2, 3]);
        let y = s.mul_dense(&x);
        assert_eq!(y.data(), &[4.0, 6.0, 0.0, 0.0, 5.0, 6.0]);
    }

    #[test]
    fn transpose_product_matches_dense() {
        let p = CsrMatrix::from_rows(3, vec![vec![(0, 1.0), (2, -2.0)], vec![(1, 0.5)]]);
        let g = DenseMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let mut acc = DenseMatrix::zeros(3, 1);
        p.t_mul_accumulate(&g, &mut acc);
        assert_eq!(acc, p.to_dense().transpose().matmul(&g).unwrap());
    }
}
