//! Compressed sparse row storage for the recurrent weight matrix.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets already sorted by row then column.
    pub fn from_sorted_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last = (0usize, 0usize);
        for (r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            assert!(
                values.is_empty() || (r, c) > last,
                "triplets must be strictly sorted"
            );
            last = (r, c);
            row_ptr[r + 1] += 1;
            col_idx.push(c as u32);
            values.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        Self::from_sorted_triplets(
            rows,
            cols,
            (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (r, c)))
                .filter_map(|(r, c)| {
                    let v = m[(r, c)];
                    (v != 0.0).then_some((r, c, v))
                }),
        )
    }

    pub fn nrows(&self) -> usize {
        self.n_rows
    }

    pub fn ncols(&self) -> usize {
        self.n_cols
    }

    /// Number of stored (structurally nonzero) entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k] as usize, self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Dot product of row `r` with `x`.
    #[inline]
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        let cols = &self.col_idx[range.clone()];
        let vals = &self.values[range];
        // Four independent partial sums break the add latency chain.
        let mut acc = [0.0f64; 4];
        let mut cc = cols.chunks_exact(4);
        let mut vc = vals.chunks_exact(4);
        for (c, v) in (&mut cc).zip(&mut vc) {
            acc[0] += v[0] * x[c[0] as usize];
            acc[1] += v[1] * x[c[1] as usize];
            acc[2] += v[2] * x[c[2] as usize];
            acc[3] += v[3] * x[c[3] as usize];
        }
        let tail = cc
            .remainder()
            .iter()
            .zip(vc.remainder())
            .fold(0.0, |a, (&c, &v)| a + v * x[c as usize]);
        (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
    }

    /// (row_ptr, col_idx, values).
    pub fn raw_parts(&self) -> (&[usize], &[u32], &[f64]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row_dot(r, x);
        }
    }

    /// A X for a dense column-major X.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n_cols);
        let mut out = DMatrix::zeros(self.n_rows, x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            let xs = col.as_slice();
            let mut oc = out.column_mut(j);
            self.mul_vec(xs, oc.as_mut_slice());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_product() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 4.0]);
        let s = CsrMatrix::from_dense(&m);
        assert_eq!(s.nnz(), 4);
        assert_eq!(s.to_dense(), m);
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 3];
        s.mul_vec(&x, &mut y);
        assert_eq!(y, [4.0, -2.0, 12.0]);
        let xd = DMatrix::from_column_slice(3, 1, &x);
        assert_eq!(s.mul_dense(&xd), &m * &xd);
    }

    #[test]
    #[should_panic]
    fn unsorted_triplets_panic() {
        CsrMatrix::from_sorted_triplets(2, 2, vec![(1, 0, 1.0), (0, 1, 1.0)]);
    }
}
