//! Compressed sparse row matrices with serial and row-parallel products.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row count below which the parallel product falls back to the serial one.
const PAR_MIN_ROWS: usize = 2048;

/// Square sparse matrix in compressed sparse row form.
///
/// Column indices within a row are strictly increasing. Both products compute
/// each output entry as the same in-row left-to-right sum, so the serial and
/// parallel paths return bit-identical results.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets. Duplicate entries
    /// are summed; rows are sorted by column.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!(
                    "triplet ({i}, {j}) outside {n}x{n} matrix"
                )));
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    let k = values.len() - 1;
                    values[k] += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as (column, value) pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&j, &v)| (j, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Exact structural+numerical symmetry check (test scale).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if (v - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    #[inline]
    fn row_product(&self, i: usize, x: &[f64]) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let mut acc = 0.0;
        for k in lo..hi {
            acc += self.values[k] * x[self.col_idx[k]];
        }
        acc
    }

    /// `y = A x`, one thread.
    pub fn apply_serial_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            y[i] = self.row_product(i, x);
        }
    }

    /// `y = A x`, rows distributed across the rayon pool.
    #[cfg(feature = "parallel")]
    pub fn apply_parallel_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.par_iter_mut()
            .enumerate()
            .for_each(|(i, yi)| *yi = self.row_product(i, x));
    }

    /// `y = A x` using the parallel path when enabled and worthwhile.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        #[cfg(feature = "parallel")]
        if self.n >= PAR_MIN_ROWS {
            self.apply_parallel_into(x, y);
            return;
        }
        self.apply_serial_into(x, y);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(3, &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 1.0), (2, 2, 4.0)])
            .unwrap()
    }

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let m = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, 0.5)]).unwrap();
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn product_matches_dense() {
        let m = sample();
        let x = vec![1.0, 2.0, 3.0];
        let y = m.apply(&x);
        assert_eq!(y, vec![5.0, 6.0, 13.0]);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::from_triplets(2, &[(0, 5, 1.0)]).is_err());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn serial_and_parallel_bitwise_equal() {
        let n = 3000;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 2.0 + i as f64 * 1e-3));
            if i + 1 < n {
                trips.push((i, i + 1, -0.3));
                trips.push((i + 1, i, -0.3));
            }
        }
        let m = CsrMatrix::from_triplets(n, &trips).unwrap();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut ys = vec![0.0; n];
        let mut yp = vec![0.0; n];
        m.apply_serial_into(&x, &mut ys);
        m.apply_parallel_into(&x, &mut yp);
        assert!(ys.iter().zip(&yp).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
