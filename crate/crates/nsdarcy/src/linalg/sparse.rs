//! Compressed sparse row matrices with the small set of operations the
//! solver needs: triplet assembly, matrix-vector products, transpose and
//! row-wise merging.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    IndexOutOfRange { row: usize, col: usize, nrows: usize, ncols: usize },
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    SingularPivot { column: usize },
    ResidualCheck { residual: f64, bound: f64 },
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::IndexOutOfRange { row, col, nrows, ncols } => {
                write!(f, "triplet ({row},{col}) out of range for {nrows}x{ncols} matrix")
            }
            LinalgError::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected:?}, got {got:?}")
            }
            LinalgError::SingularPivot { column } => {
                write!(f, "matrix singular to working precision at pivot column {column}")
            }
            LinalgError::ResidualCheck { residual, bound } => {
                write!(f, "direct solve residual {residual:e} exceeds bound {bound:e}")
            }
        }
    }
}

impl std::error::Error for LinalgError {}

/// CSR matrix. Column indices are strictly increasing within each row and
/// duplicates are summed during construction.
#[derive(Clone, Debug, Default)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(LinalgError::IndexOutOfRange { row: r, col: c, nrows, ncols });
            }
        }
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0f64; triplets.len()];
        {
            let mut next = counts.clone();
            for &(r, c, v) in triplets {
                let p = next[r];
                cols[p] = c;
                vals[p] = v;
                next[r] += 1;
            }
        }
        // Sort each row by column and merge duplicates in place.
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut out_cols = Vec::with_capacity(triplets.len());
        let mut out_vals = Vec::with_capacity(triplets.len());
        let mut idx: Vec<u32> = Vec::new();
        for r in 0..nrows {
            let lo = counts[r];
            let hi = counts[r + 1];
            idx.clear();
            idx.extend(0..(hi - lo) as u32);
            idx.sort_unstable_by_key(|&k| cols[lo + k as usize]);
            let mut last_col = usize::MAX;
            for &k in idx.iter() {
                let c = cols[lo + k as usize];
                let v = vals[lo + k as usize];
                if c == last_col {
                    *out_vals.last_mut().unwrap() += v;
                } else {
                    out_cols.push(c);
                    out_vals.push(v);
                    last_col = c;
                }
            }
            row_ptr[r + 1] = out_cols.len();
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: out_cols,
            values: out_vals,
        })
    }

    /// y = A x.
    pub fn spmv(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
        y
    }

    /// y += alpha * A x.
    pub fn spmv_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] += alpha * acc;
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                let p = next[*c];
                cols[p] = r;
                vals[p] = *v;
                next[*c] += 1;
            }
        }
        SparseMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            row_ptr: counts,
            col_idx: cols,
            values: vals,
        }
    }

    /// Row-wise merge of two CSR matrices of identical shape: `self + other`.
    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix, LinalgError> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(LinalgError::ShapeMismatch {
                expected: (self.nrows, self.ncols),
                got: (other.nrows, other.ncols),
            });
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut cols = Vec::with_capacity(self.nnz() + other.nnz());
        let mut vals = Vec::with_capacity(self.nnz() + other.nnz());
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0usize, 0usize);
            while i < ca.len() || j < cb.len() {
                let next_a = if i < ca.len() { ca[i] } else { usize::MAX };
                let next_b = if j < cb.len() { cb[j] } else { usize::MAX };
                if next_a == next_b {
                    cols.push(next_a);
                    vals.push(va[i] + vb[j]);
                    i += 1;
                    j += 1;
                } else if next_a < next_b {
                    cols.push(next_a);
                    vals.push(va[i]);
                    i += 1;
                } else {
                    cols.push(next_b);
                    vals.push(vb[j]);
                    j += 1;
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx: cols,
            values: vals,
        })
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dense copy, for tests and tiny systems only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            let (cs, vs) = self.row(r);
            for (c, v) in cs.iter().zip(vs) {
                d[r][*c] += v;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.values[0], 3.0);
    }

    #[test]
    fn empty_triplets_give_zero_matrix() {
        let a = SparseMatrix::from_triplets(3, 4, &[]).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.row_ptr, vec![0, 0, 0, 0]);
        assert_eq!(a.spmv(&[1.0; 4]), vec![0.0; 3]);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]),
            Err(LinalgError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn spmv_identity() {
        let eye = SparseMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let x = vec![3.0, -1.0, 2.5];
        assert_eq!(eye.spmv(&x), x);
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        // Fixed pseudo-random 5x5 matrix.
        let mut trip = Vec::new();
        let mut state = 12345u64;
        let mut nextf = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for r in 0..5 {
            for c in 0..5 {
                if (r + 2 * c) % 3 != 0 {
                    trip.push((r, c, nextf()));
                }
            }
        }
        let a = SparseMatrix::from_triplets(5, 5, &trip).unwrap();
        let x: Vec<f64> = (0..5).map(|_| nextf()).collect();
        let dense = a.to_dense();
        let y = a.spmv(&x);
        for r in 0..5 {
            let mut acc = 0.0;
            for c in 0..5 {
                acc += dense[r][c] * x[c];
            }
            assert!((y[r] - acc).abs() < 1e-14);
        }
    }

    #[test]
    fn add_merges_rows() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (1, 2, 2.0)]).unwrap();
        let b = SparseMatrix::from_triplets(2, 3, &[(0, 0, -1.0), (0, 1, 4.0)]).unwrap();
        let c = a.add(&b).unwrap();
        assert_eq!(c.to_dense(), vec![vec![0.0, 4.0, 0.0], vec![0.0, 0.0, 2.0]]);
    }

    #[test]
    fn transpose_roundtrip() {
        let a = SparseMatrix::from_triplets(2, 3, &[(0, 1, 5.0), (1, 0, -2.0), (1, 2, 7.0)]).unwrap();
        let at = a.transpose();
        assert_eq!(at.nrows, 3);
        assert_eq!(at.to_dense()[1][0], 5.0);
        let back = at.transpose();
        assert_eq!(back.to_dense(), a.to_dense());
    }
}
