//! Compressed sparse row matrices, a sparse Cholesky wrapper for the coarse
//! solve, and Matrix Market output.

use std::io::Write;
use std::path::Path;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sorted, duplicate-free row patterns.
    pub fn from_pattern(ncols: usize, rows: &[Vec<usize>]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            indices.extend_from_slice(r);
            indptr.push(indices.len());
        }
        let nnz = indices.len();
        Self { nrows: rows.len(), ncols, indptr, indices, data: vec![0.0; nnz] }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (j, v) in r {
                if j == last {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    data.push(v);
                    last = j;
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.indptr[i];
        self.indices[start..self.indptr[i + 1]].binary_search(&j).ok().map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.data[p])
    }

    /// Add `v` to an entry of the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.position(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) not in the pattern"));
        self.data[p] += v;
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            *yi = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec(x, &mut y);
        y
    }

    /// `y = Aᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for p in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[p]] += self.data[p] * xi;
            }
        }
    }

    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_transpose_vec(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                trip.push((self.indices[p], i, self.data[p]));
            }
        }
        Self::from_triplets(self.ncols, self.nrows, &trip)
    }

    /// Dense principal submatrix on the sorted index set `idx`.
    pub fn principal_submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        let n = idx.len();
        let mut out = DMatrix::zeros(n, n);
        for (a, &i) in idx.iter().enumerate() {
            let (cols, vals) = self.row(i);
            let (mut p, mut b) = (0, 0);
            while p < cols.len() && b < n {
                match cols[p].cmp(&idx[b]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        out[(a, b)] = vals[p];
                        p += 1;
                        b += 1;
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out[(i, self.indices[p])] += self.data[p];
            }
        }
        out
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                worst = worst.max((self.data[p] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Write in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                writeln!(w, "{} {} {:.17e}", i + 1, self.indices[p] + 1, self.data[p])?;
            }
        }
        Ok(())
    }
}

/// Write a vector in Matrix Market array format.
pub fn write_vector_market(path: &Path, v: &[f64]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:.17e}")?;
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += alpha * b);
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SparseCholesky {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl std::fmt::Debug for SparseCholesky {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseCholesky").field("n", &self.n).finish()
    }
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch { expected: a.nrows, got: a.ncols });
        }
        let n = a.nrows;
        let mut trip = Vec::with_capacity(a.nnz());
        for i in 0..n {
            for p in a.indptr[i]..a.indptr[i + 1] {
                trip.push(Triplet::new(i, a.indices[p], a.data[p]));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Factorization(format!("sparse matrix creation failed: {e:?}")))?;
        let llt = mat.sp_cholesky(Side::Lower).map_err(|e| Error::Factorization(format!("coarse Cholesky failed: {e:?}")))?;
        Ok(Self { n, llt })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        if self.n > 0 {
            self.llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 1, 1.0), (0, 1, 2.0), (1, 2, -1.0), (1, 0, 4.0)]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.row(1).0, &[0, 2]);
        assert_eq!(a.apply(&[1.0, 1.0, 1.0]), vec![3.0, 3.0]);
        assert_eq!(a.apply_transpose(&[1.0, 2.0]), vec![8.0, 3.0, -2.0]);
        assert_eq!(a.transpose().to_dense(), a.to_dense().transpose());
    }

    #[test]
    fn submatrix_and_symmetry() {
        let a = laplacian_1d(5);
        let s = a.principal_submatrix(&[1, 2, 4]);
        assert_eq!(s[(0, 1)], -1.0);
        assert_eq!(s[(1, 2)], 0.0);
        assert_eq!(s[(2, 2)], 2.0);
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn cholesky_solves() {
        let a = laplacian_1d(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.apply(&x);
        let chol = SparseCholesky::new(&a).unwrap();
        let y = chol.solve(&b);
        let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(SparseCholesky::new(&a).is_err());
    }
}
