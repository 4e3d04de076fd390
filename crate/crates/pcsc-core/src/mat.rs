//! Minimal row-major matrix used by the neural kernels.
//!
//! This is deliberately not a general linear-algebra library: the model only
//! needs dense `A @ B` products (plus transposed variants for backprop),
//! row-wise bias adds and column reductions, all in a fixed summation order
//! so training stays bit-deterministic.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// `self @ b`, self is m×k, b is k×n.
    pub fn matmul(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, b.rows, "matmul dimension mismatch");
        let mut c = Mat::zeros(self.rows, b.cols);
        F::gemm(
            self.rows,
            self.cols,
            b.cols,
            F::one(),
            &self.data,
            self.cols as isize,
            1,
            &b.data,
            b.cols as isize,
            1,
            F::zero(),
            &mut c.data,
            b.cols as isize,
            1,
        );
        c
    }

    /// `self^T @ b`, self is k×m, b is k×n; result m×n.
    pub fn t_matmul(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.rows, b.rows, "t_matmul dimension mismatch");
        let mut c = Mat::zeros(self.cols, b.cols);
        F::gemm(
            self.cols,
            self.rows,
            b.cols,
            F::one(),
            &self.data,
            1,
            self.cols as isize,
            &b.data,
            b.cols as isize,
            1,
            F::zero(),
            &mut c.data,
            b.cols as isize,
            1,
        );
        c
    }

    /// `self @ b` where `b` is a row-major `b_rows x b_cols` slice; avoids
    /// wrapping parameter storage in a temporary matrix.
    pub fn matmul_raw(&self, b: &[F], b_rows: usize, b_cols: usize) -> Mat<F> {
        assert_eq!(self.cols, b_rows, "matmul_raw dimension mismatch");
        assert_eq!(b.len(), b_rows * b_cols);
        let mut c = Mat::zeros(self.rows, b_cols);
        F::gemm(
            self.rows,
            self.cols,
            b_cols,
            F::one(),
            &self.data,
            self.cols as isize,
            1,
            b,
            b_cols as isize,
            1,
            F::zero(),
            &mut c.data,
            b_cols as isize,
            1,
        );
        c
    }

    /// `self @ b^T` where `b` is a row-major `b_rows x b_cols` slice;
    /// result is `rows x b_rows`.
    pub fn matmul_t_raw(&self, b: &[F], b_rows: usize, b_cols: usize) -> Mat<F> {
        assert_eq!(self.cols, b_cols, "matmul_t_raw dimension mismatch");
        assert_eq!(b.len(), b_rows * b_cols);
        let mut c = Mat::zeros(self.rows, b_rows);
        F::gemm(
            self.rows,
            self.cols,
            b_rows,
            F::one(),
            &self.data,
            self.cols as isize,
            1,
            b,
            1,
            b_cols as isize,
            F::zero(),
            &mut c.data,
            b_rows as isize,
            1,
        );
        c
    }

    /// `self @ b^T`, self is m×k, b is n×k; result m×n.
    pub fn matmul_t(&self, b: &Mat<F>) -> Mat<F> {
        assert_eq!(self.cols, b.cols, "matmul_t dimension mismatch");
        let mut c = Mat::zeros(self.rows, b.rows);
        F::gemm(
            self.rows,
            self.cols,
            b.rows,
            F::one(),
            &self.data,
            self.cols as isize,
            1,
            &b.data,
            1,
            b.cols as isize,
            F::zero(),
            &mut c.data,
            b.rows as isize,
            1,
        );
        c
    }

    /// Adds `bias` (length = cols) to every row.
    pub fn add_row_bias(&mut self, bias: &[F]) {
        assert_eq!(bias.len(), self.cols, "bias length mismatch");
        for row in self.data.chunks_exact_mut(self.cols) {
            for (x, b) in row.iter_mut().zip(bias) {
                *x += *b;
            }
        }
    }

    /// Column sums, accumulated in row order.
    pub fn col_sums(&self) -> Vec<F> {
        let mut sums = vec![F::zero(); self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (s, x) in sums.iter_mut().zip(row) {
                *s += *x;
            }
        }
        sums
    }

    /// Column means.
    pub fn col_means(&self) -> Vec<F> {
        let inv = F::one() / F::from_usize(self.rows);
        let mut m = self.col_sums();
        for v in &mut m {
            *v *= inv;
        }
        m
    }
}
