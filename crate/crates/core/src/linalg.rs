//! Minimal dense linear algebra: row-major matrices and owned vectors.
//!
//! The model is small (tens of thousands of parameters), so a hand-rolled
//! row-major `Vec<T>` representation is simpler and easier to audit than an
//! external BLAS binding, and it keeps results bit-for-bit reproducible
//! across machines.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Owned numeric vector. A thin newtype over `Vec<T>` so shape errors show
/// up as type errors instead of index arithmetic bugs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector<T>(pub Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![T::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    /// Dot product. Panics on length mismatch: callers inside the model own
    /// both operands, so a mismatch is a programming error, not bad input.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.len(), other.len(), "add_assign: length mismatch");
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Vector(self.0.iter().map(|&x| x * s).collect())
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(v: Vec<T>) -> Self {
        Vector(v)
    }
}

impl<T> std::ops::Index<usize> for Vector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> std::ops::IndexMut<usize> for Vector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds from row-major data. Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "from_vec: size mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "from_rows: ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `y = A x`. Panics on shape mismatch.
    pub fn matvec(&self, x: &[T]) -> Vector<T> {
        assert_eq!(self.cols, x.len(), "matvec: shape mismatch");
        let mut y = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = T::zero();
            for (&a, &b) in row.iter().zip(x) {
                acc += a * b;
            }
            y.push(acc);
        }
        Vector(y)
    }

    /// `y = A^T x` without materializing the transpose.
    pub fn matvec_transposed(&self, x: &[T]) -> Vector<T> {
        assert_eq!(self.rows, x.len(), "matvec_transposed: shape mismatch");
        let mut y = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let xr = x[r];
            for (yc, &a) in y.iter_mut().zip(row) {
                *yc += a * xr;
            }
        }
        Vector(y)
    }

    /// Rank-1 update `A += u v^T`; the shape of the gradient of `A x` wrt `A`.
    pub fn add_outer(&mut self, u: &[T], v: &[T]) {
        assert_eq!(self.rows, u.len(), "add_outer: row mismatch");
        assert_eq!(self.cols, v.len(), "add_outer: col mismatch");
        for r in 0..self.rows {
            let ur = u[r];
            for (a, &b) in self.row_mut(r).iter_mut().zip(v) {
                *a += ur * b;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.rows, other.rows, "add_assign: row mismatch");
        assert_eq!(self.cols, other.cols, "add_assign: col mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
