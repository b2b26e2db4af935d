use rand::Rng;

use super::scalar::{axpy, dot, Scalar};
use crate::error::{shape_err, Result};

/// Dense row-major matrix. Vectors are stored as `n x 1` matrices when they
/// live in a parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(
                "Matrix::from_vec",
                format!("{} entries ({rows}x{cols})", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[S]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(shape_err(format!("Matrix::from_rows row {i}"), cols, row.len()));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Column vector (`n x 1`).
    pub fn column(values: Vec<S>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::one();
        }
        m
    }

    /// Entries drawn uniformly from `[-scale, scale]`.
    pub fn random_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::lit(rng.random_range(-scale..=scale)))
            .collect();
        Self { rows, cols, data }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn scale(&mut self, alpha: S) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: S, other: &Matrix<S>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                "Matrix::add_scaled",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        axpy(alpha, &other.data, &mut self.data);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `W x`
    pub fn matvec(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.cols {
            return Err(shape_err("Matrix::matvec", self.cols, x.len()));
        }
        let mut out = vec![S::zero(); self.rows];
        self.matvec_add_into(x, &mut out);
        Ok(out)
    }

    /// `out += W x` with dimensions checked only in debug builds.
    #[inline]
    pub fn matvec_add_into(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols.max(1))) {
            *o += dot(row, x);
        }
    }

    /// `out += W^T y`
    #[inline]
    pub fn tr_matvec_add_into(&self, y: &[S], out: &mut [S]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (yi, row) in y.iter().zip(self.data.chunks_exact(self.cols.max(1))) {
            if *yi != S::zero() {
                axpy(*yi, row, out);
            }
        }
    }

    /// `self += alpha * y x^T`
    #[inline]
    pub fn add_outer(&mut self, alpha: S, y: &[S], x: &[S]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        let cols = self.cols.max(1);
        for (yi, row) in y.iter().zip(self.data.chunks_exact_mut(cols)) {
            let coef = alpha * *yi;
            if coef != S::zero() {
                axpy(coef, x, row);
            }
        }
    }
}

/// `W x + b`.
pub fn affine<S: Scalar>(x: &[S], w: &Matrix<S>, b: &[S]) -> Result<Vec<S>> {
    if b.len() != w.rows() {
        return Err(shape_err("affine bias", w.rows(), b.len()));
    }
    let mut out = b.to_vec();
    if x.len() != w.cols() {
        return Err(shape_err("affine input", w.cols(), x.len()));
    }
    w.matvec_add_into(x, &mut out);
    Ok(out)
}
