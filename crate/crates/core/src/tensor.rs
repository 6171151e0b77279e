//! Dense row-major `f64` matrices.
//!
//! Every value in the engine is a rank-2 [`Tensor`]; vectors are stored as
//! `1 x n` rows and scalars as `1 x 1`. Differentiation lives in
//! [`crate::autodiff`], which records operations over these values.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Tensor {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has length {} but row 0 has length {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += other`, shapes must agree.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// Non-recording matrix product `self * other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        check_inner("matmul", self.shape(), other.shape(), self.cols, other.rows)?;
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(Side::N(self), Side::N(other), &mut out, 0.0);
        Ok(out)
    }

    /// Non-recording product `self * other^T`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        check_inner("matmul_nt", self.shape(), other.shape(), self.cols, other.cols)?;
        let mut out = Tensor::zeros(self.rows, other.rows);
        gemm(Side::N(self), Side::T(other), &mut out, 0.0);
        Ok(out)
    }
}

fn check_inner(
    op: &str,
    a: (usize, usize),
    b: (usize, usize),
    ka: usize,
    kb: usize,
) -> Result<()> {
    if ka != kb {
        return Err(Error::Shape(format!(
            "{op}: incompatible shapes {}x{} and {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// An operand of [`gemm`], optionally transposed.
#[derive(Clone, Copy)]
pub(crate) enum Side<'a> {
    N(&'a Tensor),
    T(&'a Tensor),
}

impl Side<'_> {
    fn dims(&self) -> (usize, usize) {
        match self {
            Side::N(t) => (t.rows, t.cols),
            Side::T(t) => (t.cols, t.rows),
        }
    }

    fn strides(&self) -> (isize, isize) {
        match self {
            Side::N(t) => (t.cols as isize, 1),
            Side::T(t) => (1, t.cols as isize),
        }
    }

    fn ptr(&self) -> *const f64 {
        match self {
            Side::N(t) | Side::T(t) => t.data.as_ptr(),
        }
    }
}

/// `out = beta * out + op(a) * op(b)`.
///
/// Single-threaded and deterministic: the reduction order depends only on
/// the operand shapes.
pub(crate) fn gemm(a: Side<'_>, b: Side<'_>, out: &mut Tensor, beta: f64) {
    let (m, k) = a.dims();
    let (kb, n) = b.dims();
    assert_eq!(k, kb, "gemm inner dimension");
    assert_eq!((m, n), out.shape(), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.scale_in_place(beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: strides and extents describe exactly the backing buffers of
    // `a`, `b` and `out`, all of which outlive the call; `out` is uniquely
    // borrowed and cannot alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.ptr(),
            rsa,
            csa,
            b.ptr(),
            rsb,
            csb,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let mut out = Tensor::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_identity_left() {
        let b = Tensor::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(Tensor::identity(2).matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_row_col() {
        let a = Tensor::row_vector(&[1.0, 2.0]);
        let b = Tensor::from_vec(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("shape"), "{err}");
    }

    #[test]
    fn gemm_transposes_match_naive() {
        let a = Tensor::from_vec(3, 4, (0..12).map(|v| v as f64 * 0.5 - 2.0).collect()).unwrap();
        let b = Tensor::from_vec(5, 4, (0..20).map(|v| (v as f64).sin()).collect()).unwrap();
        let nt = a.matmul_nt(&b).unwrap();
        let reference = naive(&a, &b.transpose());
        for (x, y) in nt.data().iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut tn = Tensor::zeros(4, 4);
        gemm(Side::T(&a), Side::N(&a), &mut tn, 0.0);
        let reference = naive(&a.transpose(), &a);
        for (x, y) in tn.data().iter().zip(reference.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(2, 2, vec![1.0; 3]).is_err());
    }
}
