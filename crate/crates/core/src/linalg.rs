//! Small dense helpers shared by the SSM, kernel and liquid modules.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type ComplexVec = Vec<Complex64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidDimension("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            entries: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        DMatrix::from_fn(self.rows, self.cols, |i, j| Complex64::new(self.get(i, j), 0.0))
    }

    pub fn frobenius_distance(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), other.shape());
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += (other[(i, j)] - self.get(i, j)).norm_sqr();
            }
        }
        acc.sqrt()
    }
}

/// Pairwise (tree) summation; error grows with log n rather than n.
pub fn pairwise_sum(terms: &[Complex64]) -> Complex64 {
    const BLOCK: usize = 8;
    if terms.len() <= BLOCK {
        return terms.iter().fold(Complex64::new(0.0, 0.0), |a, &b| a + b);
    }
    let mid = terms.len() / 2;
    pairwise_sum(&terms[..mid]) + pairwise_sum(&terms[mid..])
}

pub fn pairwise_sum_real(terms: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if terms.len() <= BLOCK {
        return terms.iter().sum();
    }
    let mid = terms.len() / 2;
    pairwise_sum_real(&terms[..mid]) + pairwise_sum_real(&terms[mid..])
}

/// Row vector times matrix.
pub fn row_times(row: &[Complex64], m: &ComplexMatrix) -> ComplexVec {
    let (n, k) = m.shape();
    assert_eq!(row.len(), n);
    (0..k).map(|j| (0..n).map(|i| row[i] * m[(i, j)]).sum()).collect()
}

/// `row · col` without conjugation.
pub fn bilinear_dot(row: &[Complex64], col: &[Complex64]) -> Complex64 {
    row.iter().zip(col).map(|(a, b)| a * b).sum()
}

pub fn matrix_power(m: &ComplexMatrix, mut exp: usize) -> ComplexMatrix {
    let n = m.nrows();
    let mut result = ComplexMatrix::identity(n, n);
    let mut base = m.clone();
    while exp > 0 {
        if exp & 1 == 1 {
            result = &result * &base;
        }
        exp >>= 1;
        if exp > 0 {
            base = &base * &base;
        }
    }
    result
}

pub fn max_abs_imag(values: &[Complex64]) -> f64 {
    values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

pub fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Eigenvalues of a general complex matrix via the Schur form.
pub fn eigenvalues(m: &ComplexMatrix) -> Option<ComplexVec> {
    nalgebra::Schur::new(m.clone())
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
}
