//! Row-major dense matrices and the few factorizations the estimators need.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix; rows are observations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RowMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        RowMatrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn from_row_slice(nrows: usize, ncols: usize, data: &[f64]) -> Result<Self> {
        RowMatrix::from_vec(nrows, ncols, data.to_vec())
    }

    pub fn from_vec(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::Shape(format!(
                "{} values for a {nrows}x{ncols} matrix",
                data.len()
            )));
        }
        Ok(RowMatrix { nrows, ncols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            if r.as_ref().len() != ncols {
                return Err(Error::Shape("ragged rows".into()));
            }
            data.extend_from_slice(r.as_ref());
        }
        Ok(RowMatrix {
            nrows: rows.len(),
            ncols,
            data,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.ncols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    /// New matrix holding the listed columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(self.nrows * cols.len());
        for i in 0..self.nrows {
            let row = self.row(i);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        RowMatrix {
            nrows: self.nrows,
            ncols: cols.len(),
            data,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> RowMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.ncols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        RowMatrix {
            nrows: rows.len(),
            ncols: self.ncols,
            data,
        }
    }

    /// `[self | other]`, row by row.
    pub fn hstack(&self, other: &RowMatrix) -> Result<RowMatrix> {
        if self.nrows != other.nrows {
            return Err(Error::Shape(format!(
                "cannot join blocks with {} and {} rows",
                self.nrows, other.nrows
            )));
        }
        let ncols = self.ncols + other.ncols;
        let mut data = Vec::with_capacity(self.nrows * ncols);
        for i in 0..self.nrows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(RowMatrix {
            nrows: self.nrows,
            ncols,
            data,
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.nrows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Residuals of the least-squares projection of each column of `targets`
/// onto the column space of `basis`, i.e. `(I - G) targets` with
/// `G = B (B'B)^{-1} B'` applied through a Householder QR of `basis`.
pub fn projection_residuals(basis: &RowMatrix, targets: &RowMatrix) -> Result<RowMatrix> {
    if basis.nrows() != targets.nrows() {
        return Err(Error::Shape("projection blocks differ in row count".into()));
    }
    let b = basis.to_dmatrix();
    let t = targets.to_dmatrix();
    let qr = b.qr();
    let q = qr.q();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rmin = r
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(rmin > 1e-12 * rmax) {
        return Err(Error::Numerical(
            "projection basis is rank deficient".into(),
        ));
    }
    let coef = q.transpose() * &t;
    let resid = t - q * coef;
    let mut out = RowMatrix::zeros(resid.nrows(), resid.ncols());
    for i in 0..resid.nrows() {
        for j in 0..resid.ncols() {
            out.set(i, j, resid[(i, j)]);
        }
    }
    Ok(out)
}
