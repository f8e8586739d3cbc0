//! Parameter matrices and the small amount of dense linear algebra the
//! estimators and diagnostics share.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Matrix norm used for parameter distances and the error metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    /// Largest singular value.
    #[default]
    Spectral,
    Frobenius,
}

impl Norm {
    pub fn of(self, m: &DMatrix<f64>) -> f64 {
        match self {
            Norm::Spectral => spectral_norm(m),
            Norm::Frobenius => m.norm(),
        }
    }
}

/// Largest singular value of `m` (0 for an empty matrix).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(sym: &DMatrix<f64>) -> f64 {
    sym.clone().symmetric_eigenvalues().min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(sym: &DMatrix<f64>) -> f64 {
    sym.clone().symmetric_eigenvalues().max()
}

/// An `n_x x n_phi` parameter matrix: a ground-truth system or an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterMatrix(DMatrix<f64>);

impl ParameterMatrix {
    /// Wraps `m`, rejecting non-finite entries.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("parameter matrix has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    pub fn zeros(n_x: usize, n_phi: usize) -> Self {
        Self(DMatrix::zeros(n_x, n_phi))
    }

    pub fn from_row_slice(n_x: usize, n_phi: usize, data: &[f64]) -> Self {
        Self(DMatrix::from_row_slice(n_x, n_phi, data))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn norm(&self, norm: Norm) -> f64 {
        norm.of(&self.0)
    }

    /// `norm(self - other)`; shapes must agree.
    pub fn distance(&self, other: &ParameterMatrix, norm: Norm) -> Result<f64> {
        check_same_shape(self, other)?;
        Ok(norm.of(&(&self.0 - &other.0)))
    }
}

impl From<DMatrix<f64>> for ParameterMatrix {
    fn from(m: DMatrix<f64>) -> Self {
        Self(m)
    }
}

/// Entry-wise arithmetic mean. Each entry is summed over its values in
/// sorted order, so the result is bit-identical under any permutation of
/// `mats`.
pub fn entrywise_mean(mats: &[ParameterMatrix]) -> Result<ParameterMatrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::Aggregation("cannot average an empty list".into()))?;
    if let Some(bad) = mats.iter().position(|m| m.shape() != first.shape()) {
        return Err(Error::Aggregation(format!(
            "matrix {bad} has shape {:?}, expected {:?}",
            mats[bad].shape(),
            first.shape()
        )));
    }
    let (r, c) = first.shape();
    let m = mats.len() as f64;
    let mut vals = Vec::with_capacity(mats.len());
    let out = DMatrix::from_fn(r, c, |i, j| {
        vals.clear();
        vals.extend(mats.iter().map(|p| p.0[(i, j)]));
        vals.sort_by(f64::total_cmp);
        vals.iter().sum::<f64>() / m
    });
    Ok(ParameterMatrix(out))
}

pub(crate) fn check_same_shape(a: &ParameterMatrix, b: &ParameterMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "expected {:?}, got {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}
