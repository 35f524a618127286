//! Small dense vector helpers and symmetric matrix square roots.

use nalgebra::{DMatrix, SymmetricEigen};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Noise covariance, either diagonal or a full symmetric PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(Vec<f64>),
    Full(DMatrix<f64>),
}

impl Covariance {
    pub fn dim(&self) -> usize {
        match self {
            Covariance::Diagonal(d) => d.len(),
            Covariance::Full(m) => m.nrows(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Covariance::Diagonal(d) => d.iter().sum(),
            Covariance::Full(m) => m.trace(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Covariance::Full(m) => m.clone(),
        }
    }

    /// Principal square root. Diagonal entries are square-rooted directly; full matrices
    /// go through a symmetric eigendecomposition with negative round-off eigenvalues clipped.
    pub fn sqrt(&self) -> Covariance {
        match self {
            Covariance::Diagonal(d) => Covariance::Diagonal(d.iter().map(|v| v.max(0.0).sqrt()).collect()),
            Covariance::Full(m) => Covariance::Full(sym_sqrt(m)),
        }
    }

    /// `out = self * g`
    pub fn apply(&self, g: &[f64], out: &mut [f64]) {
        match self {
            Covariance::Diagonal(d) => {
                for ((o, di), gi) in out.iter_mut().zip(d).zip(g) {
                    *o = di * gi;
                }
            }
            Covariance::Full(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..m.ncols()).map(|j| m[(i, j)] * g[j]).sum();
                }
            }
        }
    }
}

pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&vals) * q.transpose()
}
