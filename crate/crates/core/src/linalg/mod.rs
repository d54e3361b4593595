//! Dense and iterative linear algebra used by the data generator and the
//! Hessian analysis: a symmetric eigensolver (Householder tridiagonalization
//! followed by implicit QL), Lanczos for the lowest eigenpair of large sparse
//! operators, and a Cholesky solver.

mod cholesky;
mod eigen;
mod lanczos;

pub use cholesky::Cholesky;
pub use eigen::{lowest_eigenpair, symmetric_eigen, symmetric_eigenvalues, SymmetricEigen};
pub use lanczos::{lanczos_lowest, LanczosOptions};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Largest absolute entry.
pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
