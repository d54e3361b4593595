//! Dense Hessian of the training risk, its spectrum, damping and inverse
//! applications.

mod io;

pub use io::{read_hessian, read_spectrum, write_hessian, write_spectrum};

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot, symmetric_eigen};
use crate::model::{Objective, ModelState};

/// Largest parameter count for which the dense Hessian is assembled.
pub const DEFAULT_HESSIAN_CAP: usize = 4000;

/// Exact Hessian-vector product of the objective at the model parameters.
pub fn hvp(model: &ModelState, objective: &Objective, v: &[f64]) -> Result<Vec<f64>> {
    objective.hvp(&model.theta, v)
}

/// A dense Hessian together with how far it was from symmetric before
/// symmetrization.
#[derive(Debug, Clone)]
pub struct AssembledHessian {
    pub matrix: Array2<f64>,
    /// `max |H - H^T|` of the raw column assembly.
    pub asymmetry: f64,
}

/// Assemble `H` column by column from `hvp(e_j)` and symmetrize.
pub fn assemble_hessian(model: &ModelState, objective: &Objective, cap: usize) -> Result<AssembledHessian> {
    assemble_from_hvp(model.param_count(), cap, |v| objective.hvp(&model.theta, v))
}

/// Same as [`assemble_hessian`] for an arbitrary linear operator.
pub fn assemble_from_hvp<F>(m: usize, cap: usize, hvp: F) -> Result<AssembledHessian>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if m > cap {
        return Err(Error::CapExceeded { m, cap });
    }
    let columns = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            hvp(&e)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut h = Array2::zeros((m, m));
    for (j, col) in columns.iter().enumerate() {
        if col.len() != m {
            return Err(Error::ShapeMismatch { expected: m, actual: col.len() });
        }
        for (i, &v) in col.iter().enumerate() {
            h[[i, j]] = v;
        }
    }
    let mut asymmetry: f64 = 0.0;
    for i in 0..m {
        for j in 0..i {
            let (a, b) = (h[[i, j]], h[[j, i]]);
            asymmetry = asymmetry.max((a - b).abs());
            let s = 0.5 * (a + b);
            h[[i, j]] = s;
            h[[j, i]] = s;
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence("Hessian has non-finite entries".into()));
    }
    Ok(AssembledHessian { matrix: h, asymmetry })
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]`.
    pub eigenvectors: Array2<f64>,
}

impl Spectrum {
    pub fn of(h: &Array2<f64>) -> Result<Self> {
        let eig = symmetric_eigen(h)?;
        let mut vectors = eig.vectors;
        vectors.invert_axis(Axis(1));
        let mut values = eig.values;
        values.reverse();
        Ok(Self { eigenvalues: values, eigenvectors: vectors.as_standard_layout().into_owned() })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues above `fraction` of the largest one.
    pub fn significant_count(&self, fraction: f64) -> usize {
        let top = self.max();
        self.eigenvalues.iter().filter(|&&e| e > fraction * top).count()
    }

    /// Coordinates `V^T g` in the eigenbasis.
    pub fn project(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.dim() {
            return Err(Error::ShapeMismatch { expected: self.dim(), actual: g.len() });
        }
        let mut out = vec![0.0; self.dim()];
        for (i, gi) in g.iter().enumerate() {
            if *gi == 0.0 {
                continue;
            }
            let row = self.eigenvectors.row(i);
            for (o, v) in out.iter_mut().zip(row.iter()) {
                *o += gi * v;
            }
        }
        Ok(out)
    }

    /// `V c` for eigenbasis coordinates `c`.
    pub fn expand(&self, coords: &[f64]) -> Vec<f64> {
        self.eigenvectors
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(coords).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Damping rule: `lambda = max(0, -e_min) + 0.01`, `lambda_rue = lambda + 1`.
pub fn damping_lambda(spectrum: &Spectrum) -> (f64, f64) {
    let lambda = (-spectrum.min()).max(0.0) + 0.01;
    (lambda, lambda + 1.0)
}

/// Hessian of the training risk with its spectrum and damping constants.
#[derive(Debug, Clone)]
pub struct DampedHessian {
    pub h: Array2<f64>,
    pub spectrum: Spectrum,
    pub lambda: f64,
    pub lambda_rue: f64,
    /// Training-set size.
    pub n: usize,
}

impl DampedHessian {
    pub fn new(h: Array2<f64>, n: usize) -> Result<Self> {
        let spectrum = Spectrum::of(&h)?;
        let (lambda, lambda_rue) = damping_lambda(&spectrum);
        Ok(Self { h, spectrum, lambda, lambda_rue, n })
    }

    pub fn from_model(model: &ModelState, objective: &Objective, cap: usize) -> Result<Self> {
        let n = objective.data.len();
        Self::new(assemble_hessian(model, objective, cap)?.matrix, n)
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    /// `(H + lambda I)^{-1} g` for the influence damping.
    pub fn solve(&self, g: &[f64]) -> Result<Vec<f64>> {
        solve_inverse(&self.spectrum, self.lambda, g)
    }

    /// `(H + lambda_rue I)^{-1} g`.
    pub fn solve_rue(&self, g: &[f64]) -> Result<Vec<f64>> {
        solve_inverse(&self.spectrum, self.lambda_rue, g)
    }

    /// `(H + shift I) x`.
    pub fn apply(&self, shift: f64, x: &[f64]) -> Vec<f64> {
        self.h
            .rows()
            .into_iter()
            .zip(x)
            .map(|(row, xi)| dot(row.as_slice().expect("standard layout"), x) + shift * xi)
            .collect()
    }
}

/// `x = V diag(1 / (e + lambda)) V^T g`, the solution of `(H + lambda I) x = g`.
pub fn solve_inverse(spectrum: &Spectrum, lambda: f64, g: &[f64]) -> Result<Vec<f64>> {
    let mut c = spectrum.project(g)?;
    for (ci, e) in c.iter_mut().zip(&spectrum.eigenvalues) {
        let d = e + lambda;
        if !(d > 0.0) {
            return Err(Error::SingularSystem(format!("eigenvalue {e} + shift {lambda} is not positive")));
        }
        *ci /= d;
    }
    Ok(spectrum.expand(&c))
}

/// Eigenvectors of the `M - m` smallest eigenvalues.
#[derive(Debug, Clone)]
pub struct EnsembleSubspace {
    pub m: usize,
    /// `M x (M - m)`, orthonormal columns.
    pub u: Array2<f64>,
}

impl EnsembleSubspace {
    /// `U_m^T g`.
    pub fn project(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.u.nrows() {
            return Err(Error::ShapeMismatch { expected: self.u.nrows(), actual: g.len() });
        }
        let mut out = vec![0.0; self.u.ncols()];
        for (gi, row) in g.iter().zip(self.u.rows()) {
            if *gi == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(row.iter()) {
                *o += gi * v;
            }
        }
        Ok(out)
    }
}

pub fn ensemble_subspace(spectrum: &Spectrum, m: usize) -> Result<EnsembleSubspace> {
    let dim = spectrum.dim();
    if m > dim {
        return Err(Error::InvalidArgument(format!("m = {m} exceeds M = {dim}")));
    }
    let u = spectrum.eigenvectors.slice(ndarray::s![.., m..]).to_owned();
    Ok(EnsembleSubspace { m, u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quadratic(a: Array2<f64>) -> impl Fn(&[f64]) -> Result<Vec<f64>> + Sync {
        move |v: &[f64]| Ok((0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[[i, j]] * v[j]).sum()).collect())
    }

    #[test]
    fn quadratic_risk_hessian_is_a() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let op = quadratic(a.clone());
        assert_eq!(op(&[1.0, 0.0]).unwrap(), vec![2.0, 1.0]);
        let h = assemble_from_hvp(2, 10, &op).unwrap();
        assert_eq!(h.matrix, a);
        assert_eq!(h.asymmetry, 0.0);
        assert!(matches!(assemble_from_hvp(2, 1, &op), Err(Error::CapExceeded { m: 2, cap: 1 })));
    }

    #[test]
    fn damping_rule() {
        let s = |e: Vec<f64>| Spectrum { eigenvectors: Array2::eye(e.len()), eigenvalues: e };
        let (l, lr) = damping_lambda(&s(vec![2.0, 0.0, -0.5]));
        assert!((l - 0.51).abs() < 1e-15);
        assert!((lr - 1.51).abs() < 1e-15);
        let (l, _) = damping_lambda(&s(vec![2.0, 0.1]));
        assert!((l - 0.01).abs() < 1e-15);
    }

    #[test]
    fn spectrum_is_descending_and_subspace_drops_top() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, -1.0]];
        let s = Spectrum::of(&a).unwrap();
        assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let top: Vec<f64> = s.eigenvectors.column(0).to_vec();
        let u1 = ensemble_subspace(&s, 1).unwrap();
        assert!(u1.project(&top).unwrap().iter().all(|p| p.abs() < 1e-14));
        let g = [0.3, -1.2, 2.0];
        let p0 = ensemble_subspace(&s, 0).unwrap().project(&g).unwrap();
        let n0: f64 = p0.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n0 - crate::linalg::norm2(&g)).abs() < 1e-14);
        let full = ensemble_subspace(&s, 3).unwrap();
        assert!(full.project(&g).unwrap().is_empty());
        assert!(ensemble_subspace(&s, 4).is_err());
    }

    #[test]
    fn solve_inverse_spectral_identities() {
        let a = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, -1.0]];
        let d = DampedHessian::new(a, 5).unwrap();
        assert!(d.solve(&[0.0; 3]).unwrap().iter().all(|v| *v == 0.0));
        for k in 0..3 {
            let v: Vec<f64> = d.spectrum.eigenvectors.column(k).to_vec();
            let x = d.solve(&v).unwrap();
            let scale = 1.0 / (d.spectrum.eigenvalues[k] + d.lambda);
            for (xi, vi) in x.iter().zip(&v) {
                assert!((xi - scale * vi).abs() < 1e-12 * scale.abs().max(1.0));
            }
        }
        let spec = d.spectrum.clone();
        assert!(matches!(solve_inverse(&spec, -spec.min(), &[1.0, 0.0, 0.0]), Err(Error::SingularSystem(_))));
    }
}
