use ndarray::Array2;

use super::{axpy, dot, norm2, symmetric_eigen};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub max_iter: usize,
    /// Convergence on the Ritz residual, relative to `scale`.
    pub tol: f64,
    /// Operator scale used for the relative residual (e.g. max |H_ij| * row nnz).
    pub scale: f64,
    /// Check the Ritz pair every this many steps.
    pub check_every: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { max_iter: 400, tol: 1e-10, scale: 1.0, check_every: 10 }
    }
}

/// Lowest eigenpair of a symmetric operator given only as a matrix-vector
/// product, by Lanczos with full reorthogonalization.
///
/// `start` seeds the Krylov space; it must have a nonzero overlap with the
/// wanted eigenvector. Returns the Rayleigh quotient and the normalized Ritz
/// vector once the true residual `||A x - e x||` is below `tol * scale`.
pub fn lanczos_lowest<F>(
    matvec: F,
    start: &[f64],
    opts: LanczosOptions,
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = start.len();
    if dim == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let n0 = norm2(start);
    if n0 == 0.0 || !n0.is_finite() {
        return Err(Error::InvalidArgument("start vector must be nonzero".into()));
    }
    let max_iter = opts.max_iter.min(dim).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_iter);
    let mut alpha = Vec::with_capacity(max_iter);
    let mut beta: Vec<f64> = Vec::with_capacity(max_iter);

    let mut q: Vec<f64> = start.iter().map(|x| x / n0).collect();
    let mut w = vec![0.0; dim];
    let mut best: Option<(f64, Vec<f64>, f64)> = None;

    for k in 0..max_iter {
        matvec(&q, &mut w);
        let a = dot(&q, &w);
        axpy(-a, &q, &mut w);
        if k > 0 {
            axpy(-beta[k - 1], &basis[k - 1], &mut w);
        }
        basis.push(q);
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm2(&w);
        let steps = k + 1;
        let breakdown = b <= 1e-14 * opts.scale.max(1.0);
        if breakdown || steps % opts.check_every == 0 || steps == max_iter {
            let (e, x) = ritz_lowest(&alpha, &beta, &basis)?;
            let mut ax = vec![0.0; dim];
            matvec(&x, &mut ax);
            axpy(-e, &x, &mut ax);
            let res = norm2(&ax);
            if res <= opts.tol * opts.scale {
                return Ok((e, x));
            }
            if best.as_ref().map_or(true, |(_, _, r)| res < *r) {
                best = Some((e, x, res));
            }
            if breakdown {
                break;
            }
        }
        beta.push(b);
        q = w.iter().map(|x| x / b).collect();
    }
    let res = best.map(|b| b.2).unwrap_or(f64::NAN);
    Err(Error::NoConvergence(format!(
        "Lanczos residual {res:e} above {:e} after {} steps",
        opts.tol * opts.scale,
        basis.len()
    )))
}

fn ritz_lowest(alpha: &[f64], beta: &[f64], basis: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let m = alpha.len();
    let mut t = Array2::zeros((m, m));
    for i in 0..m {
        t[[i, i]] = alpha[i];
        if i + 1 < m {
            t[[i, i + 1]] = beta[i];
            t[[i + 1, i]] = beta[i];
        }
    }
    let eig = symmetric_eigen(&t)?;
    let dim = basis[0].len();
    let mut x = vec![0.0; dim];
    for (j, v) in basis.iter().enumerate() {
        axpy(eig.vectors[[j, 0]], v, &mut x);
    }
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    Ok((eig.values[0], x))
}
