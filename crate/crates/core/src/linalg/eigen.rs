use ndarray::Array2;

use super::cholesky::Cholesky;
use super::{dot, norm2};
use crate::error::{Error, Result};

/// Full eigendecomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, aligned with `values`.
    pub vectors: Array2<f64>,
}

// The working matrix `w` is stored column-major: entry (r, c) lives at
// w[c * n + r]. The Householder and QL sweeps walk down columns, so this keeps
// their inner loops contiguous.
macro_rules! at {
    ($w:expr, $n:expr, $r:expr, $c:expr) => {
        $w[($c) * $n + ($r)]
    };
}

fn check_square(a: &Array2<f64>) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    Ok(n)
}

fn column_major_copy(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut w = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            at!(w, n, r, c) = a[[r, c]];
        }
    }
    w
}

/// Householder reduction of the symmetric matrix in `w` to tridiagonal form.
/// On return `d` holds the diagonal and `e[1..]` the subdiagonal. With
/// `accumulate` the orthogonal transformation is left in `w`.
fn tridiagonalize(w: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64], accumulate: bool) {
    for j in 0..n {
        d[j] = at!(w, n, n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = at!(w, n, i - 1, j);
                at!(w, n, i, j) = 0.0;
                at!(w, n, j, i) = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                at!(w, n, j, i) = f;
                g = e[j] + at!(w, n, j, j) * f;
                let col = &w[j * n..j * n + i];
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut w[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = at!(w, n, i - 1, j);
                at!(w, n, i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for j in 0..n {
            d[j] = at!(w, n, j, j);
        }
        e[0] = 0.0;
        return;
    }

    for i in 0..n.saturating_sub(1) {
        at!(w, n, n - 1, i) = at!(w, n, i, i);
        at!(w, n, i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = at!(w, n, k, i + 1) / h;
            }
            for j in 0..=i {
                // column j sits before column i + 1
                let (lo, hi) = w.split_at_mut((i + 1) * n);
                let (next, cur) = (&hi[..n], &mut lo[j * n..j * n + n]);
                let g: f64 = next[..=i].iter().zip(&cur[..=i]).map(|(a, b)| a * b).sum();
                for k in 0..=i {
                    cur[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            at!(w, n, k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = at!(w, n, n - 1, j);
        at!(w, n, n - 1, j) = 0.0;
    }
    at!(w, n, n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

/// Implicit QL iteration on the tridiagonal (d, e). When `w` is given the
/// rotations are applied to its columns. Eigenvalues are left unsorted in `d`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], n: usize, mut w: Option<&mut [f64]>) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let max_sweeps = 60 * n.max(1);
    let mut sweeps = 0usize;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                sweeps += 1;
                if sweeps > max_sweeps {
                    return Err(Error::NoConvergence(
                        "implicit QL did not converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(w) = w.as_deref_mut() {
                        let (lo, hi) = w.split_at_mut((i + 1) * n);
                        let col_i = &mut lo[i * n..i * n + n];
                        let col_i1 = &mut hi[..n];
                        for k in 0..n {
                            let hk = col_i1[k];
                            col_i1[k] = s * col_i[k] + c * hk;
                            col_i[k] = c * col_i[k] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Full symmetric eigendecomposition. Only the lower triangle of `a` is read.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<SymmetricEigen> {
    let n = check_square(a)?;
    let mut w = column_major_copy(a);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n > 0 {
        tridiagonalize(&mut w, n, &mut d, &mut e, true);
        tridiagonal_ql(&mut d, &mut e, n, Some(&mut w))?;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = &w[src * n..src * n + n];
        for r in 0..n {
            vectors[[r, dst]] = col[r];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Eigenvalues only, ascending. Skips the accumulation of the orthogonal
/// factor, which is the dominant cost of [`symmetric_eigen`].
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Result<Vec<f64>> {
    let n = check_square(a)?;
    let mut w = column_major_copy(a);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n > 0 {
        tridiagonalize(&mut w, n, &mut d, &mut e, false);
        tridiagonal_ql(&mut d, &mut e, n, None)?;
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Lowest eigenpair of a dense symmetric matrix: the eigenvalue from the
/// tridiagonal QL sweep, the eigenvector from shifted inverse iteration
/// (Cholesky of `a - sigma I` with `sigma` just below the eigenvalue).
///
/// Iterates until `||a x - e x|| <= tol * ||a||_max` (or 200 steps).
pub fn lowest_eigenpair(a: &Array2<f64>, tol: f64) -> Result<(f64, Vec<f64>)> {
    let n = check_square(a)?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let values = symmetric_eigenvalues(a)?;
    let e0 = values[0];
    let a_norm = a.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    if n == 1 {
        return Ok((a[[0, 0]], vec![1.0]));
    }

    let mut delta = 1e-9 * a_norm;
    let mut shifted = a.clone();
    let chol = loop {
        for i in 0..n {
            shifted[[i, i]] = a[[i, i]] - (e0 - delta);
        }
        match Cholesky::factor(&shifted) {
            Ok(c) => break c,
            Err(_) if delta < 1e-3 * a_norm => delta *= 10.0,
            Err(err) => return Err(err),
        }
    };

    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut ax = vec![0.0; n];
    for _ in 0..200 {
        let mut y = chol.solve(&x);
        let ny = norm2(&y);
        if !ny.is_finite() || ny == 0.0 {
            return Err(Error::NoConvergence("inverse iteration broke down".into()));
        }
        y.iter_mut().for_each(|v| *v /= ny);
        x = y;
        for i in 0..n {
            ax[i] = dot(a.row(i).as_slice().expect("standard layout"), &x);
        }
        let rq = dot(&x, &ax);
        let res: f64 = ax
            .iter()
            .zip(&x)
            .map(|(p, q)| (p - rq * q).powi(2))
            .sum::<f64>()
            .sqrt();
        if res <= tol * a_norm {
            return Ok((rq, x));
        }
    }
    Err(Error::NoConvergence(
        "inverse iteration for the lowest eigenvector did not reach tolerance".into(),
    ))
}
