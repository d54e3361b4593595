use serde::{Deserialize, Serialize};

use super::hamiltonian::SparseHamiltonian;
use crate::error::{Error, Result};
use crate::linalg::{self, lanczos_lowest, LanczosOptions};

/// Above this dimension the ground state comes from Lanczos instead of the
/// dense symmetric solver.
pub const DENSE_SOLVER_MAX_DIM: usize = 1500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundState {
    pub energy: f64,
    pub amplitudes: Vec<f64>,
    pub v1_over_j: f64,
}

/// Lowest eigenpair of `h`, normalized, with the first amplitude above
/// `1e-10 * max|a|` (in basis order) made positive.
///
/// `tol` bounds the residual `||H x - E x||` relative to `||H||_inf`.
pub fn ground_state(h: &SparseHamiltonian, tol: f64) -> Result<GroundState> {
    if h.dim == 0 {
        return Err(Error::InvalidArgument("empty Hamiltonian".into()));
    }
    let scale = h.norm_inf().max(f64::MIN_POSITIVE);
    let (energy, mut x) = if h.dim <= DENSE_SOLVER_MAX_DIM {
        linalg::lowest_eigenpair(&h.to_dense(), 0.1 * tol)?
    } else {
        // Mostly uniform start with a small irrational ripple, so the start
        // overlaps the ground state whether or not H is sign-free.
        let start: Vec<f64> = (0..h.dim)
            .map(|i| 1.0 + 0.01 * (((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5))
            .collect();
        let opts = LanczosOptions {
            max_iter: 600,
            tol: 0.1 * tol,
            scale,
            check_every: 10,
        };
        lanczos_lowest(|v, out| h.matvec(v, out), &start, opts)?
    };

    let n = linalg::norm2(&x);
    x.iter_mut().for_each(|v| *v /= n);
    let peak = linalg::max_abs(&x);
    if let Some(first) = x.iter().find(|v| v.abs() > 1e-10 * peak) {
        if *first < 0.0 {
            x.iter_mut().for_each(|v| *v = -*v);
        }
    }

    let mut hx = vec![0.0; h.dim];
    h.matvec(&x, &mut hx);
    linalg::axpy(-energy, &x, &mut hx);
    let res = linalg::norm2(&hx);
    if res > tol * scale {
        return Err(Error::NoConvergence(format!(
            "ground-state residual {res:e} exceeds {:e}",
            tol * scale
        )));
    }
    Ok(GroundState { energy, amplitudes: x, v1_over_j: h.params.v1 / h.params.j })
}
