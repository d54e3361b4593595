use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::{EnsembleSubspace, Spectrum};

const EPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeesResult {
    pub test_index: usize,
    pub m: usize,
    pub score: f64,
}

/// `E_m = ||U_m^T g||`. Squares are summed from the lowest-curvature
/// direction upward, the same order [`lees_table`] uses, so both agree bit
/// for bit.
pub fn lees_score(subspace: &EnsembleSubspace, g_test: &[f64]) -> Result<f64> {
    let p = subspace.project(g_test)?;
    Ok(p.iter().rev().fold(0.0, |acc, c| acc + c * c).sqrt())
}

/// `E_m` for `m = 0..=m_max` and every gradient: `table[m][t]`.
/// Suffix sums of squared eigenbasis coordinates make each column exactly
/// non-increasing in `m`.
pub fn lees_table(spectrum: &Spectrum, grads: &[Vec<f64>], m_max: usize) -> Result<Vec<Vec<f64>>> {
    let dim = spectrum.dim();
    if m_max > dim {
        return Err(Error::InvalidArgument(format!("m_max = {m_max} exceeds M = {dim}")));
    }
    let mut table = vec![vec![0.0; grads.len()]; m_max + 1];
    for (t, g) in grads.iter().enumerate() {
        let c = spectrum.project(g)?;
        let mut acc = 0.0;
        for k in (0..dim).rev() {
            acc += c[k] * c[k];
            if k <= m_max {
                table[k][t] = acc.sqrt();
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MChoice {
    pub m: usize,
    /// `table[m][t] = E_m` of test gradient `t`, for `m = 0..=M/2 + 1`
    /// (capped at `M`).
    pub table: Vec<Vec<f64>>,
}

impl MChoice {
    /// Rows `(m, max_t E_m, mean_t E_m)`.
    pub fn scan(&self) -> Vec<(usize, f64, f64)> {
        self.table
            .iter()
            .enumerate()
            .map(|(m, row)| {
                let max = row.iter().copied().fold(0.0, f64::max);
                let mean = if row.is_empty() { 0.0 } else { row.iter().sum::<f64>() / row.len() as f64 };
                (m, max, mean)
            })
            .collect()
    }
}

/// Smallest `m <= M/2` with `max_t |E_{m+1} - E_m| / max(E_m, 1e-12) <= tol`.
pub fn choose_m(spectrum: &Spectrum, grads: &[Vec<f64>], tol: f64) -> Result<MChoice> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let dim = spectrum.dim();
    let half = dim / 2;
    let table = lees_table(spectrum, grads, (half + 1).min(dim))?;
    for m in 0..=half.min(table.len().saturating_sub(2)) {
        let worst = table[m]
            .iter()
            .zip(&table[m + 1])
            .map(|(a, b)| (b - a).abs() / a.max(EPS_FLOOR))
            .fold(0.0, f64::max);
        if worst <= tol {
            return Ok(MChoice { m, table });
        }
    }
    Err(Error::NoConvergence(format!("E_m did not settle to tol {tol} for any m <= {half}")))
}
