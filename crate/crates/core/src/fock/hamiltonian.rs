use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::basis::FockBasis;
use crate::error::{Error, Result};

/// Boundary condition of the chain.
///
/// A fermion hopping across the closing `L-1 <-> 0` bond passes the other
/// `N-1` particles and picks up `(-1)^(N-1)`.
///
/// `Periodic` closes the ring so that every hop, including the closing one,
/// has amplitude `-J` (periodic for odd `N`, antiperiodic for even `N` in
/// fermion language). All off-diagonal entries are then non-positive and the
/// ground state is unique at every filling. `FermionPeriodic` keeps the bare
/// ordering sign and `FermionAntiperiodic` flips it; at half filling one of
/// the two has an exactly degenerate ground state.
/// For `L = 2` the closing bond coincides with the open one and is not added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    #[default]
    Periodic,
    FermionPeriodic,
    FermionAntiperiodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianParams {
    pub j: f64,
    pub v1: f64,
    pub boundary: Boundary,
}

/// Real symmetric Hamiltonian in coordinate form, entries grouped by row.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
    pub params: HamiltonianParams,
    row_start: Vec<usize>,
}

fn bonds(l: usize, boundary: Boundary) -> Vec<(usize, usize, bool)> {
    let mut out: Vec<(usize, usize, bool)> = (0..l.saturating_sub(1)).map(|i| (i, i + 1, false)).collect();
    if boundary != Boundary::Open && l > 2 {
        out.push((l - 1, 0, true));
    }
    out
}

/// Build `H` on `basis`. Hops carry amplitude `-J` times the fermionic
/// ordering sign, the interaction adds `V1` per occupied neighbouring pair.
pub fn build_hamiltonian(
    basis: &FockBasis,
    j: f64,
    v1: f64,
    boundary: Boundary,
) -> Result<SparseHamiltonian> {
    if !(j > 0.0) || !j.is_finite() || !v1.is_finite() {
        return Err(Error::InvalidArgument(format!("need J > 0 and finite V1, got J={j}, V1={v1}")));
    }
    let bonds = bonds(basis.l, boundary);
    let dim = basis.dim();
    let mut entries = Vec::with_capacity(dim * (bonds.len() + 1));
    let mut row_start = Vec::with_capacity(dim + 1);

    // Row `r` collects H[r, c] for every basis state c that hops into r.
    // Hopping is symmetric, so iterating hops out of r gives the same set.
    for (row, &s) in basis.states().iter().enumerate() {
        row_start.push(entries.len());
        let mut diag = 0.0;
        let mut offdiag: Vec<(usize, f64)> = Vec::new();
        for &(a, b, wraps) in &bonds {
            let na = FockBasis::occupied(s, a);
            let nb = FockBasis::occupied(s, b);
            if na && nb {
                diag += v1;
            } else if na != nb {
                let t = s ^ (1u64 << a) ^ (1u64 << b);
                let col = basis.index_of(t).expect("hop preserves particle number");
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let between = if hi - lo > 1 {
                    (s >> (lo + 1)) & ((1u64 << (hi - lo - 1)) - 1)
                } else {
                    0
                };
                let mut sign = if between.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                if wraps {
                    match boundary {
                        Boundary::Periodic => sign = 1.0,
                        Boundary::FermionAntiperiodic => sign = -sign,
                        _ => {}
                    }
                }
                offdiag.push((col, -j * sign));
            }
        }
        if diag != 0.0 {
            entries.push((row, row, diag));
        }
        offdiag.sort_by_key(|e| e.0);
        entries.extend(offdiag.into_iter().map(|(c, v)| (row, c, v)));
    }
    row_start.push(entries.len());

    Ok(SparseHamiltonian {
        dim,
        entries,
        params: HamiltonianParams { j, v1, boundary },
        row_start,
    })
}

impl SparseHamiltonian {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.dim {
            let mut s = 0.0;
            for &(_, c, v) in &self.entries[self.row_start[r]..self.row_start[r + 1]] {
                s += v * x[c];
            }
            y[r] = s;
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.dim, self.dim));
        for &(r, c, v) in &self.entries {
            a[[r, c]] += v;
        }
        a
    }

    /// Infinity norm (largest absolute row sum), an upper bound on `||H||_2`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|r| {
                self.entries[self.row_start[r]..self.row_start[r + 1]]
                    .iter()
                    .map(|e| e.2.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn two_sites_single_particle() {
        let b = FockBasis::new(2, 1).unwrap();
        let h = build_hamiltonian(&b, 1.0, 0.0, Boundary::Open).unwrap();
        let d = h.to_dense();
        assert_eq!(d, ndarray::array![[0.0, -1.0], [-1.0, 0.0]]);
        // closing bond on two sites is the same bond
        let hp = build_hamiltonian(&b, 1.0, 0.0, Boundary::Periodic).unwrap();
        assert_eq!(hp.to_dense(), d);
    }

    #[test]
    fn hermitian_and_diagonal_counts_pairs() {
        for boundary in [
            Boundary::Open,
            Boundary::Periodic,
            Boundary::FermionPeriodic,
            Boundary::FermionAntiperiodic,
        ] {
            let b = FockBasis::half_filled(8).unwrap();
            let h = build_hamiltonian(&b, 1.3, 0.7, boundary).unwrap();
            let map: HashMap<(usize, usize), f64> =
                h.entries.iter().map(|&(r, c, v)| ((r, c), v)).collect();
            for (&(r, c), &v) in &map {
                assert_eq!(map.get(&(c, r)), Some(&v));
                if r != c {
                    assert_eq!(v.abs(), 1.3);
                    let diff = b.state(r) ^ b.state(c);
                    assert_eq!(diff.count_ones(), 2);
                }
            }
            for (k, &s) in b.states().iter().enumerate() {
                let mut pairs = (0..7).filter(|&i| s >> i & 1 == 1 && s >> (i + 1) & 1 == 1).count();
                if boundary != Boundary::Open && s & 1 == 1 && s >> 7 & 1 == 1 {
                    pairs += 1;
                }
                let d = map.get(&(k, k)).copied().unwrap_or(0.0);
                assert!((d - 0.7 * pairs as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn wrap_hop_sign() {
        // L=4, N=2: hop of the particle on site 3 to site 0 passes one particle.
        let b = FockBasis::new(4, 2).unwrap();
        let from = b.index_of(0b1010).unwrap();
        let to = b.index_of(0b0011).unwrap();
        let wrap = |boundary| {
            let h = build_hamiltonian(&b, 1.0, 0.0, boundary).unwrap();
            h.entries.iter().find(|e| e.0 == to && e.1 == from).unwrap().2
        };
        assert_eq!(wrap(Boundary::FermionPeriodic), 1.0);
        assert_eq!(wrap(Boundary::FermionAntiperiodic), -1.0);
        assert_eq!(wrap(Boundary::Periodic), -1.0);
        assert!(build_hamiltonian(&b, 1.0, 0.0, Boundary::Open)
            .unwrap()
            .entries
            .iter()
            .all(|e| !(e.0 == to && e.1 == from)));
    }

    #[test]
    fn periodic_ring_is_sign_free_with_gapped_ground_state() {
        for l in [8, 10] {
            let b = FockBasis::half_filled(l).unwrap();
            let h = build_hamiltonian(&b, 1.0, 0.0, Boundary::Periodic).unwrap();
            assert!(h.entries.iter().all(|e| e.0 == e.1 || e.2 < 0.0));
            let ev = crate::linalg::symmetric_eigenvalues(&h.to_dense()).unwrap();
            assert!(ev[1] - ev[0] > 0.1, "L={l} gap {}", ev[1] - ev[0]);
        }
    }

    #[test]
    fn rejects_nonpositive_hopping() {
        let b = FockBasis::new(2, 1).unwrap();
        assert!(build_hamiltonian(&b, 0.0, 1.0, Boundary::Open).is_err());
    }
}
