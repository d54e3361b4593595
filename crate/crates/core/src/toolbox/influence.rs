use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::DampedHessian;
use crate::linalg::{dot, norm2};

/// `I = (1/n) g_test^T (H + lambda I)^{-1} g_train`. Positive means removing
/// the training point raises the test loss, i.e. the point is helpful.
pub fn influence(hessian: &DampedHessian, g_train: &[f64], g_test: &[f64]) -> Result<f64> {
    let s = hessian.solve(g_train)?;
    check_len(g_test, s.len())?;
    Ok(dot(g_test, &s) / hessian.n as f64)
}

/// `S = (g_i^T (H + lambda I)^{-1} g_j)^2`.
pub fn similarity(hessian: &DampedHessian, g_i: &[f64], g_j: &[f64]) -> Result<f64> {
    // Solve against g_j and contract with g_i; (H + lambda I)^{-1} is
    // symmetric, so the result is symmetric up to rounding. Averaging both
    // orders makes it symmetric exactly.
    let a = dot(g_i, &hessian.solve(g_j)?);
    let b = dot(g_j, &hessian.solve(g_i)?);
    let v = 0.5 * (a + b);
    Ok(v * v)
}

/// Influence divided by `||(H + lambda I)^{-1} g_train||`.
pub fn relatif(hessian: &DampedHessian, g_train: &[f64], g_test: &[f64]) -> Result<f64> {
    let s = hessian.solve(g_train)?;
    check_len(g_test, s.len())?;
    let norm = norm2(&s);
    if norm == 0.0 {
        return Err(Error::Undefined("RelatIF of a training point with zero gradient".into()));
    }
    Ok(dot(g_test, &s) / hessian.n as f64 / norm)
}

fn check_len(g: &[f64], m: usize) -> Result<()> {
    if g.len() == m {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected: m, actual: g.len() })
    }
}

/// `(H + lambda I)^{-1} g_r` for every training point, computed once and
/// reused across test points.
#[derive(Debug, Clone)]
pub struct TrainSolves {
    pub solves: Vec<Vec<f64>>,
    pub norms: Vec<f64>,
    pub n: usize,
}

impl TrainSolves {
    pub fn new(hessian: &DampedHessian, train_grads: &[Vec<f64>]) -> Result<Self> {
        let solves = train_grads.par_iter().map(|g| hessian.solve(g)).collect::<Result<Vec<_>>>()?;
        let norms = solves.iter().map(|s| norm2(s)).collect();
        Ok(Self { solves, norms, n: hessian.n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub train_index: usize,
    pub test_index: usize,
    pub influence: f64,
    /// `None` when the training gradient vanishes.
    pub relatif: Option<f64>,
    pub similarity: f64,
}

/// Influence, RelatIF and similarity of every training point on one test
/// point.
pub fn influence_records(solves: &TrainSolves, test_index: usize, g_test: &[f64]) -> Result<Vec<InfluenceRecord>> {
    let n = solves.n as f64;
    solves
        .solves
        .iter()
        .zip(&solves.norms)
        .enumerate()
        .map(|(r, (s, &norm))| {
            check_len(g_test, s.len())?;
            let q = dot(g_test, s);
            Ok(InfluenceRecord {
                train_index: r,
                test_index,
                influence: q / n,
                relatif: (norm > 0.0).then(|| q / n / norm),
                similarity: q * q,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn hess() -> DampedHessian {
        DampedHessian::new(array![[3.0, 0.5, 0.0], [0.5, 2.0, 0.2], [0.0, 0.2, -0.4]], 4).unwrap()
    }

    #[test]
    fn algebraic_identities() {
        let h = hess();
        let gi = [0.3, -1.0, 0.7];
        let gj = [1.1, 0.4, -0.2];
        assert_eq!(similarity(&h, &gi, &gj).unwrap(), similarity(&h, &gj, &gi).unwrap());
        assert_eq!(similarity(&h, &gi, &[0.0; 3]).unwrap(), 0.0);
        let i = influence(&h, &gi, &gj).unwrap();
        let s = similarity(&h, &gi, &gj).unwrap();
        assert!(((4.0 * i).powi(2) - s).abs() <= 1e-9 * s);
        assert!(influence(&h, &gi, &gi).unwrap() > 0.0);

        let scaled: Vec<f64> = gi.iter().map(|v| v * 37.5).collect();
        let r1 = relatif(&h, &gi, &gj).unwrap();
        assert!((relatif(&h, &scaled, &gj).unwrap() - r1).abs() <= 1e-10 * r1.abs());
        assert_eq!(r1.signum(), i.signum());
        assert!(matches!(relatif(&h, &[0.0; 3], &gj), Err(Error::Undefined(_))));
    }

    #[test]
    fn orthogonal_test_gradient_has_no_influence() {
        let h = hess();
        let g = [0.3, -1.0, 0.7];
        let s = h.solve(&g).unwrap();
        // any vector orthogonal to s
        let t = [s[1], -s[0], 0.0];
        assert!(influence(&h, &g, &t).unwrap().abs() < 1e-15);
    }

    #[test]
    fn relatif_of_eigenvector_ignores_eigenvalue() {
        let h = hess();
        let gt = [0.5, 0.25, -1.0];
        for k in 0..3 {
            let v: Vec<f64> = h.spectrum.eigenvectors.column(k).to_vec();
            let expected = dot(&gt, &v) / 4.0;
            assert!((relatif(&h, &v, &gt).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn records_agree_with_single_calls() {
        let h = hess();
        let grads = vec![vec![0.3, -1.0, 0.7], vec![0.0; 3], vec![2.0, 0.1, 0.1]];
        let solves = TrainSolves::new(&h, &grads).unwrap();
        let gt = [1.1, 0.4, -0.2];
        let recs = influence_records(&solves, 7, &gt).unwrap();
        assert_eq!(recs[1].relatif, None);
        for (r, rec) in recs.iter().enumerate() {
            assert_eq!(rec.test_index, 7);
            assert!((rec.influence - influence(&h, &grads[r], &gt).unwrap()).abs() < 1e-14);
            assert!(((4.0 * rec.influence).powi(2) - rec.similarity).abs() <= 1e-9 * rec.similarity.max(1e-300));
            if let Some(rel) = rec.relatif {
                assert!((rel - relatif(&h, &grads[r], &gt).unwrap()).abs() < 1e-14);
            }
        }
    }
}
