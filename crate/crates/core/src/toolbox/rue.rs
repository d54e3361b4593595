use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::DampedHessian;
use crate::model::{loss_at, Example, LossKind, ModelState};

/// Bootstrap resamples of `n` training points, as per-point counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub n: usize,
    /// One row per resample; each row sums to `n`.
    pub counts: Vec<Vec<u32>>,
}

impl BootstrapPlan {
    /// `b` resamples drawn with replacement from a seeded stream. Row `k` of
    /// a plan with more rows extends the same stream, so a larger `b` keeps
    /// the first rows.
    pub fn sample(n: usize, b: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = (0..b)
            .map(|_| {
                let mut row = vec![0u32; n];
                for _ in 0..n {
                    row[rng.random_range(0..n)] += 1;
                }
                row
            })
            .collect();
        Ok(Self { n, counts })
    }

    /// `b` copies of the original multiset.
    pub fn identity(n: usize, b: usize) -> Self {
        Self { n, counts: vec![vec![1; n]; b] }
    }

    pub fn b(&self) -> usize {
        self.counts.len()
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.counts {
            if row.len() != self.n {
                return Err(Error::ShapeMismatch { expected: self.n, actual: row.len() });
            }
            let total: u64 = row.iter().map(|&c| c as u64).sum();
            if total != self.n as u64 {
                return Err(Error::InvalidArgument(format!("bootstrap row sums to {total}, expected {}", self.n)));
            }
        }
        Ok(())
    }

    /// `counts - 1` for row `k`; sums to zero.
    pub fn w_delta(&self, k: usize) -> Vec<f64> {
        self.counts[k].iter().map(|&c| c as f64 - 1.0).collect()
    }

    pub fn weights(&self, k: usize) -> Vec<f64> {
        self.counts[k].iter().map(|&c| c as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RueResult {
    pub test_index: usize,
    /// Mean of `(loss_b - loss_original)^2` over the resamples.
    pub variance: f64,
    pub losses: Vec<f64>,
    pub original_loss: f64,
}

/// Linearized bootstrap ensemble
/// `theta_b = theta - (1/n) (H + lambda_rue I)^{-1} L w_delta_b`,
/// where the columns of `L` are the per-sample training gradients.
#[derive(Debug, Clone)]
pub struct RueEnsemble {
    pub base: ModelState,
    pub thetas: Vec<Vec<f64>>,
}

impl RueEnsemble {
    pub fn new(
        hessian: &DampedHessian,
        model: &ModelState,
        train_grads: &[Vec<f64>],
        plan: &BootstrapPlan,
    ) -> Result<Self> {
        plan.validate()?;
        if train_grads.len() != plan.n {
            return Err(Error::ShapeMismatch { expected: plan.n, actual: train_grads.len() });
        }
        let m = model.param_count();
        let n = plan.n as f64;
        let thetas = (0..plan.b())
            .into_par_iter()
            .map(|k| {
                let w = plan.w_delta(k);
                let mut z = vec![0.0; m];
                for (wr, g) in w.iter().zip(train_grads) {
                    if *wr != 0.0 {
                        for (zi, gi) in z.iter_mut().zip(g) {
                            *zi += wr * gi;
                        }
                    }
                }
                if z.iter().all(|v| *v == 0.0) {
                    return Ok(model.theta.clone());
                }
                let step = hessian.solve_rue(&z)?;
                Ok(model.theta.iter().zip(&step).map(|(t, s)| t - s / n).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base: model.clone(), thetas })
    }

    pub fn variance(&self, test_index: usize, ex: &Example, kind: LossKind) -> Result<RueResult> {
        let cfg = &self.base.config;
        let original_loss = loss_at(cfg, &self.base.theta, ex, kind)?;
        let losses = self.thetas.iter().map(|t| loss_at(cfg, t, ex, kind)).collect::<Result<Vec<_>>>()?;
        let variance = if losses.is_empty() {
            0.0
        } else {
            losses.iter().map(|l| (l - original_loss).powi(2)).sum::<f64>() / losses.len() as f64
        };
        Ok(RueResult { test_index, variance, losses, original_loss })
    }
}

/// One-shot RUE for a single test point; prefer [`RueEnsemble`] when scoring
/// many test points against the same plan.
pub fn rue_variance(
    hessian: &DampedHessian,
    model: &ModelState,
    train_grads: &[Vec<f64>],
    plan: &BootstrapPlan,
    test_index: usize,
    ex: &Example,
    kind: LossKind,
) -> Result<RueResult> {
    RueEnsemble::new(hessian, model, train_grads, plan)?.variance(test_index, ex, kind)
}

/// Longest contiguous run (in the given order) of points whose score exceeds
/// `threshold`, as `(first x, last x)`. `None` if no point exceeds it.
pub fn rue_span(xs: &[f64], scores: &[f64], threshold: f64) -> Option<(f64, f64)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=scores.len() {
        let above = i < scores.len() && scores[i] > threshold;
        match (above, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let len = i - s;
                if best.map_or(true, |(bs, be)| len > be - bs) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best.map(|(s, e)| (xs[s], xs[e - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_rows_are_multinomial_and_prefix_stable() {
        let p = BootstrapPlan::sample(17, 30, 4).unwrap();
        p.validate().unwrap();
        for k in 0..p.b() {
            assert_eq!(p.w_delta(k).iter().sum::<f64>(), 0.0);
        }
        let q = BootstrapPlan::sample(17, 60, 4).unwrap();
        assert_eq!(&q.counts[..30], &p.counts[..]);
        let one = BootstrapPlan::sample(1, 5, 0).unwrap();
        assert!(one.counts.iter().all(|r| r == &vec![1]));
        let bad = BootstrapPlan { n: 2, counts: vec![vec![2, 1]] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn span_picks_longest_run() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let s = [0.0, 2.0, 0.0, 2.0, 2.0, 2.0, 0.0];
        assert_eq!(rue_span(&xs, &s, 1.0), Some((3.0, 5.0)));
        assert_eq!(rue_span(&xs, &s, 5.0), None);
        assert_eq!(rue_span(&xs, &[2.0; 7], 1.0), Some((0.0, 6.0)));
    }
}
