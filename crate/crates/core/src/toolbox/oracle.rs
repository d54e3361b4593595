//! Exact retraining: leave-one-out and bootstrap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rue::BootstrapPlan;
use crate::error::{Error, Result};
use crate::hessian::assemble_from_hvp;
use crate::linalg::{dot, norm2, Cholesky};
use crate::model::{train_weighted, Example, LossKind, ModelState, Objective, TrainConfig};

/// Newton iterations are used up to this parameter count, gradient descent
/// beyond it.
const NEWTON_MAX_PARAMS: usize = 400;

/// Minimize the weighted risk starting from `model` until the gradient norm
/// is at most `cfg.g_tol`.
///
/// Small models take full Newton steps on the exact Hessian with a
/// backtracking line search, which reaches `g_tol = 1e-8` in a handful of
/// iterations where gradient descent would need ~1e5 epochs. Larger models
/// fall back to the configured gradient descent.
pub fn minimize(model: &ModelState, train: &[Example], weights: &[f64], cfg: &TrainConfig) -> Result<ModelState> {
    if model.param_count() > NEWTON_MAX_PARAMS {
        let out = train_weighted(model, train, Some(weights), cfg)?;
        if !out.converged {
            return Err(Error::NoConvergence(format!(
                "retraining stopped at gradient norm {:.3e} > g_tol {:.1e}",
                out.grad_norm, cfg.g_tol
            )));
        }
        return Ok(out.model);
    }
    let obj = Objective::new(&model.config, train, cfg.weight_decay).with_weights(weights);
    let mut theta = model.theta.clone();
    let (mut risk, mut grad) = obj.risk_and_gradient(&theta)?;
    for _ in 0..100 {
        if norm2(&grad) <= cfg.g_tol {
            return Ok(ModelState { config: model.config.clone(), theta, trained: true });
        }
        let h = assemble_from_hvp(theta.len(), NEWTON_MAX_PARAMS, |v| obj.hvp(&theta, v))?.matrix;
        let step = Cholesky::factor(&h)?.solve(&grad);
        let slope = -dot(&grad, &step);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a - t * b).collect();
            let (r, g) = obj.risk_and_gradient(&trial)?;
            // Near the optimum risk differences drop below rounding, so a
            // step that shrinks the gradient is accepted as well.
            if r <= risk + 1e-4 * t * slope || norm2(&g) < norm2(&grad) || t < 1e-10 {
                theta = trial;
                risk = r;
                grad = g;
                break;
            }
            t *= 0.5;
        }
        if !risk.is_finite() {
            return Err(Error::Divergence { epoch: 0, risk });
        }
    }
    if norm2(&grad) <= cfg.g_tol {
        Ok(ModelState { config: model.config.clone(), theta, trained: true })
    } else {
        Err(Error::NoConvergence(format!("Newton retraining stopped at gradient norm {:.3e}", norm2(&grad))))
    }
}

fn test_losses(model: &ModelState, test: &[Example], kind: LossKind) -> Result<Vec<f64>> {
    test.iter().map(|ex| model.loss(ex, kind)).collect()
}

/// What "training without point r" minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooMode {
    /// `(1/n) sum_{i != r} L_i + (wd/2)||theta||^2`: the term of `r` is
    /// removed and everything else is unchanged. This is the perturbation
    /// the influence function linearizes.
    #[default]
    DropTerm,
    /// The mean over the remaining `n - 1` points with the same weight decay.
    /// Relative to `DropTerm` this also weakens the penalty by `(n-1)/n`,
    /// a shift shared by every `r`.
    Renormalize,
}

/// `L_test(theta'_r) - L_test(theta)` for every test point, where `theta'_r`
/// is retrained from `theta` without training point `r`.
pub fn loo_oracle(
    model: &ModelState,
    train: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
    r: usize,
    kind: LossKind,
    mode: LooMode,
) -> Result<Vec<f64>> {
    if r >= train.len() {
        return Err(Error::InvalidArgument(format!("removal index {r} out of range")));
    }
    let mut w = vec![1.0; train.len()];
    w[r] = 0.0;
    let mut cfg = cfg.clone();
    if mode == LooMode::DropTerm && train.len() > 1 {
        // (1/n) sum_{i != r} L_i + wd/2 |theta|^2 is (n-1)/n times the
        // (n-1)-mean with weight decay wd * n / (n-1); same minimizer.
        let n = train.len() as f64;
        cfg.weight_decay *= n / (n - 1.0);
    }
    let retrained = minimize(model, train, &w, &cfg)?;
    let before = test_losses(model, test, kind)?;
    let after = test_losses(&retrained, test, kind)?;
    Ok(after.iter().zip(&before).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOracle {
    /// `losses[b][t]`: test loss of test point `t` under retrained model `b`.
    pub losses: Vec<Vec<f64>>,
    pub original: Vec<f64>,
    /// Mean squared deviation from the original loss, per test point.
    pub variance: Vec<f64>,
    /// Standard error of `variance` over the resamples.
    pub std_error: Vec<f64>,
}

/// Retrain one model per bootstrap row (warm start from `model`) and measure
/// the spread of each test loss around its original value.
pub fn bootstrap_oracle(
    model: &ModelState,
    train: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
    plan: &BootstrapPlan,
    kind: LossKind,
) -> Result<BootstrapOracle> {
    plan.validate()?;
    if plan.n != train.len() {
        return Err(Error::ShapeMismatch { expected: train.len(), actual: plan.n });
    }
    let original = test_losses(model, test, kind)?;
    let losses = (0..plan.b())
        .into_par_iter()
        .map(|k| {
            let w = plan.weights(k);
            let m = if w.iter().all(|&c| c == 1.0) { model.clone() } else { minimize(model, train, &w, cfg)? };
            test_losses(&m, test, kind)
        })
        .collect::<Result<Vec<_>>>()?;
    let b = losses.len().max(1) as f64;
    let mut variance = vec![0.0; test.len()];
    let mut std_error = vec![0.0; test.len()];
    for t in 0..test.len() {
        let sq: Vec<f64> = losses.iter().map(|row| (row[t] - original[t]).powi(2)).collect();
        let mean = sq.iter().sum::<f64>() / b;
        let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (b - 1.0).max(1.0);
        variance[t] = mean;
        std_error[t] = (var / b).sqrt();
    }
    Ok(BootstrapOracle { losses, original, variance, std_error })
}
