//! Gradient descent with heavy-ball momentum.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Example, ModelState, Objective};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub step_size: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub weight_decay: f64,
    pub rng_seed: u64,
    /// Stop once the full-batch gradient norm drops to this value.
    pub g_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            momentum: 0.9,
            epochs: 5000,
            batch_size: None,
            weight_decay: 1e-4,
            rng_seed: 0,
            g_tol: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.g_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("g_tol must be positive, got {}", self.g_tol)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    /// Full-batch risk at the start of every epoch, then the final risk.
    pub history: Vec<f64>,
    pub grad_norm: f64,
    pub epochs_run: usize,
    pub converged: bool,
}

pub fn train(model: &ModelState, data: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_weighted(model, data, None, cfg)
}

/// Train on `data` with optional per-sample weights (see [`Objective`]).
/// Deterministic for a given config: minibatch order comes from `rng_seed`
/// and gradient reductions run in sample order.
pub fn train_weighted(
    model: &ModelState,
    data: &[Example],
    weights: Option<&[f64]>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut full = Objective::new(&model.config, data, cfg.weight_decay);
    if let Some(w) = weights {
        full = full.with_weights(w);
    }
    let mut theta = model.theta.clone();
    let mut velocity = vec![0.0; theta.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..data.len()).filter(|&i| weights.map_or(true, |w| w[i] != 0.0)).collect();
    let mut history = Vec::with_capacity(cfg.epochs + 1);

    let finish = |theta: Vec<f64>, history: Vec<f64>, grad_norm, epochs_run, converged| TrainOutcome {
        model: ModelState { config: model.config.clone(), theta, trained: true },
        history,
        grad_norm,
        epochs_run,
        converged,
    };

    for epoch in 0..cfg.epochs {
        let (risk, grad) = full.risk_and_gradient(&theta)?;
        check_finite(epoch, risk)?;
        history.push(risk);
        let gnorm = crate::linalg::norm2(&grad);
        if gnorm <= cfg.g_tol {
            return Ok(finish(theta, history, gnorm, epoch, true));
        }
        match cfg.batch_size {
            Some(b) if b < order.len() => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(b) {
                    let batch: Vec<Example> = chunk.iter().map(|&i| data[i].clone()).collect();
                    let bw: Option<Vec<f64>> = weights.map(|w| chunk.iter().map(|&i| w[i]).collect());
                    let mut obj = Objective::new(&model.config, &batch, cfg.weight_decay);
                    if let Some(bw) = bw.as_deref() {
                        obj = obj.with_weights(bw);
                    }
                    let g = obj.gradient(&theta)?;
                    step(&mut theta, &mut velocity, &g, cfg);
                }
            }
            _ => step(&mut theta, &mut velocity, &grad, cfg),
        }
    }
    let (risk, grad) = full.risk_and_gradient(&theta)?;
    check_finite(cfg.epochs, risk)?;
    history.push(risk);
    let gnorm = crate::linalg::norm2(&grad);
    Ok(finish(theta, history, gnorm, cfg.epochs, gnorm <= cfg.g_tol))
}

fn check_finite(epoch: usize, risk: f64) -> Result<()> {
    if risk.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { epoch, risk })
    }
}

fn step(theta: &mut [f64], velocity: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
    for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = cfg.momentum * *v - cfg.step_size * g;
        *t += *v;
    }
}
