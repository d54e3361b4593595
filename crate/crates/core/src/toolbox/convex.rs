//! A small, strongly convex classification problem on which retraining to
//! high precision is cheap: multinomial logistic regression on two
//! overlapping Gaussian clouds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{Example, ModelConfig, ModelState, TrainConfig};

/// Class means sit at `+-SEPARATION * scale` along a random unit direction.
pub const SEPARATION: f64 = 0.5;
/// Strong enough that the loss is close to quadratic over the range of
/// bootstrap refits at `n = 50`.
pub const WEIGHT_DECAY: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct ConvexProblem {
    pub model: ModelState,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub train_cfg: TrainConfig,
}

/// `features` inputs, 2 classes (`M = 2 * features + 2`), `n_train` and
/// `n_test` samples, fitted from zero to `g_tol = 1e-10`. Per-coordinate
/// noise is `scale / sqrt(features)`, so the Hessian sits well above the RUE
/// damping of order one once `scale` is a few tens.
pub fn convex_problem(features: usize, n_train: usize, n_test: usize, scale: f64, seed: u64) -> Result<ConvexProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let direction: Vec<f64> = (0..features).map(|_| noise.sample(&mut rng)).collect();
    let norm = crate::linalg::norm2(&direction);
    let mut draw = |count: usize| -> Vec<Example> {
        (0..count)
            .map(|i| {
                let y = i % 2;
                let shift = if y == 0 { -SEPARATION } else { SEPARATION };
                let x = direction
                    .iter()
                    .map(|d| scale * (shift * d / norm + noise.sample(&mut rng) / (features as f64).sqrt()))
                    .collect();
                Example { x, y }
            })
            .collect()
    };
    let train_set = draw(n_train);
    let test_set = draw(n_test);

    let config = ModelConfig::logistic(features, 2);
    let weight_decay = WEIGHT_DECAY;
    let train_cfg = TrainConfig {
        step_size: 1.0 / smoothness_bound(&train_set, weight_decay),
        momentum: 0.9,
        epochs: 200_000,
        batch_size: None,
        weight_decay,
        rng_seed: seed,
        g_tol: 1e-10,
    };
    let start = ModelState::zeros(config)?;
    let model = super::oracle::minimize(&start, &train_set, &vec![1.0; train_set.len()], &train_cfg)?;
    Ok(ConvexProblem { model, train: train_set, test: test_set, train_cfg })
}

/// Upper bound on the Hessian norm of the mean two-class cross-entropy:
/// the logit Hessian has norm at most 1/2, so `||H|| <= 0.5 * ||X^T X|| / n
/// + wd` with `X` augmented by a bias column, and `||X^T X|| <= ||X||_F^2`.
fn smoothness_bound(data: &[Example], weight_decay: f64) -> f64 {
    let frob: f64 = data.iter().map(|e| e.x.iter().map(|v| v * v).sum::<f64>() + 1.0).sum();
    0.5 * frob / data.len() as f64 + weight_decay
}
