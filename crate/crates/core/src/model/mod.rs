//! Differentiable classifiers, softmax cross-entropy losses, per-example
//! gradients and exact Hessian-vector products, and a deterministic trainer.

mod config;
mod network;
mod objective;
mod scalar;
mod train;

pub use config::{Architecture, ConvSpec, ModelConfig, Nonlinearity};
pub use network::argmax;
pub use objective::{empirical_risk, Objective};
pub use scalar::{Dual, Scalar};
pub use train::{train, train_weighted, TrainConfig, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model input with its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: usize,
}

impl From<&crate::fock::LabeledSample> for Example {
    fn from(s: &crate::fock::LabeledSample) -> Self {
        Self { x: s.x.clone(), y: s.label.class() }
    }
}

/// Which label the loss compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// The stored label.
    #[default]
    GroundTruth,
    /// The model's own prediction `argmax f(x)`, held constant under
    /// differentiation. Never reads the stored label.
    Minimal,
}

/// Flat parameter vector plus the architecture it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub theta: Vec<f64>,
    pub trained: bool,
}

impl ModelState {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization per layer.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let ops = config.layers(config.input_length)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(config.param_count());
        for op in ops {
            let (count, fan_in) = match op {
                config::LayerOp::Conv { in_ch, out_ch, kernel, .. } => {
                    (out_ch * in_ch * kernel + out_ch, in_ch * kernel)
                }
                config::LayerOp::Dense { inputs, outputs, .. } => (inputs * outputs + outputs, inputs),
                _ => continue,
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            theta.extend((0..count).map(|_| rng.random_range(-bound..bound)));
        }
        Ok(Self { config, theta, trained: false })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let m = config.param_count();
        Ok(Self { config, theta: vec![0.0; m], trained: false })
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self { config: self.config.clone(), theta, trained: self.trained }
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    /// Raw class scores `f(x)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(network::forward::<f64>(&self.config, &self.theta, x)?.0)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn loss(&self, ex: &Example, kind: LossKind) -> Result<f64> {
        loss_at(&self.config, &self.theta, ex, kind)
    }

    /// Exact gradient of the single-example loss with respect to theta.
    pub fn grad_single(&self, ex: &Example, kind: LossKind) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.theta.len()];
        accumulate_grad(&self.config, &self.theta, ex, kind, 1.0, &mut g)?;
        Ok(g)
    }

    /// Hessian of the single-example loss applied to `v`.
    pub fn hvp_single(&self, ex: &Example, kind: LossKind, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.theta.len()];
        accumulate_hvp(&self.config, &self.theta, ex, kind, v, 1.0, &mut out)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

fn target(ex: &Example, kind: LossKind, logits: &[f64], classes: usize) -> Result<usize> {
    match kind {
        LossKind::GroundTruth if ex.y >= classes => Err(Error::InvalidArgument(format!(
            "label {} out of range for {classes} classes",
            ex.y
        ))),
        LossKind::GroundTruth => Ok(ex.y),
        LossKind::Minimal => Ok(argmax(logits)),
    }
}

pub(crate) fn loss_at(cfg: &ModelConfig, theta: &[f64], ex: &Example, kind: LossKind) -> Result<f64> {
    let (logits, _) = network::forward::<f64>(cfg, theta, &ex.x)?;
    let y = target(ex, kind, &logits, cfg.classes)?;
    Ok(network::cross_entropy(&logits, y).0)
}

/// `grad += weight * d loss / d theta`; returns the loss.
pub(crate) fn accumulate_grad(
    cfg: &ModelConfig,
    theta: &[f64],
    ex: &Example,
    kind: LossKind,
    weight: f64,
    grad: &mut [f64],
) -> Result<f64> {
    let (logits, tape) = network::forward::<f64>(cfg, theta, &ex.x)?;
    let y = target(ex, kind, &logits, cfg.classes)?;
    let (loss, dlogits) = network::cross_entropy(&logits, y);
    let dlogits = dlogits.into_iter().map(|d| d * weight).collect();
    network::backward(theta, &tape, dlogits, grad);
    Ok(loss)
}

/// `out += weight * H_ex v` via forward-mode differentiation of the
/// reverse pass.
pub(crate) fn accumulate_hvp(
    cfg: &ModelConfig,
    theta: &[f64],
    ex: &Example,
    kind: LossKind,
    v: &[f64],
    weight: f64,
    out: &mut [f64],
) -> Result<()> {
    if v.len() != theta.len() {
        return Err(Error::InvalidArgument("direction length differs from theta".into()));
    }
    let dual_theta: Vec<Dual> = theta.iter().zip(v).map(|(&t, &d)| Dual::new(t, d)).collect();
    let (logits, tape) = network::forward::<Dual>(cfg, &dual_theta, &ex.x)?;
    let primal: Vec<f64> = logits.iter().map(|d| d.re).collect();
    let y = target(ex, kind, &primal, cfg.classes)?;
    let (_, dlogits) = network::cross_entropy(&logits, y);
    let mut g = vec![Dual::default(); theta.len()];
    network::backward(&dual_theta, &tape, dlogits, &mut g);
    for (o, gi) in out.iter_mut().zip(&g) {
        *o += weight * gi.eps;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_gap() -> ModelConfig {
        ModelConfig {
            architecture: Architecture::CnnGap,
            conv: vec![
                ConvSpec { kernel: 3, channels: 3, stride: 1 },
                ConvSpec { kernel: 3, channels: 3, stride: 2 },
            ],
            nonlinearity: Nonlinearity::Softplus,
            input_length: 12,
            classes: 2,
            scale_inputs: true,
        }
    }

    #[test]
    fn tiny_gap_has_fifty_parameters() {
        assert_eq!(tiny_gap().param_count(), 50);
    }

    #[test]
    fn zero_network_outputs_zero_and_predicts_class_zero() {
        let m = ModelState::zeros(ModelConfig::cnn_gap(40, 2)).unwrap();
        let x: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        assert_eq!(m.forward(&x).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.predict(&x).unwrap(), 0);
        let ex = Example { x, y: 1 };
        for kind in [LossKind::GroundTruth, LossKind::Minimal] {
            assert!((m.loss(&ex, kind).unwrap() - 2f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn argmax_ties_and_two_class_example() {
        assert_eq!(argmax(&[0.1, 0.9]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
    }

    #[test]
    fn fixed_cnn_rejects_other_lengths() {
        let m = ModelState::init(ModelConfig::cnn_fixed(924, 2), 0).unwrap();
        assert!(matches!(m.forward(&vec![0.0; 3432]), Err(Error::ShapeMismatch { .. })));
        let g = ModelState::init(ModelConfig::cnn_gap(924, 2), 0).unwrap();
        assert_eq!(g.forward(&vec![0.01; 3432]).unwrap().len(), 2);
    }

    #[test]
    fn minimal_loss_ignores_label_and_is_bounded() {
        let m = ModelState::init(tiny_gap(), 3).unwrap();
        for s in 0..10 {
            let x: Vec<f64> = (0..12).map(|i| ((i * 7 + s * 13) as f64).cos()).collect();
            let a = Example { x: x.clone(), y: 0 };
            let b = Example { x, y: 1 };
            let ma = m.loss(&a, LossKind::Minimal).unwrap();
            assert_eq!(ma, m.loss(&b, LossKind::Minimal).unwrap());
            assert!(ma <= 2f64.ln() + 1e-15);
            assert!(ma <= m.loss(&a, LossKind::GroundTruth).unwrap() + 1e-15);
            assert!(ma <= m.loss(&b, LossKind::GroundTruth).unwrap() + 1e-15);
            assert_eq!(m.grad_single(&a, LossKind::Minimal).unwrap(), m.grad_single(&b, LossKind::Minimal).unwrap());
        }
    }

    #[test]
    fn gradient_is_deterministic() {
        let m = ModelState::init(tiny_gap(), 1).unwrap();
        let ex = Example { x: (0..12).map(|i| i as f64 * 0.1).collect(), y: 1 };
        let g1 = m.grad_single(&ex, LossKind::GroundTruth).unwrap();
        let g2 = m.grad_single(&ex.clone(), LossKind::GroundTruth).unwrap();
        assert_eq!(g1, g2);
    }
}
