//! Weighted empirical risk with an L2 penalty, its gradient and its exact
//! Hessian-vector product.

use rayon::prelude::*;

use super::{accumulate_grad, accumulate_hvp, loss_at, Example, LossKind, ModelConfig, ModelState};
use crate::error::{Error, Result};

/// `R(theta) = sum_i w_i L_i(theta) / sum_i w_i + (wd / 2) ||theta||^2`.
///
/// Unit weights give the plain mean. A zero weight drops a sample (leave one
/// out), integer weights encode a bootstrap resample.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    pub config: &'a ModelConfig,
    pub data: &'a [Example],
    pub weights: Option<&'a [f64]>,
    pub weight_decay: f64,
    pub kind: LossKind,
}

impl<'a> Objective<'a> {
    pub fn new(config: &'a ModelConfig, data: &'a [Example], weight_decay: f64) -> Self {
        Self { config, data, weights: None, weight_decay, kind: LossKind::GroundTruth }
    }

    pub fn with_weights(mut self, weights: &'a [f64]) -> Self {
        self.weights = Some(weights);
        self
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn total_weight(&self) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let total = match self.weights {
            None => self.data.len() as f64,
            Some(w) => {
                if w.len() != self.data.len() {
                    return Err(Error::ShapeMismatch { expected: self.data.len(), actual: w.len() });
                }
                if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidArgument("sample weights must be finite and non-negative".into()));
                }
                w.iter().sum()
            }
        };
        if total > 0.0 {
            Ok(total)
        } else {
            Err(Error::EmptyDataset)
        }
    }

    fn active(&self) -> Vec<usize> {
        (0..self.data.len()).filter(|&i| self.weight(i) != 0.0).collect()
    }

    pub fn risk(&self, theta: &[f64]) -> Result<f64> {
        let total = self.total_weight()?;
        let losses = self
            .active()
            .into_par_iter()
            .map(|i| Ok(self.weight(i) * loss_at(self.config, theta, &self.data[i], self.kind)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(losses.iter().sum::<f64>() / total + self.penalty(theta))
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        0.5 * self.weight_decay * theta.iter().map(|t| t * t).sum::<f64>()
    }

    /// Risk and its gradient. Per-sample work runs in parallel; the
    /// reduction is sequential in sample order, so results do not depend on
    /// the thread count.
    pub fn risk_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let total = self.total_weight()?;
        let parts = self
            .active()
            .into_par_iter()
            .map(|i| {
                let mut g = vec![0.0; theta.len()];
                let l = accumulate_grad(self.config, theta, &self.data[i], self.kind, 1.0, &mut g)?;
                Ok((self.weight(i), l, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grad = vec![0.0; theta.len()];
        let mut risk = 0.0;
        for (w, l, g) in parts {
            risk += w * l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += w * b;
            }
        }
        for (a, t) in grad.iter_mut().zip(theta) {
            *a = *a / total + self.weight_decay * t;
        }
        Ok((risk / total + self.penalty(theta), grad))
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.risk_and_gradient(theta)?.1)
    }

    /// Exact `H v` of the risk at `theta`, including the `wd * v` term.
    pub fn hvp(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != theta.len() {
            return Err(Error::ShapeMismatch { expected: theta.len(), actual: v.len() });
        }
        let total = self.total_weight()?;
        let parts = self
            .active()
            .into_par_iter()
            .map(|i| {
                let mut h = vec![0.0; theta.len()];
                accumulate_hvp(self.config, theta, &self.data[i], self.kind, v, 1.0, &mut h)?;
                Ok((self.weight(i), h))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![0.0; theta.len()];
        for (w, h) in parts {
            for (a, b) in out.iter_mut().zip(&h) {
                *a += w * b;
            }
        }
        for (a, vi) in out.iter_mut().zip(v) {
            *a = *a / total + self.weight_decay * vi;
        }
        Ok(out)
    }
}

/// Mean loss over `data` plus `(wd / 2) ||theta||^2`.
pub fn empirical_risk(model: &ModelState, data: &[Example], kind: LossKind, weight_decay: f64) -> Result<f64> {
    let obj = Objective { kind, ..Objective::new(&model.config, data, weight_decay) };
    obj.risk(&model.theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ConvSpec, Nonlinearity};

    fn cfg() -> ModelConfig {
        ModelConfig {
            architecture: Architecture::CnnGap,
            conv: vec![
                ConvSpec { kernel: 3, channels: 3, stride: 1 },
                ConvSpec { kernel: 3, channels: 3, stride: 2 },
            ],
            nonlinearity: Nonlinearity::Softplus,
            input_length: 12,
            classes: 2,
            scale_inputs: false,
        }
    }

    fn data(n: usize) -> Vec<Example> {
        (0..n)
            .map(|s| Example {
                x: (0..12).map(|i| ((i * 5 + s * 11) as f64 * 0.37).sin()).collect(),
                y: s % 2,
            })
            .collect()
    }

    #[test]
    fn gradient_is_mean_of_per_sample_gradients() {
        let m = ModelState::init(cfg(), 4).unwrap();
        let d = data(7);
        let g = Objective::new(&m.config, &d, 0.0).gradient(&m.theta).unwrap();
        let mut mean = vec![0.0; g.len()];
        for ex in &d {
            for (a, b) in mean.iter_mut().zip(m.grad_single(ex, LossKind::GroundTruth).unwrap()) {
                *a += b / d.len() as f64;
            }
        }
        for (a, b) in g.iter().zip(&mean) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn risk_identities() {
        let m = ModelState::init(cfg(), 5).unwrap();
        let d = data(6);
        let single = empirical_risk(&m, &d[..1], LossKind::GroundTruth, 0.0).unwrap();
        assert_eq!(single, m.loss(&d[0], LossKind::GroundTruth).unwrap());

        let r0 = empirical_risk(&m, &d, LossKind::GroundTruth, 0.0).unwrap();
        let r1 = empirical_risk(&m, &d, LossKind::GroundTruth, 0.3).unwrap();
        let sq: f64 = m.theta.iter().map(|t| t * t).sum();
        assert!((r1 - r0 - 0.15 * sq).abs() < 1e-12);

        let doubled: Vec<Example> = d.iter().chain(d.iter()).cloned().collect();
        let r2 = empirical_risk(&m, &doubled, LossKind::GroundTruth, 0.0).unwrap();
        assert!((r2 - r0).abs() < 1e-14);

        assert!(matches!(empirical_risk(&m, &[], LossKind::GroundTruth, 0.0), Err(Error::EmptyDataset)));
    }

    #[test]
    fn weights_match_explicit_resample() {
        let m = ModelState::init(cfg(), 6).unwrap();
        let d = data(5);
        let w = [2.0, 0.0, 1.0, 0.0, 2.0];
        let resample: Vec<Example> =
            [0, 0, 2, 4, 4].iter().map(|&i| d[i].clone()).collect();
        let a = Objective::new(&m.config, &d, 1e-3).with_weights(&w);
        let b = Objective::new(&m.config, &resample, 1e-3);
        let (ra, ga) = a.risk_and_gradient(&m.theta).unwrap();
        let (rb, gb) = b.risk_and_gradient(&m.theta).unwrap();
        assert!((ra - rb).abs() < 1e-14);
        for (x, y) in ga.iter().zip(&gb) {
            assert!((x - y).abs() < 1e-14);
        }
        let v: Vec<f64> = (0..m.theta.len()).map(|i| (i as f64).cos()).collect();
        let ha = a.hvp(&m.theta, &v).unwrap();
        let hb = b.hvp(&m.theta, &v).unwrap();
        for (x, y) in ha.iter().zip(&hb) {
            assert!((x - y).abs() < 1e-13);
        }
        assert!(Objective::new(&m.config, &d, 0.0).with_weights(&[0.0; 5]).risk(&m.theta).is_err());
    }

    #[test]
    fn hvp_matches_gradient_differences() {
        let m = ModelState::init(cfg(), 8).unwrap();
        let d = data(5);
        let obj = Objective::new(&m.config, &d, 1e-2);
        let v: Vec<f64> = (0..m.theta.len()).map(|i| ((i * 3) as f64).sin()).collect();
        let hv = obj.hvp(&m.theta, &v).unwrap();
        let h = 1e-5;
        let shift = |s: f64| -> Vec<f64> { m.theta.iter().zip(&v).map(|(t, d)| t + s * d).collect() };
        let gp = obj.gradient(&shift(h)).unwrap();
        let gm = obj.gradient(&shift(-h)).unwrap();
        let scale = hv.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        for k in 0..hv.len() {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            assert!((fd - hv[k]).abs() <= 1e-6 * scale.max(1.0), "k={k} fd={fd} hvp={}", hv[k]);
        }
    }
}
