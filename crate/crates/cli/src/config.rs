//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [data]
//! l = 12
//! sign_mode = { imbalanced = 0.1 }
//!
//! [model]
//! architecture = "cnn_fixed"
//!
//! [train]
//! weight_decay = 1e-2
//!
//! [analysis]
//! methods = ["influence", "lees"]
//!
//! [output]
//! dir = "runs/l12"
//! ```

use std::path::{Path, PathBuf};

use hessian_toolbox::fock::{hilbert_dimension, DataGenConfig, SignMode, PHASE_BOUNDARY};
use hessian_toolbox::model::{Architecture, ConvSpec, LossKind, ModelConfig, Nonlinearity, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: DataGenConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

/// Architecture choice; the input length follows from the system size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    pub classes: usize,
    /// Overrides the reference layer stack of the architecture.
    pub conv: Option<Vec<ConvSpec>>,
    pub nonlinearity: Nonlinearity,
    pub scale_inputs: Option<bool>,
    pub init_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            architecture: Architecture::CnnGap,
            classes: 2,
            conv: None,
            nonlinearity: Nonlinearity::Softplus,
            scale_inputs: None,
            init_seed: 0,
        }
    }
}

impl ModelSection {
    pub fn build(&self, input_length: usize) -> CliResult<ModelConfig> {
        let mut cfg = match self.architecture {
            Architecture::CnnFixed => ModelConfig::cnn_fixed(input_length, self.classes),
            Architecture::CnnGap => ModelConfig::cnn_gap(input_length, self.classes),
            Architecture::Logistic => ModelConfig::logistic(input_length, self.classes),
        };
        if let Some(conv) = &self.conv {
            cfg.conv = conv.clone();
        }
        cfg.nonlinearity = self.nonlinearity;
        if let Some(s) = self.scale_inputs {
            cfg.scale_inputs = s;
        }
        cfg.validate().map_err(|e| CliError::Config(format!("[model]: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Influence,
    Relatif,
    Rue,
    Lees,
    Anomaly,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Influence => "influence",
            Method::Relatif => "relatif",
            Method::Rue => "rue",
            Method::Lees => "lees",
            Method::Anomaly => "anomaly",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub methods: Vec<Method>,
    /// Bootstrap rows for RUE.
    pub b: usize,
    pub bootstrap_seed: u64,
    /// Fixed ensemble-subspace size; chosen by `m_tol` when absent.
    pub m: Option<usize>,
    pub m_tol: f64,
    /// Largest `m` in the LEES table.
    pub m_max: usize,
    /// Test points (nearest `V1/J`) reported by influence and relatif.
    /// All test points when absent.
    pub test_v1: Option<Vec<f64>>,
    /// Loss for influence-type gradients (labels known).
    pub influence_loss: LossKind,
    /// Loss for RUE and LEES (labels treated as unknown).
    pub deployment_loss: LossKind,
    pub top_k: usize,
    pub rue_threshold: f64,
    /// Median nonzero RUE of the reference run. When set, the threshold is
    /// rescaled by `median(this run) / rue_reference_median`.
    pub rue_reference_median: Option<f64>,
    pub hessian_cap: usize,
    /// Anomaly test point: the test point of this global sign closest to the
    /// phase boundary. Defaults to -1 for sign-balanced data, else +1.
    pub anomaly_test_sign: Option<i8>,
    pub anomaly_window: usize,
    pub anomaly_k: f64,
    pub permutations: usize,
    pub permutation_seed: u64,
    pub oracle: OracleConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Influence],
            b: 100,
            bootstrap_seed: 0,
            m: None,
            m_tol: 0.05,
            m_max: 50,
            test_v1: None,
            influence_loss: LossKind::GroundTruth,
            deployment_loss: LossKind::Minimal,
            top_k: 5,
            rue_threshold: 5e-5,
            rue_reference_median: None,
            hessian_cap: hessian_toolbox::hessian::DEFAULT_HESSIAN_CAP,
            anomaly_test_sign: None,
            anomaly_window: 6,
            anomaly_k: 5.0,
            permutations: 10_000,
            permutation_seed: 1,
            oracle: OracleConfig::default(),
        }
    }
}

/// The convex validation problem behind `method = "oracle"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub scale: f64,
    pub seed: u64,
    pub b: usize,
    pub bootstrap_seed: u64,
    pub g_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { features: 9, n_train: 50, n_test: 40, scale: 30.0, seed: 1, b: 200, bootstrap_seed: 11, g_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    /// Parse and validate; relative output paths are resolved against the
    /// directory of the config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.output.dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output.dir = parent.join(&cfg.output.dir);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.data.validate().map_err(|e| CliError::Config(format!("[data]: {e}")))?;
        self.train.validate().map_err(|e| CliError::Config(format!("[train]: {e}")))?;
        self.model_config()?;
        let a = &self.analysis;
        if a.methods.is_empty() {
            return Err(CliError::Config("[analysis]: methods is empty".into()));
        }
        if a.b == 0 || a.oracle.b == 0 {
            return Err(CliError::Config("[analysis]: b must be positive".into()));
        }
        if !(a.m_tol > 0.0) {
            return Err(CliError::Config("[analysis]: m_tol must be positive".into()));
        }
        if !(a.rue_threshold > 0.0) || a.rue_reference_median.is_some_and(|m| !(m > 0.0)) {
            return Err(CliError::Config("[analysis]: RUE threshold and reference median must be positive".into()));
        }
        if matches!(a.anomaly_test_sign, Some(s) if s != 1 && s != -1) {
            return Err(CliError::Config("[analysis]: anomaly_test_sign must be 1 or -1".into()));
        }
        if a.top_k == 0 || a.anomaly_window < 2 || a.permutations == 0 {
            return Err(CliError::Config("[analysis]: top_k, anomaly_window and permutations must be set".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> CliResult<ModelConfig> {
        let len = hilbert_dimension(self.data.l, self.data.l / 2)
            .map_err(|e| CliError::Config(format!("[data]: {e}")))?;
        self.model.build(len)
    }

    /// Replace every RNG seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.rng_seed = seed;
        self.model.init_seed = seed;
        self.train.rng_seed = seed;
        self.analysis.bootstrap_seed = seed;
        self.analysis.permutation_seed = seed;
    }

    pub fn anomaly_test_sign(&self) -> i8 {
        self.analysis.anomaly_test_sign.unwrap_or(match self.data.sign_mode {
            SignMode::Balanced => -1,
            _ => 1,
        })
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.output.dir.join("dataset.jsonl")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output.dir.join("checkpoint.json")
    }
}

/// Index of the entry of `xs` closest to `target`, first on ties.
pub fn nearest(xs: &[f64], target: f64) -> Option<usize> {
    (0..xs.len()).min_by(|&a, &b| (xs[a] - target).abs().total_cmp(&(xs[b] - target).abs()))
}

/// The transition-window test point: closest to the phase boundary.
pub fn transition_index(xs: &[f64]) -> Option<usize> {
    nearest(xs, PHASE_BOUNDARY)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::parse("[output]\ndir = \"x\"\n").unwrap();
        assert_eq!(cfg.data.l, 12);
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.analysis.b, 100);
        assert_eq!(cfg.model_config().unwrap().input_length, 924);
    }

    #[test]
    fn sections_round_trip() {
        let text = r#"
            [data]
            l = 8
            sign_mode = { imbalanced = 0.1 }
            [model]
            architecture = "cnn_fixed"
            [train]
            epochs = 10
            weight_decay = 1e-2
            [analysis]
            methods = ["rue", "lees"]
            m = 3
            [output]
            dir = "out"
        "#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.data.sign_mode, SignMode::Imbalanced(0.1));
        assert_eq!(cfg.analysis.methods, vec![Method::Rue, Method::Lees]);
        assert_eq!((cfg.train.epochs, cfg.train.weight_decay, cfg.train.momentum), (10, 1e-2, 0.9));
        let back = ExperimentConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            "[output]\ndir = \"x\"\n[analysis]\nmethods = []\n",
            "[output]\ndir = \"x\"\n[data]\nl = 7\n",
            "[output]\ndir = \"x\"\n[train]\nstep_size = -1.0\n",
            "[output]\ndir = \"x\"\n[analysis]\nbogus = 1\n",
            "[data]\nl = 8\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn nearest_prefers_first_on_ties() {
        assert_eq!(nearest(&[0.5, 1.5, 2.0], 1.0), Some(0));
        assert_eq!(transition_index(&[0.2, 0.9, 1.2]), Some(1));
        assert_eq!(nearest(&[], 1.0), None);
    }
}
