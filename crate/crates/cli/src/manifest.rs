//! Run manifests: what was run, with which seeds, how long each stage took
//! and which files it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub train: u64,
    pub bootstrap: u64,
    pub permutation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the effective configuration (after overrides).
    pub config_hash: String,
    pub seeds: Seeds,
    pub timings: Vec<Timing>,
    /// Files written by the run, relative to the output directory.
    pub artifacts: Vec<String>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> CliResult<Self> {
        Ok(Self {
            command: command.to_string(),
            config_hash: config_hash(cfg)?,
            seeds: Seeds {
                data: cfg.data.rng_seed,
                init: cfg.model.init_seed,
                train: cfg.train.rng_seed,
                bootstrap: cfg.analysis.bootstrap_seed,
                permutation: cfg.analysis.permutation_seed,
            },
            timings: Vec::new(),
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    /// Run `f` and record its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
        let start = Instant::now();
        let out = f()?;
        self.timings.push(Timing { stage: stage.to_string(), seconds: start.elapsed().as_secs_f64() });
        Ok(out)
    }

    pub fn artifact(&mut self, dir: &Path, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path);
        self.artifacts.push(rel.display().to_string());
    }

    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(format!("manifest-{}.json", self.command));
        let text = serde_json::to_string_pretty(self).map_err(hessian_toolbox::Error::from)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &ExperimentConfig) -> CliResult<String> {
    let text = toml::to_string(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// SHA-256 of the concatenated contents of `paths`, each prefixed by its
/// length so that different splits of the same bytes hash differently.
pub fn files_hash(paths: &[&Path]) -> CliResult<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ExperimentConfig::parse("[output]\ndir = \"x\"\n").unwrap();
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.override_seed(7);
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
