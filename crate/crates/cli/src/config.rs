use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use intele_core::genmodel::GeneratorConfig;
use intele_core::intele::{HyperParams, ModelConfig};
use serde::{Deserialize, Serialize};

pub const GENERALIZATION: &str = include_str!("../presets/generalization.toml");
pub const IDENTIFIABILITY: &str = include_str!("../presets/identifiability.toml");

/// Run-level settings that are not part of the generator or the trainer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub preset: String,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            preset: "custom".into(),
            seeds: vec![1, 2, 3],
            out_dir: None,
            n_train: 4000,
            n_test: 1000,
        }
    }
}

/// Whole experiment description, one TOML section per component.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub generator: GeneratorConfig,
    pub model: ModelConfig,
    pub training: HyperParams,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Built-in preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        let text = match name {
            "generalization" => GENERALIZATION,
            "identifiability" => IDENTIFIABILITY,
            _ => return None,
        };
        Some(Self::parse(text).expect("shipped presets parse"))
    }

    /// Reads a config file; a bare preset name that is not an existing path
    /// selects the built-in preset.
    pub fn load(spec: &Path) -> Result<Self> {
        if !spec.exists() {
            if let Some(cfg) = spec.to_str().and_then(Self::preset) {
                return Ok(cfg);
            }
        }
        let text = std::fs::read_to_string(spec)
            .with_context(|| format!("cannot read config {}", spec.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", spec.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        if self.experiment.seeds.is_empty() {
            bail!("experiment.seeds must not be empty");
        }
        if self.experiment.n_train == 0 || self.experiment.n_test == 0 {
            bail!("experiment.n_train and experiment.n_test must be positive");
        }
        Ok(())
    }

    /// Sets both the world seed and the training seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.generator.seed = seed;
        self.training.seed = seed;
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
