//! Versioned experiment configuration, read from TOML.
//!
//! ```toml
//! version = 1
//! seed = 0
//! repeats = 5
//! stage = "HF&L1&Ensemble"
//!
//! [dataset]
//! path = "data/pendigits.csv"
//! label = "last"
//!
//! [hessae]
//! hidden = [80, 30, 10]
//! lambda = 1e-4
//! beta = 4.0
//! rho = 0.05
//! epochs = 1000
//!
//! [svm]
//! c_grid = [0.1, 1.0, 10.0, 100.0]
//! ```
//!
//! `[lasso]`, `[wlppd]`, `[svm]` and `[ensemble]` are optional; missing keys
//! take the library defaults.

use std::path::{Path, PathBuf};

use hybridae::dataset::LabelColumn;
use hybridae::ensemble::EnsembleConfig;
use hybridae::hessae::HessaeConfig;
use hybridae::lasso::LassoConfig;
use hybridae::pipeline::{PipelineConfig, Stage};
use hybridae::svm::SvmConfig;
use hybridae::wlppd::WlppdConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// `"last"`, a zero-based column index, or a header name.
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_label() -> String {
    "last".into()
}

impl DatasetConfig {
    pub fn label_column(&self) -> LabelColumn {
        self.label.parse().expect("infallible")
    }
}

/// Autoencoder architecture and penalties; every training phase shares the
/// epoch budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessaeSection {
    pub hidden: Vec<usize>,
    pub lambda: f64,
    pub beta: f64,
    pub rho: f64,
    pub epochs: usize,
}

impl HessaeSection {
    pub fn resolve(&self) -> HessaeConfig {
        HessaeConfig::new(self.hidden.clone(), self.lambda, self.beta, self.rho, self.epochs)
    }

    /// Known architectures by name: `pen-digits`, `statlog`, `urban`, `small-sample`.
    pub fn preset(name: &str) -> Option<Self> {
        let (hidden, lambda, beta, rho, epochs) = match name {
            "pen-digits" => (vec![80, 30, 10], 1e-4, 4.0, 0.05, 1000),
            "statlog" => (vec![120, 60, 20], 1e-3, 5.0, 0.05, 1000),
            "urban" => (vec![600, 300, 80], 1e-3, 2.0, 0.07, 600),
            "small-sample" => (vec![100, 50, 25], 1e-5, 5.0, 0.02, 500),
            _ => return None,
        };
        Some(Self { hidden, lambda, beta, rho, epochs })
    }

    /// Preset guessed from a dataset file name; `small-sample` otherwise.
    pub fn for_dataset(path: &Path) -> Self {
        let stem = path.file_stem().map(|s| s.to_string_lossy().to_lowercase()).unwrap_or_default();
        let name = if stem.contains("pen") {
            "pen-digits"
        } else if stem.contains("statlog") || stem.contains("sat") {
            "statlog"
        } else if stem.contains("urban") {
            "urban"
        } else {
            "small-sample"
        };
        Self::preset(name).expect("known preset")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Stage trained by `train` and `evaluate` runs.
    #[serde(default = "default_stage")]
    pub stage: Stage,
    pub dataset: DatasetConfig,
    pub hessae: HessaeSection,
    #[serde(default)]
    pub lasso: LassoConfig,
    #[serde(default)]
    pub wlppd: WlppdConfig,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
}

fn default_repeats() -> usize {
    5
}

fn default_test_fraction() -> f64 {
    1.0 / 3.0
}

fn default_stage() -> Stage {
    Stage::Full
}

impl ExperimentConfig {
    /// Defaults for a dataset, with the architecture guessed from its name.
    pub fn for_dataset(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            repeats: default_repeats(),
            test_fraction: default_test_fraction(),
            stage: default_stage(),
            hessae: HessaeSection::for_dataset(&path),
            dataset: DatasetConfig { path, label: default_label() },
            lasso: LassoConfig::default(),
            wlppd: WlppdConfig::default(),
            svm: SvmConfig::default(),
            ensemble: EnsembleConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            hessae: self.hessae.resolve(),
            lasso: self.lasso,
            wlppd: self.wlppd.clone(),
            svm: self.svm.clone(),
            ensemble: self.ensemble.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(HarnessError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.repeats == 0 {
            return Err(HarnessError::Config("repeats must be at least 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(HarnessError::Config(format!("test_fraction {} not in (0, 1)", self.test_fraction)));
        }
        self.pipeline().validate()?;
        Ok(())
    }
}
