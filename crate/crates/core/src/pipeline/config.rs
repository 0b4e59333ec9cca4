use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, StftConfig};
use crate::mask::KMeansConfig;
use crate::nn::TrainConfig;
use crate::rl::RlConfig;

/// Mock recognizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Percentile of noisy-vs-clean training distances that maps to error 1.
    pub calibration_percentile: f64,
    pub dynamic_range_db: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            calibration_percentile: 95.0,
            dynamic_range_db: crate::metrics::LSD_DYNAMIC_RANGE_DB,
        }
    }
}

/// Full experiment description; every field defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub work_dir: PathBuf,
    pub seed: u64,
    pub sample_rate: u32,
    pub n_mels: usize,
    /// Frames per chunk.
    pub p: usize,
    /// Chunks per context; 11 for p = 1 and 5 otherwise when unset.
    pub context: Option<usize>,
    /// Declared network input dimension, checked against the chunk layout.
    pub input_dim: Option<usize>,
    pub clusters: usize,
    pub kmeans_max_iter: usize,
    /// One mask of `n_mels` bits shared by the `p` frames of a chunk.
    pub shared_mask: bool,
    pub snr_train_db: f64,
    pub snr_test_db: Vec<f64>,
    /// Hidden layer widths of the mask estimator.
    pub pretrain_hidden: Vec<usize>,
    /// Hidden layers added in front of the softmax action head.
    pub action_hidden: Vec<usize>,
    pub recognizer_timeout_secs: f64,
    pub stft: StftConfig,
    pub pretrain: TrainConfig,
    pub rl: RlConfig,
    pub mock: MockConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("work"),
            seed: 0,
            sample_rate: 16_000,
            n_mels: 64,
            p: 2,
            context: None,
            input_dim: None,
            clusters: 32,
            kmeans_max_iter: 100,
            shared_mask: false,
            snr_train_db: 5.0,
            snr_test_db: vec![0.0, 5.0],
            pretrain_hidden: Vec::new(),
            action_hidden: vec![64],
            recognizer_timeout_secs: 60.0,
            stft: StftConfig::default(),
            pretrain: TrainConfig {
                learning_rate: 0.1,
                epochs: 30,
                batch_size: 16,
                seed: 0,
            },
            rl: RlConfig::default(),
            mock: MockConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if cfg.work_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.work_dir = parent.join(&cfg.work_dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Configuration with `seed` applied to every stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.pretrain.seed = seed;
        self.rl.seed = seed;
        self.rl.train.seed = seed;
        self
    }

    pub fn context_len(&self) -> usize {
        self.context.unwrap_or(if self.p == 1 { 11 } else { 5 })
    }

    pub fn mask_dim(&self) -> usize {
        if self.shared_mask {
            self.n_mels
        } else {
            self.p * self.n_mels
        }
    }

    pub fn network_input_dim(&self) -> usize {
        self.context_len() * self.p * self.n_mels
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.context_len() == 0 || self.n_mels == 0 {
            return Err(Error::invalid("p, context and n_mels must be positive"));
        }
        if self.clusters < 2 {
            return Err(Error::invalid("need at least 2 clusters"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(declared) = self.input_dim {
            if declared != self.network_input_dim() {
                return Err(Error::invalid(format!(
                    "declared input_dim {declared} != context {} x p {} x n_mels {} = {}",
                    self.context_len(),
                    self.p,
                    self.n_mels,
                    self.network_input_dim()
                )));
            }
        }
        if self.snr_test_db.is_empty() {
            return Err(Error::invalid("need at least one test SNR"));
        }
        if self.recognizer_timeout_secs.is_nan() || self.recognizer_timeout_secs <= 0.0 {
            return Err(Error::invalid("recognizer timeout must be positive"));
        }
        if self.rl.alpha.is_nan() || self.rl.alpha <= 0.0 {
            return Err(Error::invalid("alpha must be positive"));
        }
        self.stft.validate()?;
        self.pretrain.validate()?;
        self.rl.train.validate()?;
        Ok(())
    }

    pub fn extractor(&self) -> Result<FeatureExtractor> {
        FeatureExtractor::new(self.stft, self.n_mels, self.sample_rate)
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            clusters: self.clusters,
            seed: self.seed,
            max_iter: self.kmeans_max_iter,
        }
    }
}
