//! Run configuration: a TOML file of top-level keys and `[section]` tables,
//! overlaid by command-line flags.
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/bwv847"
//!
//! [paths]
//! train_dir = "fixtures/midi/train"
//! midi = "fixtures/midi/heldout/joplin_maple_leaf_rag.mid"
//! params = "runs/vae.params"
//!
//! [vae]
//! epochs = 100
//!
//! [analysis]
//! rates = [10, 50, 10000]
//!
//! [mine]
//! epochs = 300
//! ```
//!
//! Relative paths are taken relative to the working directory.

use std::path::{Path, PathBuf};

use infodyn::dynamics::{AnalysisConfig, PriorKind};
use infodyn::midi::{RollConfig, DEFAULT_STEPS_PER_BAR};
use infodyn::mine::MineConfig;
use infodyn::rate::ChannelInput;
use infodyn::vae::VaeTrainConfig;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub log_level: Option<String>,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub roll: RollSection,
    #[serde(default)]
    pub vae: VaeSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub mine: MineSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub train_dir: Option<PathBuf>,
    pub midi: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollSection {
    pub steps_per_quarter: Option<u32>,
    pub steps_per_bar: Option<usize>,
    pub pitch_lo: Option<u8>,
    pub pitch_hi: Option<u8>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub kl_weight: Option<f64>,
    pub latent_dim: Option<usize>,
    pub hidden_dim: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub rates: Option<Vec<u64>>,
    pub lag: Option<usize>,
    pub theta_candidates: Option<usize>,
    pub channel_input: Option<ChannelInput>,
    pub prior: Option<PriorKind>,
    pub plots: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MineSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub bias_correction: Option<bool>,
    pub use_samples: Option<bool>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Usage(
                "a seed is required: pass --seed or set `seed` in the config file".into(),
            )
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn roll(&self) -> Result<(RollConfig, usize), CliError> {
        let d = RollConfig::default();
        let cfg = RollConfig {
            steps_per_quarter: self.roll.steps_per_quarter.unwrap_or(d.steps_per_quarter),
            pitch_lo: self.roll.pitch_lo.unwrap_or(d.pitch_lo),
            pitch_hi: self.roll.pitch_hi.unwrap_or(d.pitch_hi),
        };
        if cfg.pitch_lo >= cfg.pitch_hi || cfg.pitch_hi > 128 || cfg.steps_per_quarter == 0 {
            return Err(CliError::Usage(format!("invalid [roll] settings: {cfg:?}")));
        }
        Ok((
            cfg,
            self.roll.steps_per_bar.unwrap_or(DEFAULT_STEPS_PER_BAR),
        ))
    }

    pub fn vae(&self, seed: u64) -> VaeTrainConfig {
        let d = VaeTrainConfig::default();
        VaeTrainConfig {
            epochs: self.vae.epochs.unwrap_or(d.epochs),
            batch_size: self.vae.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.vae.learning_rate.unwrap_or(d.learning_rate),
            kl_weight: self.vae.kl_weight.unwrap_or(d.kl_weight),
            rng_seed: seed,
            latent_dim: self.vae.latent_dim.unwrap_or(d.latent_dim),
            hidden_dim: self.vae.hidden_dim.or(d.hidden_dim),
        }
    }

    pub fn mine(&self, seed: u64) -> MineConfig {
        let d = MineConfig::default();
        MineConfig {
            epochs: self.mine.epochs.unwrap_or(d.epochs),
            batch_size: self.mine.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.mine.learning_rate.unwrap_or(d.learning_rate),
            seed,
            hidden: self.mine.hidden.unwrap_or(d.hidden),
            dropout: self.mine.dropout.unwrap_or(d.dropout),
            bias_correction: self.mine.bias_correction.unwrap_or(d.bias_correction),
            ema_rate: d.ema_rate,
        }
    }

    pub fn analysis(&self, seed: u64) -> AnalysisConfig {
        let d = AnalysisConfig::default();
        let channel_input = match (self.analysis.channel_input, self.mine.use_samples) {
            (Some(c), _) => c,
            (None, Some(true)) => ChannelInput::Sample,
            _ => d.channel_input,
        };
        AnalysisConfig {
            rates: self.analysis.rates.clone().unwrap_or(d.rates),
            lag: self.analysis.lag.unwrap_or(d.lag),
            seed,
            theta_candidates: self.analysis.theta_candidates.unwrap_or(d.theta_candidates),
            channel_input,
            prior: self.analysis.prior.unwrap_or(d.prior),
            mine: self.mine(d.mine.seed),
        }
    }
}
