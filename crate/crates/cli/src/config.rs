//! Run configuration: a versioned TOML file mirroring the library's config
//! types, with command-line flags taking precedence over file values.
//!
//! Sections deliberately re-declare fields that the library types own when
//! sharing them verbatim would duplicate a knob (the dataset's STFT geometry
//! comes from `[stft]`, the training seed from the top-level `seed`, the room
//! sample rate from `[dataset]`). Unknown keys are rejected everywhere, and
//! each command writes the fully resolved configuration next to its outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dereverb_core::dataset::DatasetConfig;
use dereverb_core::losses::LossWeights;
use dereverb_core::metrics::MetricConfig;
use dereverb_core::predictor::TrainConfig;
use dereverb_core::rir::RoomRanges;
use dereverb_core::schedule::Schedule;
use dereverb_core::stft::StftConfig;

use crate::errors::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub config_version: u32,
    /// Single seed for every random draw a command makes.
    pub seed: u64,
    pub stft: StftConfig,
    pub schedule: ScheduleSection,
    pub loss: LossWeights,
    pub train: TrainSection,
    pub dataset: DatasetSection,
    pub rooms: RoomSection,
    pub metrics: MetricConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            config_version: CONFIG_VERSION,
            seed: 0,
            stft: StftConfig::default(),
            schedule: ScheduleSection::default(),
            loss: LossWeights::default(),
            train: TrainSection::default(),
            dataset: DatasetSection::default(),
            rooms: RoomSection::default(),
            metrics: MetricConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub steps: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { steps: 16 }
    }
}

/// Optimizer settings. The seed lives at the top level of the file, shared
/// with every other random draw of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub ema_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let core = TrainConfig::default();
        TrainSection {
            epochs: core.epochs,
            batch_size: core.batch_size,
            learning_rate: core.learning_rate,
            beta1: core.beta1,
            beta2: core.beta2,
            epsilon: core.epsilon,
            ema_decay: core.ema_decay,
        }
    }
}

impl TrainSection {
    pub fn to_core(self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            ema_decay: self.ema_decay,
            seed,
        }
    }
}

/// Rendering settings. The STFT geometry comes from `[stft]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub sample_rate: u32,
    pub wet_gain_db: f64,
    pub wet_gain_jitter_db: f64,
    pub peak_ceiling: f64,
    pub dry_rms_db: Option<f64>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let core = DatasetConfig::default();
        DatasetSection {
            sample_rate: core.sample_rate,
            wet_gain_db: core.wet_gain_db,
            wet_gain_jitter_db: core.wet_gain_jitter_db,
            peak_ceiling: core.peak_ceiling,
            dry_rms_db: core.dry_rms_db,
        }
    }
}

impl DatasetSection {
    pub fn to_core(self, stft: StftConfig) -> DatasetConfig {
        DatasetConfig {
            stft,
            sample_rate: self.sample_rate,
            wet_gain_db: self.wet_gain_db,
            wet_gain_jitter_db: self.wet_gain_jitter_db,
            peak_ceiling: self.peak_ceiling,
            dry_rms_db: self.dry_rms_db,
        }
    }
}

/// Synthetic room pool settings. The sample rate comes from `[dataset]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomSection {
    /// Number of rooms synthesized when no measured pool is given.
    pub count: usize,
    pub dim_x: [f64; 2],
    pub dim_y: [f64; 2],
    pub dim_z: [f64; 2],
    pub t60: [f64; 2],
    pub wall_margin: f64,
    pub min_separation: f64,
}

impl Default for RoomSection {
    fn default() -> Self {
        let core = RoomRanges::default();
        RoomSection {
            count: 16,
            dim_x: core.dim_x,
            dim_y: core.dim_y,
            dim_z: core.dim_z,
            t60: core.t60,
            wall_margin: core.wall_margin,
            min_separation: core.min_separation,
        }
    }
}

impl RoomSection {
    pub fn to_ranges(self, sample_rate: u32) -> RoomRanges {
        RoomRanges {
            dim_x: self.dim_x,
            dim_y: self.dim_y,
            dim_z: self.dim_z,
            t60: self.t60,
            wall_margin: self.wall_margin,
            min_separation: self.min_separation,
            sample_rate,
        }
    }
}

impl RunConfig {
    /// Reads the file, or starts from defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.config_version != CONFIG_VERSION {
            return Err(CliError::Usage(format!(
                "config_version {} is not supported, this build reads version {}",
                self.config_version, CONFIG_VERSION
            )));
        }
        self.stft
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.schedule()?;
        for (name, value) in [
            ("loss.lambda_audio", self.loss.lambda_audio),
            ("loss.delta_term", self.loss.delta_term),
            ("loss.state_term", self.loss.state_term),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(CliError::Usage(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        self.train
            .to_core(self.seed)
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.dataset
            .to_core(self.stft.clone())
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.rooms.count == 0 {
            return Err(CliError::Usage(
                "rooms.count must be at least 1".to_string(),
            ));
        }
        self.rooms
            .to_ranges(self.dataset.sample_rate)
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.metrics
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<Schedule, CliError> {
        Ok(Schedule::cosine_squared(self.schedule.steps)?)
    }

    /// Serializes the resolved configuration into `resolved_config.toml`
    /// inside `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Usage(format!("config serialization: {e}")))?;
        crate::commands::write_atomic(&dir.join("resolved_config.toml"), text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        config.validate().unwrap();
        let text = toml::to_string_pretty(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("config_version = 1\ntyop = 3\n").unwrap_err();
        assert!(err.to_string().contains("tyop"), "{err}");
        let err =
            toml::from_str::<RunConfig>("[train]\nseed = 7\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn flag_style_overrides_survive_resolution() {
        let mut config = RunConfig::default();
        config.seed = 99;
        config.train.epochs = 2;
        let text = toml::to_string_pretty(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, 99);
        assert_eq!(back.train.epochs, 2);
    }

    #[test]
    fn version_mismatch_is_a_usage_error() {
        let mut config = RunConfig::default();
        config.config_version = 2;
        let err = config.validate().unwrap_err();
        assert_eq!(err.exit_code(), crate::errors::EXIT_USAGE);
    }
}
