//! Process-level error classification.
//!
//! Every failure leaving a command maps onto one of three exit codes:
//! 1 for usage errors (bad flags or config), 2 for data errors (missing or
//! malformed inputs), 3 for numerical failures (non-finite values). The
//! conversions below pin each library error variant to a class once, so
//! command code can use `?` freely.

use std::fmt;

use dereverb_core::dataset::DatasetError;
use dereverb_core::diffusion::DiffusionError;
use dereverb_core::losses::LossError;
use dereverb_core::metrics::MetricError;
use dereverb_core::predictor::PredictorError;
use dereverb_core::rir::RirError;
use dereverb_core::schedule::ScheduleError;
use dereverb_core::stft::StftError;
use dereverb_core::wav::WavError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum CliError {
    /// The invocation itself is wrong: flags, config file, or their combination.
    Usage(String),
    /// Inputs are missing, unreadable, or inconsistent with each other.
    Data(String),
    /// A computation produced or met non-finite values.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

impl From<StftError> for CliError {
    fn from(e: StftError) -> Self {
        match e {
            StftError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            StftError::BadFftSize(_)
            | StftError::BadHop { .. }
            | StftError::BadSegmentLength(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::Stft(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::NonFiniteState { .. } | DiffusionError::NonFiniteInput { .. } => {
                CliError::Numerical(e.to_string())
            }
            DiffusionError::Schedule(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            PredictorError::BadTrainConfig(_)
            | PredictorError::StepCountMismatch { .. }
            | PredictorError::BinMismatch { .. }
            | PredictorError::StepOutOfRange { .. } => CliError::Usage(e.to_string()),
            PredictorError::Loss(inner) => inner.into(),
            PredictorError::Stft(inner) => inner.into(),
            PredictorError::Schedule(inner) => inner.into(),
            PredictorError::Diffusion(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<WavError> for CliError {
    fn from(e: WavError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<RirError> for CliError {
    fn from(e: RirError) -> Self {
        match e {
            RirError::BadGeometry(_)
            | RirError::BadRanges(_)
            | RirError::BadCeiling(_)
            | RirError::BadGain(_)
            | RirError::InfeasibleAbsorption { .. } => CliError::Usage(e.to_string()),
            RirError::InsufficientDecay { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::BadConfig(_) => CliError::Usage(e.to_string()),
            DatasetError::Wav(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::BadConfig(_) => CliError::Usage(e.to_string()),
            MetricError::Stft(inner) => inner.into(),
            MetricError::Dataset(inner) => (*inner).into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
