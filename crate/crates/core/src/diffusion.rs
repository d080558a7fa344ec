//! Deterministic degradation and its reverse samplers.
//!
//! The forward process mixes a clean spectro tensor toward its reverberant
//! counterpart along the schedule: at step `t` the state keeps `a_t` of the
//! clean signal and `1 - a_t` of the wet one. The reverse process starts from
//! the wet tensor and asks a predictor, step by step, either for the previous
//! state directly or for a step-normalized increment toward it.

use thiserror::Error;

use crate::schedule::{Schedule, ScheduleError};
use crate::stft::SpectroTensor;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("tensor layouts disagree in {context}")]
    LayoutMismatch { context: &'static str },
    #[error("non-finite values entered the state at step {t}")]
    NonFiniteState { t: usize },
    #[error("non-finite values in {context}")]
    NonFiniteInput { context: &'static str },
    #[error("predictor failed at step {t}: {message}")]
    PredictorFailed { t: usize, message: String },
}

/// What the predictor's output means to the reverse sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseMode {
    /// The network output is the previous state itself.
    Direct,
    /// The network output is the per-step increment, scaled by the step size
    /// before being added to the state.
    DeltaNormalized,
}

/// A model of one reverse step: given the state at step `t` (in `1..=steps`),
/// produce either the previous state or the normalized increment, depending
/// on the [`ReverseMode`] the caller runs it under.
pub trait Predictor {
    fn predict(&self, state: &SpectroTensor, t: usize) -> Result<SpectroTensor, DiffusionError>;
}

/// State of the forward process at step `t`: `a_t * clean + (1 - a_t) * wet`.
///
/// `t = 0` returns the clean tensor and `t = steps` the wet one, exactly.
pub fn forward_mix(
    clean: &SpectroTensor,
    wet: &SpectroTensor,
    schedule: &Schedule,
    t: usize,
) -> Result<SpectroTensor, DiffusionError> {
    if !clean.same_layout(wet) {
        return Err(DiffusionError::LayoutMismatch {
            context: "forward_mix inputs",
        });
    }
    if !clean.is_finite() || !wet.is_finite() {
        return Err(DiffusionError::NonFiniteInput {
            context: "forward_mix inputs",
        });
    }
    let a = schedule.level(t)?;
    let mut out = clean.clone();
    for (slot, (&x, &y)) in out
        .data_mut()
        .iter_mut()
        .zip(clean.data().iter().zip(wet.data()))
    {
        *slot = a * x + (1.0 - a) * y;
    }
    Ok(out)
}

/// Predictor with access to the ground-truth endpoints. Its reverse
/// trajectory reproduces the forward trajectory; tests and the oracle
/// processing mode rely on that.
pub struct OraclePredictor {
    clean: SpectroTensor,
    wet: SpectroTensor,
    schedule: Schedule,
    mode: ReverseMode,
}

impl OraclePredictor {
    pub fn new(
        clean: SpectroTensor,
        wet: SpectroTensor,
        schedule: Schedule,
        mode: ReverseMode,
    ) -> Result<Self, DiffusionError> {
        if !clean.same_layout(&wet) {
            return Err(DiffusionError::LayoutMismatch {
                context: "oracle endpoints",
            });
        }
        if !clean.is_finite() || !wet.is_finite() {
            return Err(DiffusionError::NonFiniteInput {
                context: "oracle endpoints",
            });
        }
        Ok(OraclePredictor {
            clean,
            wet,
            schedule,
            mode,
        })
    }
}

impl Predictor for OraclePredictor {
    fn predict(&self, state: &SpectroTensor, t: usize) -> Result<SpectroTensor, DiffusionError> {
        if !state.same_layout(&self.clean) {
            return Err(DiffusionError::LayoutMismatch {
                context: "oracle state",
            });
        }
        match self.mode {
            ReverseMode::Direct => forward_mix(&self.clean, &self.wet, &self.schedule, t - 1),
            // The normalized increment (x_{t-1} - x_t) / g_t collapses to
            // clean - wet, independent of t.
            ReverseMode::DeltaNormalized => {
                let mut out = self.clean.clone();
                for (slot, &y) in out.data_mut().iter_mut().zip(self.wet.data()) {
                    *slot -= y;
                }
                Ok(out)
            }
        }
    }
}

/// Adapter exposing a direct-mode predictor to the delta-normalized sampler:
/// the increment is recovered as `(predicted_prev - state) / g_t`.
pub struct DeltaFromDirect<P> {
    inner: P,
    schedule: Schedule,
}

impl<P: Predictor> DeltaFromDirect<P> {
    pub fn new(inner: P, schedule: Schedule) -> Self {
        DeltaFromDirect { inner, schedule }
    }
}

impl<P: Predictor> Predictor for DeltaFromDirect<P> {
    fn predict(&self, state: &SpectroTensor, t: usize) -> Result<SpectroTensor, DiffusionError> {
        let g = self.schedule.step_size(t)?;
        let mut out = self.inner.predict(state, t)?;
        if !out.same_layout(state) {
            return Err(DiffusionError::LayoutMismatch {
                context: "adapted prediction",
            });
        }
        for (slot, &x) in out.data_mut().iter_mut().zip(state.data()) {
            *slot = (*slot - x) / g;
        }
        Ok(out)
    }
}

fn apply_step(
    state: &mut SpectroTensor,
    prediction: SpectroTensor,
    mode: ReverseMode,
    g: f64,
    t: usize,
) -> Result<(), DiffusionError> {
    if !prediction.same_layout(state) {
        return Err(DiffusionError::LayoutMismatch {
            context: "prediction vs state",
        });
    }
    match mode {
        ReverseMode::Direct => *state = prediction,
        ReverseMode::DeltaNormalized => {
            for (slot, &v) in state.data_mut().iter_mut().zip(prediction.data()) {
                *slot += g * v;
            }
        }
    }
    if !state.is_finite() {
        return Err(DiffusionError::NonFiniteState { t });
    }
    Ok(())
}

/// Full reverse pass from the wet tensor to the clean estimate.
pub fn reverse_sample(
    wet: &SpectroTensor,
    predictor: &dyn Predictor,
    schedule: &Schedule,
    mode: ReverseMode,
) -> Result<SpectroTensor, DiffusionError> {
    if !wet.is_finite() {
        return Err(DiffusionError::NonFiniteInput {
            context: "reverse_sample input",
        });
    }
    let mut state = wet.clone();
    for t in (1..=schedule.steps()).rev() {
        let g = schedule.step_size(t)?;
        let prediction = predictor.predict(&state, t)?;
        apply_step(&mut state, prediction, mode, g, t)?;
    }
    Ok(state)
}

/// Reverse pass that keeps every intermediate state. Index `t` of the result
/// is the state at level `t`: entry `steps` is the wet input, entry 0 the
/// final estimate.
pub fn reverse_trajectory(
    wet: &SpectroTensor,
    predictor: &dyn Predictor,
    schedule: &Schedule,
    mode: ReverseMode,
) -> Result<Vec<SpectroTensor>, DiffusionError> {
    if !wet.is_finite() {
        return Err(DiffusionError::NonFiniteInput {
            context: "reverse_trajectory input",
        });
    }
    let steps = schedule.steps();
    let mut trajectory = vec![wet.clone(); steps + 1];
    let mut state = wet.clone();
    for t in (1..=steps).rev() {
        let g = schedule.step_size(t)?;
        let prediction = predictor.predict(&state, t)?;
        apply_step(&mut state, prediction, mode, g, t)?;
        trajectory[t - 1] = state.clone();
    }
    Ok(trajectory)
}
