//! Training losses.
//!
//! The objective is a spectrogram-domain L1 term plus a weighted audio-domain
//! L1 term computed after resynthesis. In delta-normalized mode the
//! spectrogram term itself blends two pieces: distance to the normalized
//! increment and distance of the implied previous state. All L1 values are
//! means over every tensor (or sample) entry.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::ReverseMode;
use crate::stft::{istft_adjoint, istft_inverse, SpectroTensor, StftConfig, StftError, Waveform};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("tensor layouts disagree in {context}")]
    LayoutMismatch { context: &'static str },
    #[error("step size must be positive and finite, got {0}")]
    BadStepSize(f64),
    #[error(transparent)]
    Stft(#[from] StftError),
}

/// Relative weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Weight of the audio-domain term in the total.
    pub lambda_audio: f64,
    /// Weight of the increment term inside the delta-mode spectrogram loss.
    pub delta_term: f64,
    /// Weight of the implied-state term inside the delta-mode spectrogram loss.
    pub state_term: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_audio: 8.0,
            delta_term: 0.7,
            state_term: 0.3,
        }
    }
}

/// The total together with its two ingredients:
/// `total = spectral + lambda_audio * audio`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub spectral: f64,
    pub audio: f64,
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    sum / a.len() as f64
}

fn check_step(g: f64) -> Result<(), LossError> {
    if !g.is_finite() || g <= 0.0 {
        return Err(LossError::BadStepSize(g));
    }
    Ok(())
}

/// Mean absolute difference over all tensor entries.
pub fn l1(a: &SpectroTensor, b: &SpectroTensor) -> Result<f64, LossError> {
    if !a.same_layout(b) {
        return Err(LossError::LayoutMismatch { context: "l1 inputs" });
    }
    Ok(mean_abs_diff(a.data(), b.data()))
}

/// Regression target for delta-normalized training:
/// `(x_prev - x_t) / g`, the step-normalized increment.
pub fn delta_target(
    x_prev: &SpectroTensor,
    x_t: &SpectroTensor,
    g: f64,
) -> Result<SpectroTensor, LossError> {
    if !x_prev.same_layout(x_t) {
        return Err(LossError::LayoutMismatch {
            context: "delta_target inputs",
        });
    }
    check_step(g)?;
    let mut out = x_prev.clone();
    for (slot, &x) in out.data_mut().iter_mut().zip(x_t.data()) {
        *slot = (*slot - x) / g;
    }
    Ok(out)
}

/// State implied by a prediction: the prediction itself in direct mode,
/// `x_t + g * prediction` in delta mode.
fn implied_state(
    mode: ReverseMode,
    prediction: &SpectroTensor,
    x_t: &SpectroTensor,
    g: f64,
) -> SpectroTensor {
    match mode {
        ReverseMode::Direct => prediction.clone(),
        ReverseMode::DeltaNormalized => {
            let mut out = x_t.clone();
            for (slot, &p) in out.data_mut().iter_mut().zip(prediction.data()) {
                *slot += g * p;
            }
            out
        }
    }
}

fn check_inputs(
    prediction: &SpectroTensor,
    x_prev: &SpectroTensor,
    x_t: &SpectroTensor,
    g: f64,
) -> Result<(), LossError> {
    if !prediction.same_layout(x_prev) || !prediction.same_layout(x_t) {
        return Err(LossError::LayoutMismatch {
            context: "loss inputs",
        });
    }
    check_step(g)
}

/// Spectrogram-domain loss term.
pub fn spectral_loss(
    mode: ReverseMode,
    prediction: &SpectroTensor,
    x_prev: &SpectroTensor,
    x_t: &SpectroTensor,
    g: f64,
    weights: &LossWeights,
) -> Result<f64, LossError> {
    check_inputs(prediction, x_prev, x_t, g)?;
    match mode {
        ReverseMode::Direct => Ok(mean_abs_diff(prediction.data(), x_prev.data())),
        ReverseMode::DeltaNormalized => {
            let target = delta_target(x_prev, x_t, g)?;
            let state = implied_state(mode, prediction, x_t, g);
            Ok(weights.delta_term * mean_abs_diff(prediction.data(), target.data())
                + weights.state_term * mean_abs_diff(state.data(), x_prev.data()))
        }
    }
}

/// Audio-domain loss term: mean absolute sample difference after
/// resynthesizing both states to `out_len` samples.
pub fn audio_loss(
    predicted_state: &SpectroTensor,
    target_state: &SpectroTensor,
    config: &StftConfig,
    out_len: usize,
) -> Result<f64, LossError> {
    if !predicted_state.same_layout(target_state) {
        return Err(LossError::LayoutMismatch {
            context: "audio_loss inputs",
        });
    }
    let predicted = istft_inverse(predicted_state, config, out_len)?;
    let target = istft_inverse(target_state, config, out_len)?;
    let sum = mean_abs_diff(predicted.left(), target.left())
        + mean_abs_diff(predicted.right(), target.right());
    Ok(0.5 * sum)
}

/// Full training loss for one example at one step.
pub fn total_loss(
    mode: ReverseMode,
    prediction: &SpectroTensor,
    x_prev: &SpectroTensor,
    x_t: &SpectroTensor,
    g: f64,
    weights: &LossWeights,
    config: &StftConfig,
    out_len: usize,
) -> Result<LossBreakdown, LossError> {
    let spectral = spectral_loss(mode, prediction, x_prev, x_t, g, weights)?;
    let audio = match mode {
        ReverseMode::Direct => audio_loss(prediction, x_prev, config, out_len)?,
        ReverseMode::DeltaNormalized => {
            let state = implied_state(mode, prediction, x_t, g);
            audio_loss(&state, x_prev, config, out_len)?
        }
    };
    Ok(LossBreakdown {
        total: spectral + weights.lambda_audio * audio,
        spectral,
        audio,
    })
}

/// Sign with the subgradient convention `sign(0) = 0`.
#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// [`total_loss`] together with its gradient with respect to the prediction
/// tensor. Exact L1 subgradients with `sign(0) = 0`; the audio term's
/// gradient flows back through the adjoint of the inverse transform.
pub(crate) fn total_loss_and_pred_grad(
    mode: ReverseMode,
    prediction: &SpectroTensor,
    x_prev: &SpectroTensor,
    x_t: &SpectroTensor,
    g: f64,
    weights: &LossWeights,
    config: &StftConfig,
    out_len: usize,
) -> Result<(LossBreakdown, SpectroTensor), LossError> {
    check_inputs(prediction, x_prev, x_t, g)?;
    let entries = prediction.data().len() as f64;
    let mut grad = SpectroTensor::zeros(
        prediction.fft_size(),
        prediction.hop(),
        prediction.sample_rate(),
        prediction.frames(),
    );

    let state = implied_state(mode, prediction, x_t, g);
    let spectral = match mode {
        ReverseMode::Direct => {
            let mut sum = 0.0;
            for ((slot, &p), &xp) in grad
                .data_mut()
                .iter_mut()
                .zip(prediction.data())
                .zip(x_prev.data())
            {
                sum += (p - xp).abs();
                *slot = sign(p - xp) / entries;
            }
            sum / entries
        }
        ReverseMode::DeltaNormalized => {
            let target = delta_target(x_prev, x_t, g)?;
            let mut delta_sum = 0.0;
            let mut state_sum = 0.0;
            for i in 0..prediction.data().len() {
                let d_delta = prediction.data()[i] - target.data()[i];
                let d_state = state.data()[i] - x_prev.data()[i];
                delta_sum += d_delta.abs();
                state_sum += d_state.abs();
                grad.data_mut()[i] = (weights.delta_term * sign(d_delta)
                    + weights.state_term * g * sign(d_state))
                    / entries;
            }
            weights.delta_term * delta_sum / entries + weights.state_term * state_sum / entries
        }
    };

    let predicted_wave = istft_inverse(&state, config, out_len)?;
    let target_wave = istft_inverse(x_prev, config, out_len)?;
    let wave_entries = (2 * out_len) as f64;
    let mut audio_sum = 0.0;
    let mut residual_sign = Waveform::silence(out_len, predicted_wave.sample_rate());
    for side in 0..2 {
        for i in 0..out_len {
            let d = predicted_wave.channel(side)[i] - target_wave.channel(side)[i];
            audio_sum += d.abs();
            residual_sign.channel_mut(side)[i] = sign(d) / wave_entries;
        }
    }
    let audio = audio_sum / wave_entries;

    let state_grad = istft_adjoint(&residual_sign, config, prediction.frames())?;
    let chain = match mode {
        ReverseMode::Direct => weights.lambda_audio,
        ReverseMode::DeltaNormalized => weights.lambda_audio * g,
    };
    for (slot, &v) in grad.data_mut().iter_mut().zip(state_grad.data()) {
        *slot += chain * v;
    }

    Ok((
        LossBreakdown {
            total: spectral + weights.lambda_audio * audio,
            spectral,
            audio,
        },
        grad,
    ))
}
