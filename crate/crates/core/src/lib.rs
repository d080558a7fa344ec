//! Cold-diffusion dereverberation for stereo percussive audio.
//!
//! The crate is organised around a deterministic degradation process in the
//! complex STFT domain: a reverberant recording is treated as the fully
//! degraded end point of a mixing schedule between the clean signal and its
//! wet counterpart. Restoration walks that schedule backwards, one predicted
//! step at a time.
//!
//! Modules:
//! - [`stft`]: stereo waveforms, real/imaginary spectro tensors, forward and
//!   inverse transforms with exact overlap-add reconstruction.
//! - [`schedule`]: the cosine-squared mixing schedule and its step sizes.
//! - [`diffusion`]: forward mixing, the [`diffusion::Predictor`] trait, and
//!   the two reverse samplers (direct and delta-normalized).
//! - [`losses`]: spectrogram and audio-domain training losses.
//! - [`predictor`]: a trainable per-step complex gain predictor with analytic
//!   gradients, Adam, EMA weights, and binary checkpoints.
//! - [`rir`]: shoebox image-source room impulse responses, T60 measurement,
//!   and wet rendering.
//! - [`dataset`]: corpus rendering into paired dry/wet examples with a JSONL
//!   manifest.
//! - [`metrics`]: evaluation metrics focused on transient fidelity.
//! - [`synth`]: seeded percussive test-signal generators.

pub mod dataset;
pub mod diffusion;
mod fft;
pub mod losses;
pub mod metrics;
pub mod predictor;
pub mod rir;
pub mod schedule;
pub mod stft;
pub mod synth;
pub mod wav;
