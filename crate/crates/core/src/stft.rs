//! Stereo waveforms and their complex STFT representation.
//!
//! Spectrograms are stored as a real tensor of shape `[4][bins][frames]`
//! where the four channels stack real and imaginary parts of the left and
//! right audio channels: `[Re L, Im L, Re R, Im R]`. Both analysis and
//! synthesis apply a periodic Hann window; overlap-add is normalized by the
//! summed squared window, which makes reconstruction exact (up to float
//! rounding) wherever that sum is nonzero.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft;

/// Channel index of the real part of the left audio channel.
pub const RE_LEFT: usize = 0;
/// Channel index of the imaginary part of the left audio channel.
pub const IM_LEFT: usize = 1;
/// Channel index of the real part of the right audio channel.
pub const RE_RIGHT: usize = 2;
/// Channel index of the imaginary part of the right audio channel.
pub const IM_RIGHT: usize = 3;
/// Number of stacked real channels in a [`SpectroTensor`].
pub const TENSOR_CHANNELS: usize = 4;

/// Overlap-add normalization below this level counts as a dead region and
/// synthesizes silence instead of amplifying rounding noise.
const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StftError {
    #[error("left and right channels differ in length ({left} vs {right})")]
    ChannelLengthMismatch { left: usize, right: usize },
    #[error("{context} contains a non-finite sample")]
    NonFinite { context: &'static str },
    #[error("signal of {len} samples is shorter than the required {need}")]
    TooShort { len: usize, need: usize },
    #[error("fft size must be an even number of at least 4, got {0}")]
    BadFftSize(usize),
    #[error("hop {hop} must lie in 1..={fft_size}")]
    BadHop { hop: usize, fft_size: usize },
    #[error("segment length must be positive, got {0} s")]
    BadSegmentLength(f64),
    #[error("tensor layout ({bins} bins, fft {fft_size}, hop {hop}) does not match the config ({want_bins} bins, fft {want_fft}, hop {want_hop})")]
    LayoutMismatch {
        bins: usize,
        fft_size: usize,
        hop: usize,
        want_bins: usize,
        want_fft: usize,
        want_hop: usize,
    },
    #[error("sample rate must be positive")]
    ZeroSampleRate,
}

/// How a window is tapered. Only Hann is currently used; the enum keeps the
/// window choice visible in serialized configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
}

impl WindowKind {
    /// Window coefficients in periodic form, suitable for spectral analysis.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..len)
                .map(|i| {
                    let phase = std::f64::consts::PI * i as f64 / len as f64;
                    let s = phase.sin();
                    s * s
                })
                .collect(),
        }
    }
}

/// Transform geometry shared by analysis, synthesis, and segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    /// Length of a training excerpt in seconds.
    pub segment_seconds: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            fft_size: 1024,
            hop: 384,
            window: WindowKind::Hann,
            segment_seconds: 2.0,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<(), StftError> {
        if self.fft_size < 4 || !self.fft_size.is_multiple_of(2) {
            return Err(StftError::BadFftSize(self.fft_size));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(StftError::BadHop {
                hop: self.hop,
                fft_size: self.fft_size,
            });
        }
        if !self.segment_seconds.is_finite() || self.segment_seconds <= 0.0 {
            return Err(StftError::BadSegmentLength(self.segment_seconds));
        }
        Ok(())
    }

    /// Number of frequency bins of the one-sided spectrum.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count produced for a centered transform of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    /// Segment length in samples at the given rate.
    pub fn segment_samples(&self, sample_rate: u32) -> usize {
        (self.segment_seconds * sample_rate as f64).round() as usize
    }
}

/// A stereo signal in float64. Channels always have equal length.
#[derive(Debug, Clone)]
pub struct Waveform {
    left: Vec<f64>,
    right: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn from_channels(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self, StftError> {
        if left.len() != right.len() {
            return Err(StftError::ChannelLengthMismatch {
                left: left.len(),
                right: right.len(),
            });
        }
        if sample_rate == 0 {
            return Err(StftError::ZeroSampleRate);
        }
        Ok(Waveform {
            left,
            right,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Waveform {
            left: vec![0.0; len],
            right: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    /// Audio channel by index: 0 = left, 1 = right.
    pub fn channel(&self, index: usize) -> &[f64] {
        match index {
            0 => &self.left,
            1 => &self.right,
            _ => panic!("audio channel index {index} out of range"),
        }
    }

    pub fn channel_mut(&mut self, index: usize) -> &mut [f64] {
        match index {
            0 => &mut self.left,
            1 => &mut self.right,
            _ => panic!("audio channel index {index} out of range"),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.left.iter().chain(self.right.iter()).all(|v| v.is_finite())
    }

    /// Root-mean-square over both channels jointly.
    pub fn rms(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let energy: f64 = self
            .left
            .iter()
            .chain(self.right.iter())
            .map(|v| v * v)
            .sum();
        (energy / (2 * self.len()) as f64).sqrt()
    }

    /// Largest absolute sample over both channels.
    pub fn peak(&self) -> f64 {
        self.left
            .iter()
            .chain(self.right.iter())
            .fold(0.0_f64, |acc, &v| acc.max(v.abs()))
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.left.iter_mut().chain(self.right.iter_mut()) {
            *v *= factor;
        }
    }

    /// Equal-weight mono downmix.
    pub fn to_mono(&self) -> Vec<f64> {
        self.left
            .iter()
            .zip(self.right.iter())
            .map(|(l, r)| 0.5 * (l + r))
            .collect()
    }

    /// Copy of the sample range `[start, start + len)` from both channels.
    pub fn slice(&self, start: usize, len: usize) -> Waveform {
        assert!(start + len <= self.len(), "slice out of range");
        Waveform {
            left: self.left[start..start + len].to_vec(),
            right: self.right[start..start + len].to_vec(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Complex stereo spectrogram stored as four real planes.
///
/// Layout is channel-major, then bin-major: the value for channel `c`,
/// bin `f`, frame `k` lives at `data[(c * bins + f) * frames + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroTensor {
    data: Vec<f64>,
    bins: usize,
    frames: usize,
    fft_size: usize,
    hop: usize,
    sample_rate: u32,
}

impl SpectroTensor {
    pub fn zeros(fft_size: usize, hop: usize, sample_rate: u32, frames: usize) -> Self {
        let bins = fft_size / 2 + 1;
        SpectroTensor {
            data: vec![0.0; TENSOR_CHANNELS * bins * frames],
            bins,
            frames,
            fft_size,
            hop,
            sample_rate,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[inline]
    fn idx(&self, channel: usize, bin: usize, frame: usize) -> usize {
        debug_assert!(channel < TENSOR_CHANNELS && bin < self.bins && frame < self.frames);
        (channel * self.bins + bin) * self.frames + frame
    }

    #[inline]
    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> f64 {
        self.data[self.idx(channel, bin, frame)]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, bin: usize, frame: usize, value: f64) {
        let i = self.idx(channel, bin, frame);
        self.data[i] = value;
    }

    /// Complex value for audio channel `side` (0 = left, 1 = right).
    #[inline]
    pub fn complex(&self, side: usize, bin: usize, frame: usize) -> Complex64 {
        Complex64::new(
            self.get(2 * side, bin, frame),
            self.get(2 * side + 1, bin, frame),
        )
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_layout(&self, other: &SpectroTensor) -> bool {
        self.bins == other.bins
            && self.frames == other.frames
            && self.fft_size == other.fft_size
            && self.hop == other.hop
            && self.sample_rate == other.sample_rate
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Relative L2 distance to `other`, with an absolute floor when `other`
    /// is (near) zero. Used throughout the tests.
    pub fn relative_l2(&self, other: &SpectroTensor) -> f64 {
        assert!(self.same_layout(other), "layout mismatch in relative_l2");
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            diff += (a - b) * (a - b);
            norm += b * b;
        }
        if norm > 0.0 {
            (diff / norm).sqrt()
        } else {
            diff.sqrt()
        }
    }
}

/// How `segment` selects excerpt start positions.
#[derive(Debug, Clone, Copy)]
pub enum SegmentMode {
    /// Non-overlapping excerpts from the start of the file.
    Sequential,
    /// Uniformly random start offsets, reproducible from the seed. The
    /// excerpt count matches the sequential mode.
    RandomOffsets { seed: u64 },
}

/// Mirrors an out-of-range position back into `[0, len)` without repeating
/// the edge sample. Valid for offsets up to `len - 1` on either side.
#[inline]
fn reflect(pos: isize, len: usize) -> usize {
    let len = len as isize;
    let p = if pos < 0 { -pos } else { pos };
    let p = if p >= len { 2 * (len - 1) - p } else { p };
    debug_assert!((0..len).contains(&p));
    p as usize
}

/// Signal extended by `fft_size / 2` reflected samples on each side, so every
/// analysis frame is fully populated and frame `k` is centered on sample
/// `k * hop`.
fn centered(signal: &[f64], fft_size: usize) -> Vec<f64> {
    let pad = fft_size / 2;
    let n = signal.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in 0..(n + 2 * pad) {
        out.push(signal[reflect(i as isize - pad as isize, n)]);
    }
    out
}

/// One-sided spectra of every centered frame of a single channel.
/// Returns `bins * frames` values in bin-major order.
pub(crate) fn frame_spectra(
    signal: &[f64],
    fft_size: usize,
    hop: usize,
    window: WindowKind,
) -> Result<(Vec<Complex64>, usize, usize), StftError> {
    if signal.len() < fft_size {
        return Err(StftError::TooShort {
            len: signal.len(),
            need: fft_size,
        });
    }
    let bins = fft_size / 2 + 1;
    let frames = signal.len() / hop + 1;
    let padded = centered(signal, fft_size);
    let coeffs = window.coefficients(fft_size);
    let plan = fft::forward_plan(fft_size);
    let mut out = vec![Complex64::new(0.0, 0.0); bins * frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for frame in 0..frames {
        let start = frame * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(padded[start + i] * coeffs[i], 0.0);
        }
        plan.process(&mut buf);
        for (bin, value) in buf.iter().take(bins).enumerate() {
            out[bin * frames + frame] = *value;
        }
    }
    Ok((out, bins, frames))
}

/// Centered, Hann-windowed STFT of both channels, stacked as
/// `[Re L, Im L, Re R, Im R]`.
pub fn stft_forward(wave: &Waveform, config: &StftConfig) -> Result<SpectroTensor, StftError> {
    config.validate()?;
    if !wave.is_finite() {
        return Err(StftError::NonFinite { context: "input waveform" });
    }
    if wave.len() < config.fft_size {
        return Err(StftError::TooShort {
            len: wave.len(),
            need: config.fft_size,
        });
    }
    let frames = config.frames_for(wave.len());
    let mut tensor = SpectroTensor::zeros(config.fft_size, config.hop, wave.sample_rate(), frames);
    for side in 0..2 {
        let (spectra, bins, n_frames) =
            frame_spectra(wave.channel(side), config.fft_size, config.hop, config.window)?;
        debug_assert_eq!((bins, n_frames), (tensor.bins, tensor.frames));
        for bin in 0..bins {
            for frame in 0..n_frames {
                let v = spectra[bin * n_frames + frame];
                tensor.set(2 * side, bin, frame, v.re);
                tensor.set(2 * side + 1, bin, frame, v.im);
            }
        }
    }
    Ok(tensor)
}

fn check_layout(tensor: &SpectroTensor, config: &StftConfig) -> Result<(), StftError> {
    if tensor.bins != config.bins() || tensor.fft_size != config.fft_size || tensor.hop != config.hop
    {
        return Err(StftError::LayoutMismatch {
            bins: tensor.bins,
            fft_size: tensor.fft_size,
            hop: tensor.hop,
            want_bins: config.bins(),
            want_fft: config.fft_size,
            want_hop: config.hop,
        });
    }
    Ok(())
}

/// Squared-window overlap-add normalization buffer for a padded synthesis
/// span of `(frames - 1) * hop + fft_size` samples.
fn synthesis_norm(frames: usize, fft_size: usize, hop: usize, coeffs: &[f64]) -> Vec<f64> {
    let mut norm = vec![0.0; (frames - 1) * hop + fft_size];
    for frame in 0..frames {
        let start = frame * hop;
        for (i, &w) in coeffs.iter().enumerate() {
            norm[start + i] += w * w;
        }
    }
    norm
}

/// Inverse STFT by windowed overlap-add, truncated or zero-padded to
/// `out_len` samples.
///
/// Imaginary parts of the DC and Nyquist bins have no real-signal
/// counterpart and are discarded.
pub fn istft_inverse(
    tensor: &SpectroTensor,
    config: &StftConfig,
    out_len: usize,
) -> Result<Waveform, StftError> {
    config.validate()?;
    check_layout(tensor, config)?;
    if !tensor.is_finite() {
        return Err(StftError::NonFinite { context: "input tensor" });
    }
    let n = config.fft_size;
    let pad = n / 2;
    let frames = tensor.frames;
    let coeffs = config.window.coefficients(n);
    let norm = synthesis_norm(frames, n, config.hop, &coeffs);
    let mut channels: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (side, channel) in channels.iter_mut().enumerate() {
        let mut acc = vec![0.0; norm.len()];
        for frame in 0..frames {
            spectrum[0] = tensor.complex(side, 0, frame);
            spectrum[n / 2] = tensor.complex(side, n / 2, frame);
            for bin in 1..n / 2 {
                let v = tensor.complex(side, bin, frame);
                spectrum[bin] = v;
                spectrum[n - bin] = v.conj();
            }
            fft::inverse_normalized(&mut spectrum);
            let start = frame * config.hop;
            for (i, value) in spectrum.iter().enumerate() {
                acc[start + i] += value.re * coeffs[i];
            }
        }
        let mut out = vec![0.0; out_len];
        for (i, slot) in out.iter_mut().enumerate() {
            let j = pad + i;
            if j < acc.len() && norm[j] > NORM_EPSILON {
                *slot = acc[j] / norm[j];
            }
        }
        *channel = out;
    }
    let [left, right] = channels;
    Waveform::from_channels(left, right, tensor.sample_rate)
}

/// Adjoint of [`istft_inverse`] at fixed output length: maps a waveform-space
/// gradient back to tensor space, so that for every tensor `S` and waveform
/// `u` of matching sizes, `<istft(S), u> == <S, istft_adjoint(u)>`.
///
/// Gradients never reach the imaginary DC and Nyquist planes because the
/// inverse transform discards them.
pub fn istft_adjoint(
    grad: &Waveform,
    config: &StftConfig,
    frames: usize,
) -> Result<SpectroTensor, StftError> {
    config.validate()?;
    if !grad.is_finite() {
        return Err(StftError::NonFinite { context: "gradient waveform" });
    }
    let n = config.fft_size;
    let pad = n / 2;
    let coeffs = config.window.coefficients(n);
    let norm = synthesis_norm(frames, n, config.hop, &coeffs);
    let mut tensor = SpectroTensor::zeros(n, config.hop, grad.sample_rate(), frames);
    let plan = fft::forward_plan(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for side in 0..2 {
        let mut embedded = vec![0.0; norm.len()];
        for (i, &g) in grad.channel(side).iter().enumerate() {
            let j = pad + i;
            if j < embedded.len() && norm[j] > NORM_EPSILON {
                embedded[j] = g / norm[j];
            }
        }
        for frame in 0..frames {
            let start = frame * config.hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(embedded[start + i] * coeffs[i], 0.0);
            }
            plan.process(&mut buf);
            let two_over_n = 2.0 / n as f64;
            let one_over_n = 1.0 / n as f64;
            tensor.set(2 * side, 0, frame, buf[0].re * one_over_n);
            tensor.set(2 * side, n / 2, frame, buf[n / 2].re * one_over_n);
            for (bin, value) in buf.iter().enumerate().take(n / 2).skip(1) {
                tensor.set(2 * side, bin, frame, value.re * two_over_n);
                tensor.set(2 * side + 1, bin, frame, value.im * two_over_n);
            }
        }
    }
    Ok(tensor)
}

/// Cuts a recording into fixed-length excerpts.
///
/// The excerpt count is `len / segment_samples` in both modes; a recording
/// shorter than one segment is an error.
pub fn segment(
    wave: &Waveform,
    config: &StftConfig,
    mode: SegmentMode,
) -> Result<Vec<Waveform>, StftError> {
    use rand::{Rng, SeedableRng};

    config.validate()?;
    let seg = config.segment_samples(wave.sample_rate());
    if seg == 0 || wave.len() < seg {
        return Err(StftError::TooShort {
            len: wave.len(),
            need: seg.max(1),
        });
    }
    let count = wave.len() / seg;
    let starts: Vec<usize> = match mode {
        SegmentMode::Sequential => (0..count).map(|i| i * seg).collect(),
        SegmentMode::RandomOffsets { seed } => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| rng.random_range(0..=wave.len() - seg))
                .collect()
        }
    };
    Ok(starts.into_iter().map(|s| wave.slice(s, seg)).collect())
}
