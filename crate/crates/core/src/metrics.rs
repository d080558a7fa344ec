//! Evaluation metrics for dereverberation estimates.
//!
//! Five signal-level comparisons (multi-resolution STFT log-magnitude and
//! wrapped-phase distances, error-to-signal ratio, SI-SDR and its
//! improvement over the wet input, normalized mutual information of
//! log-spectrograms) and four percussion-oriented ones (modulation spectrum
//! distance over mel subband Hilbert envelopes, RMS envelope correlation,
//! transient-to-tail energy ratio deviation, onset F-measure improvement).
//!
//! Stereo reduction: metrics run per channel and average, except SI-SDR,
//! which concatenates the channels after removing each channel's mean, and
//! the onset-based metrics, which detect on a mono downmix. Every tunable
//! lives in [`MetricConfig`] and is snapshotted into reports, since several
//! of these metrics are only comparable under identical settings.

use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{read_manifest, DatasetError, Split};
use crate::fft::{inverse_normalized, real_forward};
use crate::stft::{frame_spectra, StftError, Waveform, WindowKind};
use crate::wav;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("estimate has {est} samples, reference has {reference}")]
    LengthMismatch { est: usize, reference: usize },
    #[error("estimate rate {est} Hz, reference rate {reference} Hz")]
    RateMismatch { est: u32, reference: u32 },
    #[error("input of {len} samples is too short, need {need}")]
    TooShort { len: usize, need: usize },
    #[error("reference is silent")]
    SilentReference,
    #[error("envelope has no variance, correlation is undefined")]
    ConstantEnvelope,
    #[error("reference has no detectable onsets")]
    NoReferenceOnsets,
    #[error("invalid metric config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error(transparent)]
    Dataset(#[from] Box<DatasetError>),
}

impl From<DatasetError> for MetricError {
    fn from(e: DatasetError) -> Self {
        MetricError::Dataset(Box::new(e))
    }
}

/// Every metric hyperparameter. Reports embed a snapshot: MSD, TTER, and
/// onset values are only comparable between runs that share one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    /// FFT sizes of the multi-resolution STFT distances.
    pub mstft_ffts: Vec<usize>,
    /// Hop sizes paired index-wise with `mstft_ffts`.
    pub mstft_hops: Vec<usize>,
    /// Numerical guard added to magnitudes, energies, and denominators.
    pub eps: f64,
    /// Histogram resolution per axis for mutual information.
    pub nmi_bins: usize,
    pub nmi_fft: usize,
    pub nmi_hop: usize,
    /// RMS envelope frame and hop in samples.
    pub env_frame: usize,
    pub env_hop: usize,
    /// Mel-spaced subband count for the modulation spectrum distance.
    pub msd_subbands: usize,
    /// Modulation spectrum ceiling in Hz.
    pub msd_mod_max_hz: f64,
    /// Transient window after each onset, in milliseconds.
    pub tter_transient_ms: f64,
    /// Tail window following the transient window, in milliseconds.
    pub tter_tail_ms: f64,
    pub onset_fft: usize,
    pub onset_hop: usize,
    /// Half-width, in frames, of the moving-median flux threshold.
    pub onset_median_frames: usize,
    /// Fixed threshold offset as a fraction of the flux peak.
    pub onset_delta_ratio: f64,
    /// Minimum spacing between reported onsets, in milliseconds.
    pub onset_min_gap_ms: f64,
    /// Matching tolerance of the onset F-measure, in milliseconds.
    pub onset_tolerance_ms: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            mstft_ffts: vec![256, 1024, 4096, 8192],
            mstft_hops: vec![64, 256, 1024, 2048],
            eps: 1e-8,
            nmi_bins: 64,
            nmi_fft: 1024,
            nmi_hop: 384,
            env_frame: 1024,
            env_hop: 256,
            msd_subbands: 16,
            msd_mod_max_hz: 50.0,
            tter_transient_ms: 20.0,
            tter_tail_ms: 200.0,
            onset_fft: 1024,
            onset_hop: 384,
            onset_median_frames: 8,
            onset_delta_ratio: 0.1,
            onset_min_gap_ms: 50.0,
            onset_tolerance_ms: 50.0,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |msg: String| Err(MetricError::BadConfig(msg));
        if self.mstft_ffts.is_empty() || self.mstft_ffts.len() != self.mstft_hops.len() {
            return bad(format!(
                "mstft lists must be non-empty and equal length, got {} ffts and {} hops",
                self.mstft_ffts.len(),
                self.mstft_hops.len()
            ));
        }
        for (&fft, &hop) in self.mstft_ffts.iter().zip(&self.mstft_hops) {
            if fft < 2 || !fft.is_multiple_of(2) || hop == 0 {
                return bad(format!("mstft resolution {fft}/{hop} is invalid"));
            }
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return bad(format!("eps must be positive and finite, got {}", self.eps));
        }
        let positive = [
            ("nmi_bins", self.nmi_bins),
            ("nmi_fft", self.nmi_fft),
            ("nmi_hop", self.nmi_hop),
            ("env_frame", self.env_frame),
            ("env_hop", self.env_hop),
            ("msd_subbands", self.msd_subbands),
            ("onset_fft", self.onset_fft),
            ("onset_hop", self.onset_hop),
        ];
        for (name, value) in positive {
            if value == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        let positive_f = [
            ("msd_mod_max_hz", self.msd_mod_max_hz),
            ("tter_transient_ms", self.tter_transient_ms),
            ("tter_tail_ms", self.tter_tail_ms),
            ("onset_min_gap_ms", self.onset_min_gap_ms),
            ("onset_tolerance_ms", self.onset_tolerance_ms),
        ];
        for (name, value) in positive_f {
            if !(value > 0.0) || !value.is_finite() {
                return bad(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if !(0.0..=1.0).contains(&self.onset_delta_ratio) {
            return bad(format!(
                "onset_delta_ratio must lie in [0, 1], got {}",
                self.onset_delta_ratio
            ));
        }
        Ok(())
    }
}

fn check_pair(est: &Waveform, reference: &Waveform) -> Result<(), MetricError> {
    if est.len() != reference.len() {
        return Err(MetricError::LengthMismatch {
            est: est.len(),
            reference: reference.len(),
        });
    }
    if est.sample_rate() != reference.sample_rate() {
        return Err(MetricError::RateMismatch {
            est: est.sample_rate(),
            reference: reference.sample_rate(),
        });
    }
    Ok(())
}

fn channel_mean(
    est: &Waveform,
    reference: &Waveform,
    mut per_channel: impl FnMut(&[f64], &[f64]) -> Result<f64, MetricError>,
) -> Result<f64, MetricError> {
    let left = per_channel(est.left(), reference.left())?;
    let right = per_channel(est.right(), reference.right())?;
    Ok(0.5 * (left + right))
}

/// Mean over resolutions and channels of the MAE between log magnitudes
/// `ln(|S| + eps)`.
pub fn mstft_mag_mae(
    est: &Waveform,
    reference: &Waveform,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    let mut total = 0.0;
    for (&fft, &hop) in cfg.mstft_ffts.iter().zip(&cfg.mstft_hops) {
        total += channel_mean(est, reference, |a, b| {
            let (sa, _, _) = frame_spectra(a, fft, hop, WindowKind::Hann)?;
            let (sb, _, _) = frame_spectra(b, fft, hop, WindowKind::Hann)?;
            let sum: f64 = sa
                .iter()
                .zip(&sb)
                .map(|(x, y)| ((x.norm() + cfg.eps).ln() - (y.norm() + cfg.eps).ln()).abs())
                .sum();
            Ok(sum / sa.len() as f64)
        })?;
    }
    Ok(total / cfg.mstft_ffts.len() as f64)
}

/// Mean over resolutions and channels of the mean absolute phase difference
/// wrapped to (-pi, pi]. Bins where both magnitudes sit under `eps` carry no
/// phase information and are excluded.
pub fn mstft_phase_mae(
    est: &Waveform,
    reference: &Waveform,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    let mut total = 0.0;
    for (&fft, &hop) in cfg.mstft_ffts.iter().zip(&cfg.mstft_hops) {
        total += channel_mean(est, reference, |a, b| {
            let (sa, _, _) = frame_spectra(a, fft, hop, WindowKind::Hann)?;
            let (sb, _, _) = frame_spectra(b, fft, hop, WindowKind::Hann)?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for (x, y) in sa.iter().zip(&sb) {
                if x.norm() < cfg.eps && y.norm() < cfg.eps {
                    continue;
                }
                sum += (x * y.conj()).arg().abs();
                count += 1;
            }
            // No informative bins means both sides are silent, hence equal.
            Ok(if count == 0 { 0.0 } else { sum / count as f64 })
        })?;
    }
    Ok(total / cfg.mstft_ffts.len() as f64)
}

/// Error-to-signal ratio over the concatenated stereo samples.
pub fn esr(est: &Waveform, reference: &Waveform, eps: f64) -> Result<f64, MetricError> {
    check_pair(est, reference)?;
    let mut error = 0.0;
    let mut signal = 0.0;
    for side in 0..2 {
        for (x, y) in est.channel(side).iter().zip(reference.channel(side)) {
            error += (x - y) * (x - y);
            signal += y * y;
        }
    }
    Ok(error / (signal + eps))
}

/// Bounds applied to SI-SDR: perfect reconstructions cap at +60 dB, and the
/// floor mirrors the cap so orthogonal estimates stay finite.
pub const SI_SDR_CAP_DB: f64 = 60.0;

/// Scale-invariant SDR in dB. Channels are mean-removed independently and
/// concatenated, so inter-channel balance still counts.
pub fn si_sdr(est: &Waveform, reference: &Waveform, eps: f64) -> Result<f64, MetricError> {
    check_pair(est, reference)?;
    let centered = |v: &[f64]| -> Vec<f64> {
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        v.iter().map(|x| x - mean).collect()
    };
    let mut dot = 0.0;
    let mut ref_energy = 0.0;
    let mut channels = Vec::with_capacity(2);
    for side in 0..2 {
        let e = centered(est.channel(side));
        let r = centered(reference.channel(side));
        dot += e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        ref_energy += r.iter().map(|x| x * x).sum::<f64>();
        channels.push((e, r));
    }
    if ref_energy <= 0.0 {
        return Err(MetricError::SilentReference);
    }
    let alpha = dot / ref_energy;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (e, r) in &channels {
        for (a, b) in e.iter().zip(r) {
            let t = alpha * b;
            target += t * t;
            residual += (a - t) * (a - t);
        }
    }
    if residual < eps {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target / residual).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

/// SI-SDR improvement of the estimate over the wet input, both against the
/// clean reference.
pub fn si_sdri(
    est: &Waveform,
    reference: &Waveform,
    wet: &Waveform,
    eps: f64,
) -> Result<f64, MetricError> {
    Ok(si_sdr(est, reference, eps)? - si_sdr(wet, reference, eps)?)
}

/// Plug-in normalized mutual information of one histogrammed value pair.
fn histogram_nmi(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let (lo_a, hi_a) = range(a);
    let (lo_b, hi_b) = range(b);
    if !(hi_a > lo_a) || !(hi_b > lo_b) {
        // A constant axis has zero entropy; the normalization is undefined
        // and similarity is reported as absent.
        return 0.0;
    }
    let index = |v: f64, lo: f64, hi: f64| {
        (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
    };
    let mut joint = vec![0u64; bins * bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[index(x, lo_a, hi_a) * bins + index(y, lo_b, hi_b)] += 1;
    }
    let n = a.len() as f64;
    let mut row = vec![0u64; bins];
    let mut col = vec![0u64; bins];
    for i in 0..bins {
        for j in 0..bins {
            row[i] += joint[i * bins + j];
            col[j] += joint[i * bins + j];
        }
    }
    let entropy = |counts: &[u64]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_a = entropy(&row);
    let h_b = entropy(&col);
    if h_a <= 0.0 || h_b <= 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let p = c as f64 / n;
                let p_i = row[i] as f64 / n;
                let p_j = col[j] as f64 / n;
                mi += p * (p / (p_i * p_j)).ln();
            }
        }
    }
    (mi / (h_a * h_b).sqrt()).clamp(0.0, 1.0)
}

/// Normalized mutual information between log-magnitude spectrograms, in
/// [0, 1]. Invariant under monotone remaps of either side's magnitudes up
/// to binning error.
pub fn nmi(est: &Waveform, reference: &Waveform, cfg: &MetricConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    channel_mean(est, reference, |a, b| {
        let logmag = |v: &[f64]| -> Result<Vec<f64>, MetricError> {
            let (s, _, _) = frame_spectra(v, cfg.nmi_fft, cfg.nmi_hop, WindowKind::Hann)?;
            Ok(s.iter().map(|c| (c.norm() + cfg.eps).ln()).collect())
        };
        Ok(histogram_nmi(&logmag(a)?, &logmag(b)?, cfg.nmi_bins))
    })
}

/// Triangular mel filterbank evaluated on the positive-frequency bins of a
/// length-`n` DFT. Returned per band as (first_bin, weights).
fn mel_filters(n: usize, sample_rate: f64, bands: usize) -> Vec<(usize, Vec<f64>)> {
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let mel_inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_inv(top * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate / n as f64;
    let half = n / 2;
    (0..bands)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let first = (lo / bin_hz).ceil() as usize;
            let last = ((hi / bin_hz).floor() as usize).min(half);
            let mut weights = Vec::new();
            for k in first..=last {
                let f = k as f64 * bin_hz;
                let w = if f <= mid {
                    (f - lo) / (mid - lo).max(f64::MIN_POSITIVE)
                } else {
                    (hi - f) / (hi - mid).max(f64::MIN_POSITIVE)
                };
                weights.push(w.max(0.0));
            }
            (first, weights)
        })
        .collect()
}

/// Modulation spectrum distance: each channel is split into mel subbands by
/// spectral masking, the analytic-signal envelope of each band is Fourier
/// transformed, and log-magnitude modulation spectra up to
/// `msd_mod_max_hz` are compared by MAE. Envelope magnitudes make the
/// distance insensitive to small time shifts.
pub fn msd(est: &Waveform, reference: &Waveform, cfg: &MetricConfig) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    let n = est.len();
    let rate = est.sample_rate() as f64;
    let need = (0.5 * rate) as usize;
    if n < need {
        return Err(MetricError::TooShort { len: n, need });
    }
    let filters = mel_filters(n, rate, cfg.msd_subbands);
    let mod_bins = ((cfg.msd_mod_max_hz * n as f64 / rate).floor() as usize).min(n / 2) + 1;

    // Log-magnitude modulation spectra for all bands of one channel.
    let mod_spectra = |signal: &[f64]| -> Vec<Vec<f64>> {
        let spectrum = real_forward(signal);
        let half = n / 2;
        filters
            .iter()
            .map(|(first, weights)| {
                // Analytic signal of the masked band: positive frequencies
                // doubled, negative zeroed, so |z| is the Hilbert envelope.
                let mut band = vec![Complex64::new(0.0, 0.0); n];
                for (offset, &w) in weights.iter().enumerate() {
                    let k = first + offset;
                    if k == 0 || (n.is_multiple_of(2) && k == half) {
                        band[k] = spectrum[k] * w;
                    } else {
                        band[k] = spectrum[k] * (2.0 * w);
                    }
                }
                inverse_normalized(&mut band);
                let envelope: Vec<f64> = band.iter().map(|z| z.norm()).collect();
                let env_spectrum = real_forward(&envelope);
                env_spectrum
                    .iter()
                    .take(mod_bins)
                    .map(|c| (c.norm() + cfg.eps).ln())
                    .collect()
            })
            .collect()
    };

    channel_mean(est, reference, |a, b| {
        let ma = mod_spectra(a);
        let mb = mod_spectra(b);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (band_a, band_b) in ma.iter().zip(&mb) {
            for (x, y) in band_a.iter().zip(band_b) {
                sum += (x - y).abs();
                count += 1;
            }
        }
        Ok(sum / count.max(1) as f64)
    })
}

/// Frame-wise AC-coupled RMS of a mono signal. Removing the frame mean
/// keeps a DC offset from reading as envelope.
fn rms_envelope(signal: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    let count = (signal.len() - frame) / hop + 1;
    (0..count)
        .map(|k| {
            let chunk = &signal[k * hop..k * hop + frame];
            let mean = chunk.iter().sum::<f64>() / frame as f64;
            let var = chunk.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / frame as f64;
            var.sqrt()
        })
        .collect()
}

/// Pearson correlation between the RMS envelopes of the mono downmixes, in
/// [-1, 1].
pub fn env_corr(
    est: &Waveform,
    reference: &Waveform,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    if est.len() < cfg.env_frame {
        return Err(MetricError::TooShort {
            len: est.len(),
            need: cfg.env_frame,
        });
    }
    let ea = rms_envelope(&est.to_mono(), cfg.env_frame, cfg.env_hop);
    let eb = rms_envelope(&reference.to_mono(), cfg.env_frame, cfg.env_hop);
    let n = ea.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (ma, mb) = (mean(&ea), mean(&eb));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ea.iter().zip(&eb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(MetricError::ConstantEnvelope);
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Onset times in seconds from half-wave-rectified log-magnitude spectral
/// flux on the mono downmix. Peaks must clear a moving-median threshold
/// plus a fixed fraction of the flux maximum, and accepted onsets keep a
/// minimum gap. Deterministic and scale-invariant: log magnitudes turn a
/// gain into an additive constant that the frame difference cancels.
pub fn detect_onsets(x: &Waveform, cfg: &MetricConfig) -> Result<Vec<f64>, MetricError> {
    cfg.validate()?;
    let mono = x.to_mono();
    let (spectra, bins, frames) = frame_spectra(&mono, cfg.onset_fft, cfg.onset_hop, WindowKind::Hann)?;
    let logmag: Vec<f64> = spectra.iter().map(|c| (c.norm() + cfg.eps).ln()).collect();

    let mut flux = vec![0.0f64; frames];
    for k in 1..frames {
        let mut sum = 0.0;
        for b in 0..bins {
            let rise = logmag[b * frames + k] - logmag[b * frames + k - 1];
            if rise > 0.0 {
                sum += rise;
            }
        }
        flux[k] = sum;
    }
    let peak = flux.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Ok(Vec::new());
    }
    let delta = cfg.onset_delta_ratio * peak;

    let median = |values: &mut Vec<f64>| -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).expect("flux is finite"));
        values[values.len() / 2]
    };
    let w = cfg.onset_median_frames;
    let rate = x.sample_rate() as f64;
    let min_gap = cfg.onset_min_gap_ms / 1000.0;
    let mut onsets = Vec::new();
    let mut last_accepted = f64::NEG_INFINITY;
    for k in 1..frames.saturating_sub(1) {
        if flux[k] < flux[k - 1] || flux[k] <= flux[k + 1] {
            continue;
        }
        let lo = k.saturating_sub(w);
        let hi = (k + w).min(frames - 1);
        let mut window: Vec<f64> = flux[lo..=hi].to_vec();
        if flux[k] <= median(&mut window) + delta {
            continue;
        }
        let time = k as f64 * cfg.onset_hop as f64 / rate;
        if time - last_accepted >= min_gap {
            onsets.push(time);
            last_accepted = time;
        }
    }
    Ok(onsets)
}

/// F-measure of detected onsets against reference onsets with one-to-one
/// greedy matching inside the tolerance. Input order does not matter; both
/// lists are matched in time order.
pub fn onset_f_measure(detected: &[f64], reference: &[f64], tolerance: f64) -> f64 {
    if detected.is_empty() || reference.is_empty() {
        return if detected.is_empty() && reference.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).expect("onset times are finite"));
        s
    };
    let det = sorted(detected);
    let refs = sorted(reference);
    let mut i = 0;
    let mut j = 0;
    let mut matches = 0usize;
    while i < det.len() && j < refs.len() {
        if (det[i] - refs[j]).abs() <= tolerance {
            matches += 1;
            i += 1;
            j += 1;
        } else if det[i] < refs[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    let precision = matches as f64 / det.len() as f64;
    let recall = matches as f64 / refs.len() as f64;
    if precision + recall <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Mean absolute deviation of the transient-to-tail energy ratio at the
/// clean reference's onsets, in dB. Onsets whose tail window would run past
/// the signal end are skipped.
pub fn tter_dev(
    est: &Waveform,
    reference: &Waveform,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    let onsets = detect_onsets(reference, cfg)?;
    if onsets.is_empty() {
        return Err(MetricError::NoReferenceOnsets);
    }
    let rate = est.sample_rate() as f64;
    let transient = (cfg.tter_transient_ms / 1000.0 * rate).round() as usize;
    let tail = (cfg.tter_tail_ms / 1000.0 * rate).round() as usize;
    let usable: Vec<usize> = onsets
        .iter()
        .map(|t| (t * rate).round() as usize)
        .filter(|&s| s + transient + tail <= est.len())
        .collect();
    if usable.is_empty() {
        return Err(MetricError::NoReferenceOnsets);
    }
    let ratio_db = |signal: &[f64], start: usize| -> f64 {
        let energy = |lo: usize, hi: usize| signal[lo..hi].iter().map(|x| x * x).sum::<f64>();
        let e_tr = energy(start, start + transient);
        let e_tail = energy(start + transient, start + transient + tail);
        10.0 * ((e_tr + cfg.eps) / (e_tail + cfg.eps)).log10()
    };
    channel_mean(est, reference, |a, b| {
        let sum: f64 = usable
            .iter()
            .map(|&s| (ratio_db(a, s) - ratio_db(b, s)).abs())
            .sum();
        Ok(sum / usable.len() as f64)
    })
}

/// Onset F-measure gain of the estimate over the wet input, both scored
/// against the clean reference's onsets. Positive means dereverberation
/// recovered onsets the reverb had obscured.
pub fn onset_f_improvement(
    est: &Waveform,
    wet: &Waveform,
    reference: &Waveform,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    check_pair(wet, reference)?;
    let ref_onsets = detect_onsets(reference, cfg)?;
    if ref_onsets.is_empty() {
        return Err(MetricError::NoReferenceOnsets);
    }
    let tolerance = cfg.onset_tolerance_ms / 1000.0;
    let f_est = onset_f_measure(&detect_onsets(est, cfg)?, &ref_onsets, tolerance);
    let f_wet = onset_f_measure(&detect_onsets(wet, cfg)?, &ref_onsets, tolerance);
    Ok(f_est - f_wet)
}

/// All ten per-example values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mstft_mag: f64,
    pub mstft_phase: f64,
    pub esr: f64,
    pub si_sdr: f64,
    pub si_sdri: f64,
    pub nmi: f64,
    pub msd: f64,
    pub env: f64,
    pub tter: f64,
    pub onfi: f64,
}

impl MetricRow {
    /// Fixed column order shared by CSV output and aggregates.
    pub const COLUMNS: [(&'static str, fn(&MetricRow) -> f64); 10] = [
        ("mstft_mag", |r| r.mstft_mag),
        ("mstft_phase", |r| r.mstft_phase),
        ("esr", |r| r.esr),
        ("si_sdr", |r| r.si_sdr),
        ("si_sdri", |r| r.si_sdri),
        ("nmi", |r| r.nmi),
        ("msd", |r| r.msd),
        ("env", |r| r.env),
        ("tter", |r| r.tter),
        ("onfi", |r| r.onfi),
    ];
}

/// Runs the full suite on one aligned (estimate, reference, wet) triple.
pub fn evaluate_all(
    est: &Waveform,
    reference: &Waveform,
    wet: &Waveform,
    cfg: &MetricConfig,
) -> Result<MetricRow, MetricError> {
    cfg.validate()?;
    check_pair(est, reference)?;
    check_pair(wet, reference)?;
    Ok(MetricRow {
        mstft_mag: mstft_mag_mae(est, reference, cfg)?,
        mstft_phase: mstft_phase_mae(est, reference, cfg)?,
        esr: esr(est, reference, cfg.eps)?,
        si_sdr: si_sdr(est, reference, cfg.eps)?,
        si_sdri: si_sdri(est, reference, wet, cfg.eps)?,
        nmi: nmi(est, reference, cfg)?,
        msd: msd(est, reference, cfg)?,
        env: env_corr(est, reference, cfg)?,
        tter: tter_dev(est, reference, cfg)?,
        onfi: onset_f_improvement(est, wet, reference, cfg)?,
    })
}

/// One evaluated example, keyed by its wet file name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleReport {
    pub id: String,
    pub metrics: MetricRow,
}

/// An example the batch could not evaluate, and why. Failures are report
/// content, never silently dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub id: String,
    pub reason: String,
}

/// Mean and population standard deviation of one metric over the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

/// Batch evaluation output: per-example rows, failures, aggregates, and the
/// exact config the values were computed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: MetricConfig,
    pub examples: Vec<ExampleReport>,
    pub failures: Vec<EvalFailure>,
    pub aggregates: Vec<AggregateRow>,
}

impl MetricReport {
    /// One row per example, one column per metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id");
        for (name, _) in MetricRow::COLUMNS {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for example in &self.examples {
            out.push_str(&example.id);
            for (_, get) in MetricRow::COLUMNS {
                out.push_str(&format!(",{:.9}", get(&example.metrics)));
            }
            out.push('\n');
        }
        out
    }
}

fn aggregate_rows(rows: &[&MetricRow]) -> Vec<AggregateRow> {
    MetricRow::COLUMNS
        .iter()
        .map(|(name, get)| {
            let n = rows.len() as f64;
            let values: Vec<f64> = rows.iter().map(|r| get(r)).collect();
            let mean = values.iter().sum::<f64>() / n.max(1.0);
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1.0);
            AggregateRow {
                metric: name.to_string(),
                mean,
                std: var.sqrt(),
            }
        })
        .collect()
}

/// Evaluates every manifest entry (optionally one split) against estimate
/// files of the same name as each wet file, in `estimates_dir`. Examples
/// that fail to load or evaluate are recorded in the report. Runs on `jobs`
/// threads; output order follows the manifest regardless of thread count.
pub fn evaluate_batch(
    manifest_path: &Path,
    estimates_dir: &Path,
    split: Option<Split>,
    cfg: &MetricConfig,
    jobs: usize,
) -> Result<MetricReport, MetricError> {
    cfg.validate()?;
    if jobs == 0 {
        return Err(MetricError::BadConfig("jobs must be at least 1".to_string()));
    }
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| MetricError::BadConfig(format!("thread pool: {e}")))?;
    let results: Vec<(String, Result<MetricRow, String>)> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| {
                let id = Path::new(&entry.wet_path)
                    .file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| entry.wet_path.clone());
                let result = (|| -> Result<MetricRow, MetricError> {
                    let reference = wav::read_stereo(&base.join(&entry.dry_path))
                        .map_err(|e| MetricError::BadConfig(e.to_string()))?;
                    let wet = wav::read_stereo(&base.join(&entry.wet_path))
                        .map_err(|e| MetricError::BadConfig(e.to_string()))?;
                    let est = wav::read_stereo(&estimates_dir.join(&id))
                        .map_err(|e| MetricError::BadConfig(e.to_string()))?;
                    evaluate_all(&est, &reference, &wet, cfg)
                })();
                (id, result.map_err(|e| e.to_string()))
            })
            .collect()
    });

    let mut examples = Vec::new();
    let mut failures = Vec::new();
    for (id, result) in results {
        match result {
            Ok(metrics) => examples.push(ExampleReport { id, metrics }),
            Err(reason) => failures.push(EvalFailure { id, reason }),
        }
    }
    let rows: Vec<&MetricRow> = examples.iter().map(|e| &e.metrics).collect();
    let aggregates = aggregate_rows(&rows);
    Ok(MetricReport {
        config: cfg.clone(),
        examples,
        failures,
        aggregates,
    })
}
