//! WAV file I/O.
//!
//! Readers normalize integer PCM to `[-1, 1)` float64. Writers always emit
//! 32-bit float and go through a temporary file in the destination directory
//! followed by a rename, so a crash never leaves a truncated WAV behind.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::stft::Waveform;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: expected a stereo file, found {channels} channel(s)")]
    NotStereo { path: PathBuf, channels: u16 },
    #[error("{path}: contains no samples")]
    Empty { path: PathBuf },
    #[error("{path}: unsupported sample format ({bits}-bit {kind})")]
    UnsupportedFormat {
        path: PathBuf,
        bits: u16,
        kind: &'static str,
    },
    #[error("{path}: non-finite sample value")]
    NonFinite { path: PathBuf },
}

/// Reads any WAV file into per-channel float64 signals plus its sample rate.
pub fn read_channels(path: &Path) -> Result<(Vec<Vec<f64>>, u32), WavError> {
    let mut reader = hound::WavReader::open(path).map_err(|source| WavError::Format {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    let n_channels = spec.channels as usize;
    if n_channels == 0 {
        return Err(WavError::Empty {
            path: path.to_path_buf(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|source| WavError::Format {
                path: path.to_path_buf(),
                source,
            })?,
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<Result<_, _>>()
                .map_err(|source| WavError::Format {
                    path: path.to_path_buf(),
                    source,
                })?
        }
        (format, bits) => {
            return Err(WavError::UnsupportedFormat {
                path: path.to_path_buf(),
                bits,
                kind: match format {
                    hound::SampleFormat::Float => "float",
                    hound::SampleFormat::Int => "int",
                },
            })
        }
    };
    if interleaved.is_empty() {
        return Err(WavError::Empty {
            path: path.to_path_buf(),
        });
    }
    if interleaved.iter().any(|v| !v.is_finite()) {
        return Err(WavError::NonFinite {
            path: path.to_path_buf(),
        });
    }

    let frames = interleaved.len() / n_channels;
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for (i, &v) in interleaved.iter().enumerate() {
        channels[i % n_channels].push(v);
    }
    Ok((channels, spec.sample_rate))
}

/// Reads a stereo WAV file into a [`Waveform`].
pub fn read_stereo(path: &Path) -> Result<Waveform, WavError> {
    let (mut channels, rate) = read_channels(path)?;
    if channels.len() != 2 {
        return Err(WavError::NotStereo {
            path: path.to_path_buf(),
            channels: channels.len() as u16,
        });
    }
    let right = channels.pop().expect("two channels checked");
    let left = channels.pop().expect("two channels checked");
    Ok(Waveform::from_channels(left, right, rate).expect("interleaved channels have equal length"))
}

fn float_spec(channels: u16, sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    }
}

fn atomic_write<F>(path: &Path, write: F) -> Result<(), WavError>
where
    F: FnOnce(&Path) -> Result<(), hound::Error>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(dir) => tempfile::Builder::new()
            .prefix(".partial-")
            .suffix(".wav")
            .tempfile_in(dir),
        None => tempfile::Builder::new()
            .prefix(".partial-")
            .suffix(".wav")
            .tempfile(),
    }
    .map_err(|source| WavError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let tmp_path = tmp.into_temp_path();
    write(&tmp_path).map_err(|source| WavError::Format {
        path: path.to_path_buf(),
        source,
    })?;
    tmp_path.persist(path).map_err(|e| WavError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

/// Writes a stereo waveform as 32-bit float WAV, atomically.
pub fn write_stereo(path: &Path, wave: &Waveform) -> Result<(), WavError> {
    if !wave.is_finite() {
        return Err(WavError::NonFinite {
            path: path.to_path_buf(),
        });
    }
    atomic_write(path, |tmp| {
        let mut writer = hound::WavWriter::create(tmp, float_spec(2, wave.sample_rate()))?;
        for i in 0..wave.len() {
            writer.write_sample(wave.left()[i] as f32)?;
            writer.write_sample(wave.right()[i] as f32)?;
        }
        writer.finalize()
    })
}

/// Writes a mono signal as 32-bit float WAV, atomically.
pub fn write_mono(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), WavError> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(WavError::NonFinite {
            path: path.to_path_buf(),
        });
    }
    atomic_write(path, |tmp| {
        let mut writer = hound::WavWriter::create(tmp, float_spec(1, sample_rate))?;
        for &v in samples {
            writer.write_sample(v as f32)?;
        }
        writer.finalize()
    })
}
