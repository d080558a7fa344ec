//! Paired dry/wet dataset construction and manifests.
//!
//! A build scans a directory of stereo WAVs, assigns whole source files to
//! train/val/test splits, cuts each file into fixed-length segments, draws a
//! room response and gain jitter per segment, and renders the wet side. The
//! manifest is JSON lines: a header with the format version, seed, and
//! config snapshot, then one entry per example with paths relative to the
//! manifest.
//!
//! Determinism contract: every random draw comes from the build seed through
//! a fixed traversal order (files sorted by name), and each entry records
//! its own sub-seed, so a rebuild with the same inputs is byte-identical and
//! any single wet file is reproducible from its dry file plus manifest
//! fields. Rendering reads the dry signal back through f32 quantization
//! before convolving, matching what a later reader of the dry WAV sees.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::TrainingPair;
use crate::rir::{render_wet, RirError, RirProvenance, RirSample};
use crate::stft::{segment, SegmentMode, StftConfig, StftError, Waveform};
use crate::wav::{self, WavError};

/// Manifest schema version; bumped on any breaking change to the header or
/// entry layout.
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no usable stereo wav files in {dir}")]
    EmptyCorpus { dir: PathBuf },
    #[error("rir pool is empty")]
    EmptyRirPool,
    #[error("invalid dataset config: {0}")]
    BadConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {detail}")]
    BadManifest { path: PathBuf, detail: String },
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error(transparent)]
    Rir(#[from] RirError),
    #[error(transparent)]
    Stft(#[from] StftError),
}

/// Which partition a source file (and all its segments) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        f.write_str(name)
    }
}

/// One rendered example. Paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedExample {
    pub dry_path: String,
    pub wet_path: String,
    pub rir_ref: RirProvenance,
    pub segment_index: u32,
    /// Wet level relative to the dry RMS, after jitter.
    pub wet_gain_db: f64,
    /// Sub-seed for this entry's draws; with the dry file, `rir_ref`, and
    /// `wet_gain_db` it reproduces the wet file bit-exactly.
    pub seed: u64,
    pub split: Split,
    pub source_file: String,
    /// Reserved for future augmentation descriptors; builds leave it unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<serde_json::Value>,
}

/// Rendering and segmentation parameters, snapshotted into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub stft: StftConfig,
    pub sample_rate: u32,
    /// Base wet level relative to dry, in dB.
    pub wet_gain_db: f64,
    /// Uniform jitter half-width applied to `wet_gain_db` per segment.
    pub wet_gain_jitter_db: f64,
    /// Hard amplitude bound on rendered wet audio.
    pub peak_ceiling: f64,
    /// Dry segment RMS target in dBFS before rendering; `None` keeps the
    /// source level. The gain backs off uniformly when the target would
    /// push the dry peak past `peak_ceiling`, so percussive material with a
    /// high crest factor lands below the nominal RMS instead of clipping.
    pub dry_rms_db: Option<f64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            stft: StftConfig::default(),
            sample_rate: 44_100,
            wet_gain_db: 0.0,
            wet_gain_jitter_db: 0.0,
            peak_ceiling: 0.99,
            dry_rms_db: Some(-20.0),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |msg: String| Err(DatasetError::BadConfig(msg));
        self.stft.validate()?;
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".to_string());
        }
        if !self.wet_gain_db.is_finite() {
            return bad(format!("wet_gain_db must be finite, got {}", self.wet_gain_db));
        }
        if !self.wet_gain_jitter_db.is_finite() || self.wet_gain_jitter_db < 0.0 {
            return bad(format!(
                "wet_gain_jitter_db must be non-negative, got {}",
                self.wet_gain_jitter_db
            ));
        }
        if !(0.0..=1.0).contains(&self.peak_ceiling) || self.peak_ceiling == 0.0 {
            return bad(format!(
                "peak_ceiling must lie in (0, 1], got {}",
                self.peak_ceiling
            ));
        }
        if let Some(db) = self.dry_rms_db {
            if !db.is_finite() || db > 0.0 {
                return bad(format!("dry_rms_db must be finite and <= 0, got {db}"));
            }
        }
        Ok(())
    }
}

/// First line of every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub seed: u64,
    pub config: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub entries: Vec<PairedExample>,
}

/// A source file the build could not use, and why.
#[derive(Debug, Clone)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Outcome summary of a build.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub manifest_path: PathBuf,
    pub examples: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub skipped: Vec<SkippedFile>,
}

/// Round-trips samples through f32, the precision WAV files store.
fn quantize_f32(wave: &Waveform) -> Waveform {
    let squash = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect();
    Waveform::from_channels(squash(wave.left()), squash(wave.right()), wave.sample_rate())
        .expect("quantization preserves shape")
}

fn normalized_dry(
    wave: &Waveform,
    dry_rms_db: Option<f64>,
    peak_ceiling: f64,
) -> Option<Waveform> {
    let mut dry = wave.clone();
    if let Some(db) = dry_rms_db {
        let rms = dry.rms();
        if rms <= 0.0 {
            return None;
        }
        let rms_scale = 10f64.powf(db / 20.0) / rms;
        let peak_scale = peak_ceiling / dry.peak();
        dry.scale(rms_scale.min(peak_scale));
    }
    Some(dry)
}

struct RenderJob {
    source_file: String,
    segment_index: u32,
    dry: Waveform,
    rir_index: usize,
    wet_gain_db: f64,
    seed: u64,
    split: Split,
    dry_rel: String,
    wet_rel: String,
}

/// Builds a dataset under `out_dir`: `dry/` and `wet/` WAV trees plus
/// `manifest.jsonl`. Split assignment is by source file, 80/10/10 with the
/// val and test counts floored, so corpora under ten files train-only.
/// Rendering parallelizes over segments on `jobs` threads without affecting
/// the output.
pub fn build_dataset(
    dry_dir: &Path,
    rir_pool: &[RirSample],
    config: &DatasetConfig,
    seed: u64,
    out_dir: &Path,
    jobs: usize,
) -> Result<(Manifest, BuildReport), DatasetError> {
    config.validate()?;
    if rir_pool.is_empty() {
        return Err(DatasetError::EmptyRirPool);
    }
    for rir in rir_pool {
        if rir.sample_rate != config.sample_rate {
            return Err(DatasetError::BadConfig(format!(
                "rir pool sample rate {} does not match dataset rate {}",
                rir.sample_rate, config.sample_rate
            )));
        }
    }
    if jobs == 0 {
        return Err(DatasetError::BadConfig("jobs must be at least 1".to_string()));
    }

    let mut files: Vec<PathBuf> = std::fs::read_dir(dry_dir)
        .map_err(|source| DatasetError::Io {
            path: dry_dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|ext| ext.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(DatasetError::EmptyCorpus {
            dir: dry_dir.to_path_buf(),
        });
    }

    // Whole files move between splits, never individual segments, so
    // near-duplicate segments of one recording cannot leak across splits.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = files.clone();
    shuffled.shuffle(&mut rng);
    let n_val = shuffled.len() / 10;
    let n_test = shuffled.len() / 10;
    let split_of: BTreeMap<PathBuf, Split> = shuffled
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let split = if i < n_val {
                Split::Val
            } else if i < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
            (p.clone(), split)
        })
        .collect();

    for sub in ["dry", "wet"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|source| DatasetError::Io { path: dir, source })?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| DatasetError::BadConfig(format!("thread pool: {e}")))?;

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for path in &files {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unnamed".to_string());
        let source_file = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| stem.clone());
        let skip = |reason: String, skipped: &mut Vec<SkippedFile>| {
            skipped.push(SkippedFile {
                path: path.clone(),
                reason,
            });
        };

        let wave = match wav::read_stereo(path) {
            Ok(w) => w,
            Err(e) => {
                skip(e.to_string(), &mut skipped);
                continue;
            }
        };
        if wave.sample_rate() != config.sample_rate {
            skip(
                format!(
                    "sample rate {} does not match dataset rate {}",
                    wave.sample_rate(),
                    config.sample_rate
                ),
                &mut skipped,
            );
            continue;
        }
        let segments = match segment(&wave, &config.stft, SegmentMode::Sequential) {
            Ok(s) => s,
            Err(e) => {
                skip(e.to_string(), &mut skipped);
                continue;
            }
        };

        let split = split_of[path];
        let mut jobs_for_file = Vec::with_capacity(segments.len());
        for (index, seg) in segments.into_iter().enumerate() {
            let entry_seed: u64 = rng.random();
            let Some(dry) = normalized_dry(&seg, config.dry_rms_db, config.peak_ceiling) else {
                skip(format!("segment {index} is silent"), &mut skipped);
                continue;
            };
            let mut entry_rng = ChaCha8Rng::seed_from_u64(entry_seed);
            let rir_index = entry_rng.random_range(0..rir_pool.len());
            let jitter = if config.wet_gain_jitter_db > 0.0 {
                entry_rng.random_range(-config.wet_gain_jitter_db..=config.wet_gain_jitter_db)
            } else {
                0.0
            };
            jobs_for_file.push(RenderJob {
                source_file: source_file.clone(),
                segment_index: index as u32,
                dry: quantize_f32(&dry),
                rir_index,
                wet_gain_db: config.wet_gain_db + jitter,
                seed: entry_seed,
                split,
                dry_rel: format!("dry/{stem}_seg{index:03}.wav"),
                wet_rel: format!("wet/{stem}_seg{index:03}.wav"),
            });
        }

        let rendered: Vec<Result<PairedExample, DatasetError>> = pool.install(|| {
            jobs_for_file
                .into_par_iter()
                .map(|job| {
                    let rir = &rir_pool[job.rir_index];
                    let wet = render_wet(&job.dry, rir, job.wet_gain_db, config.peak_ceiling)?;
                    wav::write_stereo(&out_dir.join(&job.dry_rel), &job.dry)?;
                    wav::write_stereo(&out_dir.join(&job.wet_rel), &wet)?;
                    Ok(PairedExample {
                        dry_path: job.dry_rel,
                        wet_path: job.wet_rel,
                        rir_ref: rir.provenance.clone(),
                        segment_index: job.segment_index,
                        wet_gain_db: job.wet_gain_db,
                        seed: job.seed,
                        split: job.split,
                        source_file: job.source_file,
                        augmentation: None,
                    })
                })
                .collect()
        });
        for result in rendered {
            entries.push(result?);
        }
    }

    if entries.is_empty() {
        return Err(DatasetError::EmptyCorpus {
            dir: dry_dir.to_path_buf(),
        });
    }

    let manifest = Manifest {
        header: ManifestHeader {
            format_version: MANIFEST_FORMAT_VERSION,
            seed,
            config: config.clone(),
        },
        entries,
    };
    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &manifest)?;

    let count = |s: Split| manifest.entries.iter().filter(|e| e.split == s).count();
    let report = BuildReport {
        manifest_path,
        examples: manifest.entries.len(),
        train: count(Split::Train),
        val: count(Split::Val),
        test: count(Split::Test),
        skipped,
    };
    Ok((manifest, report))
}

/// Serializes a manifest as JSON lines, atomically.
pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), DatasetError> {
    let io_err = |source: std::io::Error| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let json_err = |line: usize, source: serde_json::Error| DatasetError::Json {
        path: path.to_path_buf(),
        line,
        source,
    };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut file = tempfile::Builder::new()
        .prefix(".partial-")
        .tempfile_in(dir)
        .map_err(io_err)?;
    let mut text =
        serde_json::to_string(&manifest.header).map_err(|e| json_err(1, e))?;
    text.push('\n');
    for (i, entry) in manifest.entries.iter().enumerate() {
        text.push_str(&serde_json::to_string(entry).map_err(|e| json_err(i + 2, e))?);
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(io_err)?;
    file.flush().map_err(io_err)?;
    file.into_temp_path()
        .persist(path)
        .map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Parses a JSON-lines manifest.
pub fn read_manifest(path: &Path) -> Result<Manifest, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or_else(|| DatasetError::BadManifest {
        path: path.to_path_buf(),
        detail: "empty manifest".to_string(),
    })?;
    let header: ManifestHeader =
        serde_json::from_str(header_line).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            line: 1,
            source,
        })?;
    if header.format_version != MANIFEST_FORMAT_VERSION {
        return Err(DatasetError::BadManifest {
            path: path.to_path_buf(),
            detail: format!(
                "format version {} is not supported (expected {})",
                header.format_version, MANIFEST_FORMAT_VERSION
            ),
        });
    }
    let mut entries = Vec::new();
    for (index, line) in lines {
        let entry: PairedExample =
            serde_json::from_str(line).map_err(|source| DatasetError::Json {
                path: path.to_path_buf(),
                line: index + 1,
                source,
            })?;
        entries.push(entry);
    }
    Ok(Manifest { header, entries })
}

/// Per-entry diagnostics from a manifest check. Problems are content, not
/// errors; only an unreadable manifest fails the call itself.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub entries: usize,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks manifest invariants: files exist and parse, dry/wet lengths and
/// rates agree, and no source file appears in two splits.
pub fn validate_manifest(manifest_path: &Path) -> Result<ValidationReport, DatasetError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut issues = Vec::new();

    let mut splits_by_source: BTreeMap<&str, Vec<Split>> = BTreeMap::new();
    for (index, entry) in manifest.entries.iter().enumerate() {
        let label = format!("entry {index} ({})", entry.dry_path);
        let dry = wav::read_stereo(&base.join(&entry.dry_path));
        let wet = wav::read_stereo(&base.join(&entry.wet_path));
        match (&dry, &wet) {
            (Ok(dry), Ok(wet)) => {
                if dry.len() != wet.len() {
                    issues.push(format!(
                        "{label}: dry length {} != wet length {}",
                        dry.len(),
                        wet.len()
                    ));
                }
                if dry.sample_rate() != wet.sample_rate()
                    || dry.sample_rate() != manifest.header.config.sample_rate
                {
                    issues.push(format!(
                        "{label}: sample rates dry {} / wet {} / config {}",
                        dry.sample_rate(),
                        wet.sample_rate(),
                        manifest.header.config.sample_rate
                    ));
                }
            }
            _ => {
                if let Err(e) = dry {
                    issues.push(format!("{label}: dry unreadable: {e}"));
                }
                if let Err(e) = wet {
                    issues.push(format!("{label}: wet unreadable: {e}"));
                }
            }
        }
        let splits = splits_by_source.entry(&entry.source_file).or_default();
        if !splits.contains(&entry.split) {
            splits.push(entry.split);
        }
    }
    for (source, splits) in splits_by_source {
        if splits.len() > 1 {
            issues.push(format!(
                "source {source} leaks across splits: {}",
                splits
                    .iter()
                    .map(Split::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
    }

    Ok(ValidationReport {
        entries: manifest.entries.len(),
        issues,
    })
}

/// Loads the referenced WAV pairs into memory for training or evaluation.
pub fn load_pairs(
    manifest_path: &Path,
    entries: &[PairedExample],
) -> Result<Vec<TrainingPair>, DatasetError> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    entries
        .iter()
        .map(|entry| {
            let dry = wav::read_stereo(&base.join(&entry.dry_path))?;
            let wet = wav::read_stereo(&base.join(&entry.wet_path))?;
            Ok(TrainingPair { dry, wet })
        })
        .collect()
}
