//! The four pipeline commands. Each one validates its inputs, runs the
//! corresponding library pipeline, writes its outputs atomically, and ends
//! by writing the resolved configuration next to them.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use dereverb_core::dataset::{build_dataset, read_manifest, Split};
use dereverb_core::diffusion::{reverse_sample, OraclePredictor, Predictor, ReverseMode};
use dereverb_core::metrics::evaluate_batch;
use dereverb_core::predictor::{load_checkpoint, save_checkpoint, train, GainPredictor};
use dereverb_core::rir::{random_room_spec, scan_rir_dir, synth_rir, RirProvenance, RirSample};
use dereverb_core::stft::{istft_inverse, stft_forward, Waveform};
use dereverb_core::wav;

use crate::config::RunConfig;
use crate::errors::CliError;
use crate::progress::Progress;

/// Keeps the room-geometry stream distinct from the dataset stream that is
/// seeded with the same run seed.
const ROOM_SEED_STREAM: u64 = 0x524f_4f4d;

/// Writes through a temporary file in the target directory so readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut file = tempfile::Builder::new()
        .prefix(".partial-")
        .tempfile_in(dir)
        .map_err(io_err)?;
    file.write_all(bytes).map_err(io_err)?;
    file.persist(path)
        .map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Data(format!("thread pool: {e}")))
}

/// One line of `rir_index.jsonl`: where pool entry `index` came from.
#[derive(Serialize)]
struct RirIndexEntry {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    file_name: Option<String>,
    provenance: RirProvenance,
}

pub fn render(
    config: &RunConfig,
    dry_dir: &Path,
    rir_dir: Option<&Path>,
    out: &Path,
    jobs: usize,
    progress: &Progress,
) -> Result<(), CliError> {
    create_out_dir(out)?;
    let rate = config.dataset.sample_rate;

    let (pool, index): (Vec<RirSample>, Vec<RirIndexEntry>) = match rir_dir {
        Some(dir) => {
            let scanned = scan_rir_dir(dir, rate)?;
            let index = scanned
                .iter()
                .enumerate()
                .map(|(i, s)| RirIndexEntry {
                    index: i,
                    file_name: Some(s.file_name.clone()),
                    provenance: s.sample.provenance.clone(),
                })
                .collect();
            (scanned.into_iter().map(|s| s.sample).collect(), index)
        }
        None => {
            let ranges = config.rooms.to_ranges(rate);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ ROOM_SEED_STREAM);
            let specs = (0..config.rooms.count)
                .map(|_| random_room_spec(&mut rng, &ranges))
                .collect::<Result<Vec<_>, _>>()?;
            let pool: Vec<RirSample> = thread_pool(jobs)?
                .install(|| specs.par_iter().map(synth_rir).collect::<Result<_, _>>())?;
            let index = pool
                .iter()
                .enumerate()
                .map(|(i, sample)| RirIndexEntry {
                    index: i,
                    file_name: None,
                    provenance: sample.provenance.clone(),
                })
                .collect();
            (pool, index)
        }
    };
    progress.emit(
        "rir_pool",
        &format!(
            "{} impulse response(s) {}",
            pool.len(),
            if rir_dir.is_some() { "loaded" } else { "synthesized" }
        ),
        json!({ "count": pool.len(), "measured": rir_dir.is_some() }),
    );

    let mut index_lines = String::new();
    for entry in &index {
        let line = serde_json::to_string(&entry)
            .map_err(|e| CliError::Data(format!("rir index: {e}")))?;
        index_lines.push_str(&line);
        index_lines.push('\n');
    }
    write_atomic(&out.join("rir_index.jsonl"), index_lines.as_bytes())?;

    let dataset_config = config.dataset.to_core(config.stft.clone());
    let (_, report) = build_dataset(dry_dir, &pool, &dataset_config, config.seed, out, jobs)?;
    for skipped in &report.skipped {
        progress.emit(
            "skipped",
            &format!("{}: {}", skipped.path.display(), skipped.reason),
            json!({ "path": skipped.path.display().to_string(), "reason": skipped.reason }),
        );
    }
    progress.emit(
        "dataset",
        &format!(
            "{} example(s) rendered ({} train, {} val, {} test) into {}",
            report.examples,
            report.train,
            report.val,
            report.test,
            out.display()
        ),
        json!({
            "examples": report.examples,
            "train": report.train,
            "val": report.val,
            "test": report.test,
            "skipped": report.skipped.len(),
        }),
    );

    config.write_resolved(out)
}

pub fn train_command(
    config: &RunConfig,
    manifest_path: &Path,
    mode: ReverseMode,
    out: &Path,
    progress: &Progress,
) -> Result<(), CliError> {
    create_out_dir(out)?;
    let manifest = read_manifest(manifest_path)?;
    let train_entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.split == Split::Train)
        .cloned()
        .collect();
    if train_entries.is_empty() {
        return Err(CliError::Data(format!(
            "{}: manifest contains no training entries",
            manifest_path.display()
        )));
    }
    let pairs = dereverb_core::dataset::load_pairs(manifest_path, &train_entries)?;
    progress.emit(
        "loaded",
        &format!("{} training pair(s)", pairs.len()),
        json!({ "pairs": pairs.len() }),
    );

    let schedule = config.schedule()?;
    let init = GainPredictor::new(config.stft.bins(), schedule.steps(), mode);
    let train_config = config.train.to_core(config.seed);
    let outcome = train(
        init,
        &pairs,
        &schedule,
        &config.loss,
        &config.stft,
        &train_config,
        |report| {
            // The observer's epoch index is zero-based; reports count from 1.
            progress.emit(
                "epoch",
                &format!(
                    "epoch {}/{}: mean loss {:.6}",
                    report.epoch + 1,
                    train_config.epochs,
                    report.mean_loss
                ),
                json!({ "epoch": report.epoch + 1, "mean_loss": report.mean_loss }),
            );
        },
    )?;

    let checkpoint_path = out.join("checkpoint.bin");
    save_checkpoint(&checkpoint_path, &outcome.model, &outcome.ema)?;

    let mut csv = String::from("epoch,mean_loss\n");
    for (i, loss) in outcome.history.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, loss));
    }
    write_atomic(&out.join("loss_history.csv"), csv.as_bytes())?;

    progress.emit(
        "done",
        &format!("checkpoint written to {}", checkpoint_path.display()),
        json!({
            "checkpoint": checkpoint_path.display().to_string(),
            "final_loss": outcome.history.last().copied(),
        }),
    );
    config.write_resolved(out)
}

pub struct DereverbArgs<'a> {
    pub input: &'a Path,
    pub checkpoint: Option<&'a Path>,
    pub oracle_reference: Option<&'a Path>,
    pub mode: Option<ReverseMode>,
    pub raw_weights: bool,
    pub out: &'a Path,
    pub jobs: usize,
}

/// Lists the stereo inputs of a run: a single file, or every `.wav` in a
/// directory in name order.
fn input_files(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries =
        fs::read_dir(input).map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no wav files to process",
            input.display()
        )));
    }
    Ok(files)
}

/// Runs the reverse process over one recording, tile by tile.
///
/// The recording is cut into non-overlapping segment-length tiles; the last
/// tile is zero-padded for the transform and truncated on the way back, so
/// the output always matches the input length.
fn dereverb_file(
    config: &RunConfig,
    wave: &Waveform,
    model: Option<&GainPredictor>,
    reference: Option<&Waveform>,
    mode: ReverseMode,
) -> Result<Waveform, CliError> {
    let schedule = config.schedule()?;
    let seg = config.stft.segment_samples(wave.sample_rate());
    let tiles = wave.len().div_ceil(seg).max(1);

    let padded_tile = |source: &Waveform, start: usize, take: usize| {
        let mut left = vec![0.0; seg];
        let mut right = vec![0.0; seg];
        left[..take].copy_from_slice(&source.left()[start..start + take]);
        right[..take].copy_from_slice(&source.right()[start..start + take]);
        Waveform::from_channels(left, right, source.sample_rate())
    };

    let mut out_left = Vec::with_capacity(wave.len());
    let mut out_right = Vec::with_capacity(wave.len());
    for tile in 0..tiles {
        let start = tile * seg;
        let take = (wave.len() - start).min(seg);
        let wet_tile = padded_tile(wave, start, take)?;
        let wet = stft_forward(&wet_tile, &config.stft)?;
        let estimate = match (model, reference) {
            (Some(model), None) => reverse_sample(&wet, model, &schedule, mode)?,
            (None, Some(reference)) => {
                let clean_tile = padded_tile(reference, start, take)?;
                let clean = stft_forward(&clean_tile, &config.stft)?;
                let oracle = OraclePredictor::new(clean, wet.clone(), schedule.clone(), mode)?;
                reverse_sample(&wet, &oracle as &dyn Predictor, &schedule, mode)?
            }
            _ => unreachable!("exactly one predictor source is enforced by the flags"),
        };
        let est_tile = istft_inverse(&estimate, &config.stft, take)?;
        out_left.extend_from_slice(est_tile.left());
        out_right.extend_from_slice(est_tile.right());
    }
    Ok(Waveform::from_channels(
        out_left,
        out_right,
        wave.sample_rate(),
    )?)
}

pub fn dereverb(
    config: &RunConfig,
    args: &DereverbArgs<'_>,
    progress: &Progress,
) -> Result<(), CliError> {
    create_out_dir(args.out)?;
    let files = input_files(args.input)?;

    let model = match args.checkpoint {
        Some(path) => {
            let checkpoint = load_checkpoint(path)?;
            let model = if args.raw_weights {
                checkpoint.model
            } else {
                checkpoint.ema
            };
            if let Some(requested) = args.mode {
                if requested != model.mode() {
                    return Err(CliError::Usage(format!(
                        "checkpoint was trained in {:?} mode but --mode requests {:?}",
                        model.mode(),
                        requested
                    )));
                }
            }
            if model.steps() != config.schedule.steps {
                return Err(CliError::Usage(format!(
                    "checkpoint covers {} steps but the config schedule has {}",
                    model.steps(),
                    config.schedule.steps
                )));
            }
            if model.bins() != config.stft.bins() {
                return Err(CliError::Usage(format!(
                    "checkpoint was trained on {} bins but the config stft has {}",
                    model.bins(),
                    config.stft.bins()
                )));
            }
            Some(model)
        }
        None => None,
    };
    let mode = match &model {
        Some(model) => model.mode(),
        // Oracle runs default to the delta parameterization; both recover
        // the reference exactly.
        None => args.mode.unwrap_or(ReverseMode::DeltaNormalized),
    };

    let reference_for = |file: &Path| -> Result<Option<Waveform>, CliError> {
        let Some(oracle_root) = args.oracle_reference else {
            return Ok(None);
        };
        let path = if oracle_root.is_dir() {
            let name = file
                .file_name()
                .ok_or_else(|| CliError::Data(format!("{}: no file name", file.display())))?;
            oracle_root.join(name)
        } else {
            if files.len() > 1 {
                return Err(CliError::Usage(
                    "--oracle-reference must be a directory when the input is a directory"
                        .to_string(),
                ));
            }
            oracle_root.to_path_buf()
        };
        Ok(Some(wav::read_stereo(&path)?))
    };

    let results: Vec<(String, usize)> = thread_pool(args.jobs)?.install(|| {
        files
            .par_iter()
            .map(|file| {
                let name = file
                    .file_name()
                    .ok_or_else(|| CliError::Data(format!("{}: no file name", file.display())))?
                    .to_string_lossy()
                    .into_owned();
                let wave = wav::read_stereo(file)?;
                let reference = reference_for(file)?;
                if let Some(reference) = &reference {
                    if reference.len() != wave.len()
                        || reference.sample_rate() != wave.sample_rate()
                    {
                        return Err(CliError::Data(format!(
                            "{name}: oracle reference does not match the input geometry"
                        )));
                    }
                }
                let estimate =
                    dereverb_file(config, &wave, model.as_ref(), reference.as_ref(), mode)?;
                wav::write_stereo(&args.out.join(&name), &estimate)?;
                Ok((name, wave.len()))
            })
            .collect::<Result<_, CliError>>()
    })?;

    for (name, samples) in &results {
        progress.emit(
            "file",
            &format!("{name}: {samples} sample(s) written"),
            json!({ "file": name, "samples": samples }),
        );
    }
    progress.emit(
        "done",
        &format!("{} file(s) written to {}", results.len(), args.out.display()),
        json!({ "files": results.len() }),
    );
    config.write_resolved(args.out)
}

pub fn evaluate(
    config: &RunConfig,
    manifest_path: &Path,
    estimates: &Path,
    split: Option<Split>,
    out: &Path,
    jobs: usize,
    progress: &Progress,
) -> Result<(), CliError> {
    create_out_dir(out)?;
    let report = evaluate_batch(manifest_path, estimates, split, &config.metrics, jobs)?;
    if report.examples.is_empty() && report.failures.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no entries matched the requested split",
            manifest_path.display()
        )));
    }

    write_atomic(&out.join("metrics.csv"), report.to_csv().as_bytes())?;
    let json_text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Data(format!("metrics report: {e}")))?;
    write_atomic(&out.join("metrics.json"), format!("{json_text}\n").as_bytes())?;

    for failure in &report.failures {
        progress.emit(
            "failure",
            &format!("{}: {}", failure.id, failure.reason),
            json!({ "id": failure.id, "reason": failure.reason }),
        );
    }
    for aggregate in &report.aggregates {
        progress.emit(
            "aggregate",
            &format!(
                "{}: {:.4} +/- {:.4}",
                aggregate.metric, aggregate.mean, aggregate.std
            ),
            json!({
                "metric": aggregate.metric,
                "mean": aggregate.mean,
                "std": aggregate.std,
            }),
        );
    }
    progress.emit(
        "done",
        &format!(
            "{} example(s) evaluated, {} failure(s), reports in {}",
            report.examples.len(),
            report.failures.len(),
            out.display()
        ),
        json!({
            "examples": report.examples.len(),
            "failures": report.failures.len(),
        }),
    );
    config.write_resolved(out)
}
