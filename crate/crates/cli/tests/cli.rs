//! End-to-end checks of the command-line surface: entry counts, exit-code
//! classes, oracle and identity behavior, reproducibility, and report
//! structure. Each test drives the installed binary in a private temp dir.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use dereverb_core::dataset::{
    read_manifest, write_manifest, DatasetConfig, Manifest, ManifestHeader,
    MANIFEST_FORMAT_VERSION,
};
use dereverb_core::diffusion::ReverseMode;
use dereverb_core::metrics::{MetricReport, SI_SDR_CAP_DB};
use dereverb_core::predictor::{save_checkpoint, GainPredictor};
use dereverb_core::stft::{StftConfig, Waveform};
use dereverb_core::synth::{click_pattern_excerpt, ClickPatternConfig};
use dereverb_core::wav;

/// One small room, short decay, and a -6 dB wet level so that even an
/// identity response leaves a nonzero delta target to learn.
const CONFIG: &str = "config_version = 1\n\
    seed = 5\n\n\
    [rooms]\n\
    count = 1\n\
    dim_x = [3.2, 4.2]\n\
    dim_y = [3.0, 3.8]\n\
    dim_z = [2.5, 2.9]\n\
    t60 = [0.2, 0.26]\n\n\
    [dataset]\n\
    wet_gain_db = -6.0\n\n\
    [train]\n\
    epochs = 4\n\
    batch_size = 2\n\
    learning_rate = 0.02\n";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dereverb"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary spawns")
}

fn assert_ok(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} exited with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A corpus directory: config.toml plus three 2 s click takes under dry/.
fn corpus(dir: &Path) {
    std::fs::write(dir.join("config.toml"), CONFIG).unwrap();
    std::fs::create_dir(dir.join("dry")).unwrap();
    for (name, seed) in [("kick.wav", 301u64), ("snare.wav", 302), ("toms.wav", 303)] {
        let wave = click_pattern_excerpt(&ClickPatternConfig::default(), seed).unwrap();
        wav::write_stereo(&dir.join("dry").join(name), &wave).unwrap();
    }
}

/// A rendered dataset shared by the dereverb and evaluate tests. Rendering
/// is deterministic, so sharing one run keeps the suite honest and fast.
fn rendered() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        corpus(&dir);
        assert_ok(
            &run(&dir, &["--config", "config.toml", "render", "dry", "--out", "data"]),
            "shared render",
        );
        dir
    })
}

fn max_abs_diff(a: &Waveform, b: &Waveform) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst = 0.0f64;
    for side in 0..2 {
        for (x, y) in a.channel(side).iter().zip(b.channel(side)) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

#[test]
fn render_writes_one_entry_per_segment_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir);
    for out in ["a", "b"] {
        assert_ok(
            &run(dir, &["--config", "config.toml", "render", "dry", "--out", out]),
            "render",
        );
    }
    let manifest = read_manifest(&dir.join("a/manifest.jsonl")).unwrap();
    // Three exactly-2s takes, one segment each, one room draw per segment.
    assert_eq!(manifest.entries.len(), 3);
    assert_eq!(
        std::fs::read(dir.join("a/manifest.jsonl")).unwrap(),
        std::fs::read(dir.join("b/manifest.jsonl")).unwrap(),
        "same config and seed must reproduce the manifest byte for byte"
    );
}

#[test]
fn render_missing_dry_dir_is_a_data_error_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("config.toml"), CONFIG).unwrap();
    let out = run(dir, &["--config", "config.toml", "render", "no_such_corpus", "--out", "data"]);
    assert_eq!(out.status.code(), Some(2), "missing input is a data error");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("no_such_corpus"),
        "error must name the missing path, got: {stderr}"
    );
}

#[test]
fn train_on_identity_rir_reduces_the_loss_and_reproduces_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // Per-epoch means sample one reverse step per batch, so the first-vs-last
    // comparison needs enough updates per step for learning to dominate the
    // draw noise. One-second segments keep those epochs cheap.
    std::fs::write(
        dir.join("config.toml"),
        CONFIG.replace("epochs = 4", "epochs = 24")
            .replace("learning_rate = 0.02", "learning_rate = 0.03")
            + "\n[stft]\nsegment_seconds = 1.0\n",
    )
    .unwrap();
    std::fs::create_dir(dir.join("dry")).unwrap();
    for seed in 310..316u64 {
        let wave = click_pattern_excerpt(&ClickPatternConfig::default(), seed).unwrap();
        wav::write_stereo(&dir.join("dry").join(format!("take_{seed}.wav")), &wave).unwrap();
    }
    // A one-tap unit response: the degradation reduces to the -6 dB wet
    // gain, which the delta predictor can fit exactly.
    std::fs::create_dir(dir.join("rir")).unwrap();
    wav::write_mono(&dir.join("rir/unit.wav"), &[1.0, 0.0, 0.0, 0.0], 44_100).unwrap();
    assert_ok(
        &run(
            dir,
            &["--config", "config.toml", "render", "dry", "--rir-dir", "rir", "--out", "data"],
        ),
        "render",
    );
    for out in ["m1", "m2"] {
        assert_ok(
            &run(
                dir,
                &["--config", "config.toml", "train", "data/manifest.jsonl", "--out", out],
            ),
            "train",
        );
    }
    let history = std::fs::read_to_string(dir.join("m1/loss_history.csv")).unwrap();
    let losses: Vec<f64> = history
        .lines()
        .skip(1)
        .map(|line| line.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 24, "history: {history}");
    assert!(
        losses[losses.len() - 1] < losses[0],
        "final epoch loss {} did not drop below the first {}\nhistory: {history}",
        losses[losses.len() - 1],
        losses[0]
    );
    assert_eq!(
        std::fs::read(dir.join("m1/checkpoint.bin")).unwrap(),
        std::fs::read(dir.join("m2/checkpoint.bin")).unwrap(),
        "same config and seed must reproduce the checkpoint byte for byte"
    );
}

#[test]
fn train_on_an_empty_manifest_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("config.toml"), CONFIG).unwrap();
    let manifest = Manifest {
        header: ManifestHeader {
            format_version: MANIFEST_FORMAT_VERSION,
            seed: 5,
            config: DatasetConfig::default(),
        },
        entries: Vec::new(),
    };
    write_manifest(&dir.join("empty.jsonl"), &manifest).unwrap();
    let out = run(
        dir,
        &["--config", "config.toml", "train", "empty.jsonl", "--out", "model"],
    );
    assert_eq!(out.status.code(), Some(2), "an empty manifest is a data error");
}

#[test]
fn dereverb_oracle_reproduces_the_reference() {
    let dir = rendered();
    let manifest = read_manifest(&dir.join("data/manifest.jsonl")).unwrap();
    let entry = &manifest.entries[0];
    let wet = format!("data/{}", entry.wet_path);
    let reference = format!("data/{}", entry.dry_path);
    assert_ok(
        &run(
            dir,
            &[
                "--config",
                "config.toml",
                "dereverb",
                &wet,
                "--oracle-reference",
                &reference,
                "--out",
                "oracle_est",
            ],
        ),
        "oracle dereverb",
    );
    let name = Path::new(&entry.wet_path).file_name().unwrap();
    let estimate = wav::read_stereo(&dir.join("oracle_est").join(name)).unwrap();
    let target = wav::read_stereo(&dir.join(&reference)).unwrap();
    let worst = max_abs_diff(&estimate, &target);
    assert!(
        worst < 1e-6,
        "oracle estimate deviates from the reference by {worst:.3e}"
    );
}

#[test]
fn dereverb_zero_delta_checkpoint_returns_the_input() {
    let dir = rendered();
    let zero = GainPredictor::new(
        StftConfig::default().bins(),
        16,
        ReverseMode::DeltaNormalized,
    );
    save_checkpoint(&dir.join("zero.bin"), &zero, &zero).unwrap();
    let manifest = read_manifest(&dir.join("data/manifest.jsonl")).unwrap();
    let entry = &manifest.entries[0];
    let wet = format!("data/{}", entry.wet_path);
    assert_ok(
        &run(
            dir,
            &[
                "--config",
                "config.toml",
                "dereverb",
                &wet,
                "--checkpoint",
                "zero.bin",
                "--out",
                "zero_est",
            ],
        ),
        "zero-checkpoint dereverb",
    );
    let name = Path::new(&entry.wet_path).file_name().unwrap();
    let estimate = wav::read_stereo(&dir.join("zero_est").join(name)).unwrap();
    let input = wav::read_stereo(&dir.join(&wet)).unwrap();
    let worst = max_abs_diff(&estimate, &input);
    assert!(
        worst < 1e-6,
        "a zero delta predictor must hand the input through, worst deviation {worst:.3e}"
    );
}

#[test]
fn dereverb_mode_mismatch_is_a_usage_error() {
    let dir = rendered();
    let zero = GainPredictor::new(
        StftConfig::default().bins(),
        16,
        ReverseMode::DeltaNormalized,
    );
    save_checkpoint(&dir.join("zero_delta.bin"), &zero, &zero).unwrap();
    let manifest = read_manifest(&dir.join("data/manifest.jsonl")).unwrap();
    let wet = format!("data/{}", manifest.entries[0].wet_path);
    let out = run(
        dir,
        &[
            "--config",
            "config.toml",
            "dereverb",
            &wet,
            "--checkpoint",
            "zero_delta.bin",
            "--mode",
            "direct",
            "--out",
            "mismatch_est",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(1),
        "a checkpoint in the other mode is a usage error"
    );
}

#[test]
fn evaluate_scores_perfect_estimates_clean() {
    let dir = rendered();
    let manifest = read_manifest(&dir.join("data/manifest.jsonl")).unwrap();
    let est_dir = dir.join("perfect_est");
    std::fs::create_dir_all(&est_dir).unwrap();
    for entry in &manifest.entries {
        let name = Path::new(&entry.wet_path).file_name().unwrap();
        std::fs::copy(dir.join("data").join(&entry.dry_path), est_dir.join(name)).unwrap();
    }
    assert_ok(
        &run(
            dir,
            &[
                "--config",
                "config.toml",
                "evaluate",
                "data/manifest.jsonl",
                "--estimates",
                "perfect_est",
                "--out",
                "report",
            ],
        ),
        "evaluate",
    );
    let report: MetricReport =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report/metrics.json")).unwrap())
            .unwrap();
    assert!(report.failures.is_empty(), "failures: {:?}", report.failures);
    assert_eq!(report.examples.len(), manifest.entries.len());
    assert!(!report.aggregates.is_empty());
    for example in &report.examples {
        let m = &example.metrics;
        assert!(m.esr <= 1e-9, "{}: esr {}", example.id, m.esr);
        assert_eq!(m.si_sdr, SI_SDR_CAP_DB, "{}: si_sdr {}", example.id, m.si_sdr);
        assert!((m.nmi - 1.0).abs() <= 1e-9, "{}: nmi {}", example.id, m.nmi);
        assert!(m.tter <= 1e-9, "{}: tter {}", example.id, m.tter);
    }
}
