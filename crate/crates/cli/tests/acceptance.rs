//! Acceptance gate: one test per shipping criterion, each printing a single
//! `ACCEPTANCE-<n> PASS|FAIL` line (visible with `--nocapture`; cargo's own
//! per-test status mirrors them). Criteria 1 through 9 drive the library
//! directly; criterion 10 runs the installed binary end to end.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dereverb_core::diffusion::{
    forward_mix, reverse_sample, reverse_trajectory, DeltaFromDirect, OraclePredictor,
    ReverseMode,
};
use dereverb_core::losses::{delta_target, total_loss, LossWeights};
use dereverb_core::metrics::{
    detect_onsets, esr, evaluate_all, mstft_phase_mae, onset_f_improvement, si_sdr, si_sdri,
    tter_dev, MetricConfig,
};
use dereverb_core::predictor::{gradient_probe, train, GainPredictor, TrainConfig, TrainingPair};
use dereverb_core::rir::{
    measure_t60, random_room_spec, render_wet, synth_rir, RoomRanges, RoomSpec,
};
use dereverb_core::schedule::Schedule;
use dereverb_core::stft::{istft_inverse, stft_forward, SpectroTensor, StftConfig, Waveform};
use dereverb_core::synth::{click_pattern_excerpt, ClickPatternConfig};
use dereverb_core::wav;

/// Runs one criterion and reports it. A failure panics after printing so the
/// suite records it.
fn criterion(number: u32, name: &str, run: impl FnOnce() -> Result<(), String>) {
    match run() {
        Ok(()) => println!("ACCEPTANCE-{number} PASS {name}"),
        Err(why) => {
            println!("ACCEPTANCE-{number} FAIL {name}: {why}");
            panic!("acceptance criterion {number} ({name}): {why}");
        }
    }
}

fn check(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn random_tensor(
    fft_size: usize,
    hop: usize,
    sample_rate: u32,
    frames: usize,
    rng: &mut ChaCha8Rng,
) -> SpectroTensor {
    let mut tensor = SpectroTensor::zeros(fft_size, hop, sample_rate, frames);
    for slot in tensor.data_mut() {
        *slot = rng.random_range(-1.0..1.0);
    }
    tensor
}

/// Relative L2 distance between two tensors, normalized by the reference.
fn rel_l2(got: &SpectroTensor, want: &SpectroTensor) -> f64 {
    let num: f64 = got
        .data()
        .iter()
        .zip(want.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let den: f64 = want.data().iter().map(|b| b * b).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

fn noise_wave(len: usize, sample_rate: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = || (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
    let left: Vec<f64> = sample();
    let right: Vec<f64> = sample();
    Waveform::from_channels(left, right, sample_rate).unwrap()
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

#[test]
fn acceptance_01_oracle_sampler_exactness() {
    criterion(1, "oracle sampler exactness", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let clean = random_tensor(128, 48, 8_000, 16, &mut rng);
            let wet = random_tensor(128, 48, 8_000, 16, &mut rng);
            for steps in [1, 2, 4, 16] {
                let schedule = Schedule::cosine_squared(steps).map_err(|e| e.to_string())?;
                for mode in [ReverseMode::Direct, ReverseMode::DeltaNormalized] {
                    let oracle =
                        OraclePredictor::new(clean.clone(), wet.clone(), schedule.clone(), mode)
                            .map_err(|e| e.to_string())?;
                    let estimate = reverse_sample(&wet, &oracle, &schedule, mode)
                        .map_err(|e| e.to_string())?;
                    worst = worst.max(rel_l2(&estimate, &clean));
                }
            }
        }
        let elapsed = started.elapsed().as_secs_f64();
        check(worst < 1e-9, || {
            format!("worst relative L2 error {worst:.3e} is not below 1e-9")
        })?;
        check(elapsed < 10.0, || {
            format!("runtime {elapsed:.1}s exceeds the 10s budget")
        })
    });
}

#[test]
fn acceptance_02_schedule_identities() {
    criterion(2, "schedule identities", || {
        for steps in [1usize, 2, 4, 8, 16, 64, 500] {
            let schedule = Schedule::cosine_squared(steps).map_err(|e| e.to_string())?;
            let a0 = schedule.level(0).map_err(|e| e.to_string())?;
            let a_final = schedule.level(steps).map_err(|e| e.to_string())?;
            let g_sum: f64 = schedule.step_sizes().iter().sum();
            check((a0 - 1.0).abs() <= 1e-12, || {
                format!("T={steps}: a_0 = {a0} is not 1")
            })?;
            check(a_final.abs() <= 1e-12, || {
                format!("T={steps}: a_T = {a_final} is not 0")
            })?;
            check((g_sum - 1.0).abs() <= 1e-12, || {
                format!("T={steps}: step sizes sum to {g_sum}, not 1")
            })?;
            if steps % 2 == 0 {
                let mid = schedule.level(steps / 2).map_err(|e| e.to_string())?;
                check((mid - 0.5).abs() <= 1e-12, || {
                    format!("T={steps}: midpoint level {mid} is not 1/2")
                })?;
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_03_mode_equivalence() {
    criterion(3, "direct predictor wrapped as delta is trajectory-identical", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
        let schedule = Schedule::cosine_squared(16).map_err(|e| e.to_string())?;
        for trial in 0..5u64 {
            let wet = random_tensor(256, 96, 16_000, 10, &mut rng);
            let model =
                GainPredictor::random(wet.bins(), 16, ReverseMode::Direct, 900 + trial, 0.3);
            let direct = reverse_trajectory(&wet, &model, &schedule, ReverseMode::Direct)
                .map_err(|e| e.to_string())?;
            let wrapped = DeltaFromDirect::new(model, schedule.clone());
            let delta =
                reverse_trajectory(&wet, &wrapped, &schedule, ReverseMode::DeltaNormalized)
                    .map_err(|e| e.to_string())?;
            check(direct.len() == delta.len(), || {
                format!(
                    "trajectory lengths differ: {} vs {}",
                    direct.len(),
                    delta.len()
                )
            })?;
            for (t, (a, b)) in direct.iter().zip(&delta).enumerate() {
                let err = rel_l2(b, a);
                check(err <= 1e-12, || {
                    format!("trial {trial}, state {t}: relative difference {err:.3e} > 1e-12")
                })?;
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_04_loss_identities_and_gradients() {
    criterion(4, "loss identities and analytic gradients", || {
        let config = StftConfig {
            fft_size: 256,
            hop: 96,
            ..StftConfig::default()
        };
        let out_len = 4096;
        let weights = LossWeights::default();
        let schedule = Schedule::cosine_squared(4).map_err(|e| e.to_string())?;
        let clean = stft_forward(&noise_wave(out_len, 16_000, 41), &config)
            .map_err(|e| e.to_string())?;
        let wet =
            stft_forward(&noise_wave(out_len, 16_000, 42), &config).map_err(|e| e.to_string())?;
        let t = 2;
        let g = schedule.step_size(t).map_err(|e| e.to_string())?;
        let x_t = forward_mix(&clean, &wet, &schedule, t).map_err(|e| e.to_string())?;
        let x_prev = forward_mix(&clean, &wet, &schedule, t - 1).map_err(|e| e.to_string())?;

        // Perfect predictions. The direct target is handed back verbatim, so
        // the loss is exactly zero; the delta identity costs one rounding of
        // g * ((x_prev - x_t) / g) per element.
        let direct = total_loss(
            ReverseMode::Direct,
            &x_prev,
            &x_prev,
            &x_t,
            g,
            &weights,
            &config,
            out_len,
        )
        .map_err(|e| e.to_string())?;
        check(direct.total == 0.0, || {
            format!("perfect direct prediction has loss {}", direct.total)
        })?;
        let v = delta_target(&x_prev, &x_t, g).map_err(|e| e.to_string())?;
        let delta = total_loss(
            ReverseMode::DeltaNormalized,
            &v,
            &x_prev,
            &x_t,
            g,
            &weights,
            &config,
            out_len,
        )
        .map_err(|e| e.to_string())?;
        check(delta.total < 1e-13, || {
            format!("perfect delta prediction has loss {}", delta.total)
        })?;

        // Composition against values recomputed here from raw arrays.
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0004);
        let prediction = random_tensor(256, 96, 16_000, x_t.frames(), &mut rng);
        for mode in [ReverseMode::Direct, ReverseMode::DeltaNormalized] {
            let got = total_loss(
                mode, &prediction, &x_prev, &x_t, g, &weights, &config, out_len,
            )
            .map_err(|e| e.to_string())?;
            let (spectral_hand, audio_state) = match mode {
                ReverseMode::Direct => (
                    mean_abs_diff(prediction.data(), x_prev.data()),
                    prediction.clone(),
                ),
                ReverseMode::DeltaNormalized => {
                    let v_hand: Vec<f64> = x_prev
                        .data()
                        .iter()
                        .zip(x_t.data())
                        .map(|(p, c)| (p - c) / g)
                        .collect();
                    let increment = prediction
                        .data()
                        .iter()
                        .zip(&v_hand)
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                        / v_hand.len() as f64;
                    let mut implied = x_t.clone();
                    for (slot, p) in implied.data_mut().iter_mut().zip(prediction.data()) {
                        *slot += g * p;
                    }
                    let state = mean_abs_diff(implied.data(), x_prev.data());
                    (
                        weights.delta_term * increment + weights.state_term * state,
                        implied,
                    )
                }
            };
            let got_wave = istft_inverse(&audio_state, &config, out_len).map_err(|e| e.to_string())?;
            let want_wave = istft_inverse(&x_prev, &config, out_len).map_err(|e| e.to_string())?;
            let audio_hand = 0.5
                * (mean_abs_diff(got_wave.left(), want_wave.left())
                    + mean_abs_diff(got_wave.right(), want_wave.right()));
            let total_hand = spectral_hand + weights.lambda_audio * audio_hand;
            check(
                (got.total - total_hand).abs() <= 1e-12 * total_hand.max(1.0),
                || {
                    format!(
                        "{mode:?} total {} differs from recomputed {total_hand}",
                        got.total
                    )
                },
            )?;
        }

        // Analytic gradients against central differences at non-kink points.
        for (mode, seed) in [(ReverseMode::Direct, 77u64), (ReverseMode::DeltaNormalized, 78)] {
            let model = GainPredictor::random(config.bins(), 4, mode, seed, 0.5);
            let probe = gradient_probe(
                &model, &clean, &wet, &schedule, t, &weights, &config, out_len, 100, seed + 1,
            )
            .map_err(|e| e.to_string())?;
            check(probe.checked == 100, || {
                format!("{mode:?}: only {} of 100 probes avoided kinks", probe.checked)
            })?;
            check(probe.max_rel_err < 1e-4, || {
                format!(
                    "{mode:?}: worst gradient mismatch {:.3e} is not below 1e-4",
                    probe.max_rel_err
                )
            })?;
        }
        Ok(())
    });
}

#[test]
fn acceptance_05_stft_round_trip() {
    criterion(5, "stft round trip on 2s stereo noise", || {
        let config = StftConfig::default();
        for seed in [50u64, 51, 52] {
            let wave = noise_wave(88_200, 44_100, seed);
            let tensor = stft_forward(&wave, &config).map_err(|e| e.to_string())?;
            let back = istft_inverse(&tensor, &config, wave.len()).map_err(|e| e.to_string())?;
            // Interior excludes one analysis window at each edge, where the
            // reflection padding owns the reconstruction.
            let lo = config.fft_size;
            let hi = wave.len() - config.fft_size;
            for (got, want) in [
                (back.left(), wave.left()),
                (back.right(), wave.right()),
            ] {
                let num: f64 = (lo..hi).map(|i| (got[i] - want[i]).powi(2)).sum();
                let den: f64 = (lo..hi).map(|i| want[i].powi(2)).sum();
                let err = (num / den).sqrt();
                check(err < 1e-6, || {
                    format!("seed {seed}: interior relative L2 error {err:.3e} >= 1e-6")
                })?;
            }
        }
        Ok(())
    });
}

#[test]
fn acceptance_06_rir_fidelity() {
    criterion(6, "rir decay time and direct delay", || {
        let started = Instant::now();
        let ranges = RoomRanges::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0006);
        for case in 0..20 {
            let spec = random_room_spec(&mut rng, &ranges).map_err(|e| e.to_string())?;
            let sample = synth_rir(&spec).map_err(|e| e.to_string())?;
            let measured = measure_t60(&sample).map_err(|e| e.to_string())?;
            let rel = (measured - spec.t60) / spec.t60;
            check(rel.abs() <= 0.20, || {
                format!(
                    "case {case}: requested T60 {:.3}s, measured {measured:.3}s ({:+.1}%)",
                    spec.t60,
                    100.0 * rel
                )
            })?;
            let first_tap = sample
                .taps
                .iter()
                .position(|&v| v != 0.0)
                .ok_or_else(|| format!("case {case}: silent impulse response"))?;
            let distance = spec
                .source
                .iter()
                .zip(&spec.mic)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let geometric = (distance / 343.0 * spec.sample_rate as f64).round() as i64;
            let off = first_tap as i64 - geometric;
            check(off.abs() <= 1, || {
                format!("case {case}: direct tap at {first_tap}, geometry says {geometric}")
            })?;
        }
        let elapsed = started.elapsed().as_secs_f64();
        check(elapsed < 60.0, || {
            format!("runtime {elapsed:.1}s exceeds the 60s budget")
        })
    });
}

/// One rendered pair shared by the metric criteria: seeded clicks through a
/// small room.
fn metric_pair() -> Result<(Waveform, Waveform), String> {
    let dry = click_pattern_excerpt(&ClickPatternConfig::default(), 7).map_err(|e| e.to_string())?;
    let spec = RoomSpec {
        dims: [4.0, 3.2, 2.7],
        source: [1.1, 1.0, 1.2],
        mic: [2.4, 2.1, 1.5],
        t60: 0.25,
        max_order: None,
        sample_rate: 44_100,
    };
    let rir = synth_rir(&spec).map_err(|e| e.to_string())?;
    let wet = render_wet(&dry, &rir, 0.0, 0.99).map_err(|e| e.to_string())?;
    Ok((dry, wet))
}

#[test]
fn acceptance_07_metric_identity_matrix() {
    criterion(7, "metric identities on the clean and wet rows", || {
        let (dry, wet) = metric_pair()?;
        let cfg = MetricConfig::default();

        let clean_row = evaluate_all(&dry, &dry, &wet, &cfg).map_err(|e| e.to_string())?;
        let mut failures = Vec::new();
        let mut expect = |name: &str, got: f64, want: f64| {
            if (got - want).abs() > 1e-9 {
                failures.push(format!("{name} = {got}, want {want}"));
            }
        };
        expect("clean esr", clean_row.esr, 0.0);
        expect("clean nmi", clean_row.nmi, 1.0);
        expect("clean env", clean_row.env, 1.0);
        expect("clean tter", clean_row.tter, 0.0);
        expect("clean mstft_mag", clean_row.mstft_mag, 0.0);
        expect("clean mstft_phase", clean_row.mstft_phase, 0.0);
        expect("clean msd", clean_row.msd, 0.0);

        let wet_row = evaluate_all(&wet, &dry, &wet, &cfg).map_err(|e| e.to_string())?;
        expect("wet si_sdri", wet_row.si_sdri, 0.0);
        expect("wet onfi", wet_row.onfi, 0.0);

        check(failures.is_empty(), || failures.join("; "))
    });
}

#[test]
fn acceptance_08_metric_closed_forms() {
    criterion(8, "metric closed-form cases", || {
        let cfg = MetricConfig::default();
        let n = 44_100usize;
        let rate = 44_100;

        // Orthogonal noise at -20 dB: whole periods keep the tones zero-mean
        // and uncorrelated, so the projection leaves exactly the added tone.
        let tone = |cycles: f64, amp: f64, phase: f64| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    amp * (2.0 * std::f64::consts::PI * cycles * i as f64 / n as f64 + phase)
                        .sin()
                })
                .collect()
        };
        let reference = Waveform::from_channels(tone(100.0, 1.0, 0.0), tone(150.0, 1.0, 0.0), rate)
            .map_err(|e| e.to_string())?;
        let noisy = Waveform::from_channels(
            tone(100.0, 1.0, 0.0)
                .iter()
                .zip(tone(200.0, 0.1, 0.0))
                .map(|(x, e)| x + e)
                .collect(),
            tone(150.0, 1.0, 0.0)
                .iter()
                .zip(tone(300.0, 0.1, 0.0))
                .map(|(x, e)| x + e)
                .collect(),
            rate,
        )
        .map_err(|e| e.to_string())?;
        let sdr = si_sdr(&noisy, &reference, cfg.eps).map_err(|e| e.to_string())?;
        check((sdr - 20.0).abs() <= 0.1, || {
            format!("orthogonal-noise si_sdr {sdr:.4} dB, want 20.0 +- 0.1")
        })?;

        let silence = Waveform::silence(n, rate);
        let e = esr(&silence, &reference, cfg.eps).map_err(|e| e.to_string())?;
        check((e - 1.0).abs() <= 1e-6, || {
            format!("esr(0, x) = {e}, want 1")
        })?;

        let noise = noise_wave(n, rate, 80);
        let mut flipped = noise.clone();
        flipped.scale(-1.0);
        let phase = mstft_phase_mae(&flipped, &noise, &cfg).map_err(|e| e.to_string())?;
        check((phase - std::f64::consts::PI).abs() <= 1e-9, || {
            format!("polarity-flip phase MAE {phase}, want pi")
        })?;

        // One decaying click; multiplying the tail window's samples by
        // sqrt(10) shifts the transient-to-tail ratio by exactly 10 dB.
        let onset_at = 22_050usize;
        let tau = 0.08 * rate as f64;
        let channel: Vec<f64> = (0..2 * n)
            .map(|i| {
                if i < onset_at {
                    0.0
                } else {
                    0.8 * (-((i - onset_at) as f64) / tau).exp()
                        * if i % 2 == 0 { 1.0 } else { -0.7 }
                }
            })
            .collect();
        let reference = Waveform::from_channels(channel.clone(), channel, rate)
            .map_err(|e| e.to_string())?;
        let onsets = detect_onsets(&reference, &cfg).map_err(|e| e.to_string())?;
        check(onsets.len() == 1, || {
            format!("expected a single detected onset, found {:?}", onsets)
        })?;
        let start = (onsets[0] * rate as f64).round() as usize;
        let transient = (cfg.tter_transient_ms / 1000.0 * rate as f64).round() as usize;
        let tail = (cfg.tter_tail_ms / 1000.0 * rate as f64).round() as usize;
        let mut boosted = reference.clone();
        for side in 0..2 {
            for v in &mut boosted.channel_mut(side)[start + transient..start + transient + tail] {
                *v *= 10.0f64.sqrt();
            }
        }
        let dev = tter_dev(&boosted, &reference, &cfg).map_err(|e| e.to_string())?;
        check((dev - 10.0).abs() <= 0.2, || {
            format!("x10-tail tter deviation {dev:.4} dB, want 10.0 +- 0.2")
        })
    });
}

#[test]
fn acceptance_09_toy_end_to_end() {
    criterion(9, "toy end-to-end training run", || {
        let started = Instant::now();
        let spec = RoomSpec {
            dims: [4.2, 3.4, 2.8],
            source: [1.2, 1.1, 1.3],
            mic: [1.9, 1.5, 1.4],
            t60: 0.3,
            max_order: None,
            sample_rate: 44_100,
        };
        let rir = synth_rir(&spec).map_err(|e| e.to_string())?;
        let measured = measure_t60(&rir).map_err(|e| e.to_string())?;
        check((0.24..=0.36).contains(&measured), || {
            format!("room renders at T60 {measured:.3}s, want about 0.3s")
        })?;

        let click_cfg = ClickPatternConfig::default();
        let mut train_pairs = Vec::new();
        let mut held_out = Vec::new();
        for seed in 0..120u64 {
            let dry = click_pattern_excerpt(&click_cfg, seed).map_err(|e| e.to_string())?;
            let wet = render_wet(&dry, &rir, 0.0, 0.99).map_err(|e| e.to_string())?;
            if seed < 100 {
                train_pairs.push(TrainingPair { dry, wet });
            } else {
                held_out.push((dry, wet));
            }
        }

        let stft = StftConfig::default();
        let schedule = Schedule::cosine_squared(16).map_err(|e| e.to_string())?;
        let weights = LossWeights::default();
        let train_cfg = TrainConfig {
            epochs: 40,
            batch_size: 8,
            learning_rate: 0.02,
            seed: 7,
            ..TrainConfig::default()
        };
        let init =
            GainPredictor::new(stft.bins(), schedule.steps(), ReverseMode::DeltaNormalized);
        let outcome = train(
            init,
            &train_pairs,
            &schedule,
            &weights,
            &stft,
            &train_cfg,
            |_| {},
        )
        .map_err(|e| e.to_string())?;

        let first = outcome.history[0];
        let last = *outcome.history.last().unwrap();
        check(last < 0.7 * first, || {
            format!(
                "training loss {first:.5} -> {last:.5} (ratio {:.3}) misses the 0.7 gate",
                last / first
            )
        })?;

        let metric_cfg = MetricConfig::default();
        let mut sdri_sum = 0.0;
        let mut onfi_sum = 0.0;
        for (dry, wet) in &held_out {
            let wet_tensor = stft_forward(wet, &stft).map_err(|e| e.to_string())?;
            let estimate_tensor = reverse_sample(
                &wet_tensor,
                &outcome.ema,
                &schedule,
                ReverseMode::DeltaNormalized,
            )
            .map_err(|e| e.to_string())?;
            let estimate =
                istft_inverse(&estimate_tensor, &stft, wet.len()).map_err(|e| e.to_string())?;
            sdri_sum += si_sdri(&estimate, dry, wet, metric_cfg.eps).map_err(|e| e.to_string())?;
            onfi_sum +=
                onset_f_improvement(&estimate, wet, dry, &metric_cfg).map_err(|e| e.to_string())?;
        }
        let n = held_out.len() as f64;
        let mean_sdri = sdri_sum / n;
        let mean_onfi = onfi_sum / n;
        check(mean_sdri > 0.0, || {
            format!("held-out mean SI-SDRi {mean_sdri:.3} dB is not positive")
        })?;
        check(mean_onfi >= 0.0, || {
            format!("held-out mean onset-F improvement {mean_onfi:.4} is negative")
        })?;
        let elapsed = started.elapsed().as_secs_f64();
        check(elapsed < 600.0, || {
            format!("runtime {elapsed:.0}s exceeds the 10 minute budget")
        })
    });
}

/// Runs the installed binary in `dir`, failing loudly with its output.
fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let output = Command::new(env!("CARGO_BIN_EXE_dereverb"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| format!("failed to spawn the binary: {e}"))?;
    if output.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`dereverb {}` exited with {:?}\nstderr:\n{}",
            args.join(" "),
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ))
    }
}

/// All files under `dir`, relative paths, sorted for a stable comparison.
fn file_listing(dir: &Path) -> Result<Vec<PathBuf>, String> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(next) = stack.pop() {
        for entry in std::fs::read_dir(&next).map_err(|e| format!("{}: {e}", next.display()))? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                found.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    found.sort();
    Ok(found)
}

#[test]
fn acceptance_10_cli_determinism() {
    criterion(10, "same config and seed reproduce every artifact byte for byte", || {
        let base = tempfile::tempdir().map_err(|e| e.to_string())?;
        let dir = base.path();

        std::fs::write(
            dir.join("config.toml"),
            "config_version = 1\n\
             seed = 11\n\n\
             [rooms]\n\
             count = 2\n\
             dim_x = [3.2, 4.5]\n\
             dim_y = [3.0, 4.0]\n\
             dim_z = [2.5, 3.0]\n\
             t60 = [0.2, 0.28]\n\n\
             [train]\n\
             epochs = 2\n\
             batch_size = 2\n\
             learning_rate = 0.003\n",
        )
        .map_err(|e| e.to_string())?;
        std::fs::create_dir(dir.join("dry")).map_err(|e| e.to_string())?;
        for (name, seed) in [("kick.wav", 201u64), ("snare.wav", 202), ("hats.wav", 203)] {
            let wave = click_pattern_excerpt(&ClickPatternConfig::default(), seed)
                .map_err(|e| e.to_string())?;
            wav::write_stereo(&dir.join("dry").join(name), &wave).map_err(|e| e.to_string())?;
        }

        for run in ["run1", "run2"] {
            std::fs::create_dir(dir.join(run)).map_err(|e| e.to_string())?;
            run_cli(
                dir,
                &["--config", "config.toml", "render", "dry", "--out", &format!("{run}/data")],
            )?;
            run_cli(
                dir,
                &[
                    "--config",
                    "config.toml",
                    "train",
                    &format!("{run}/data/manifest.jsonl"),
                    "--out",
                    &format!("{run}/model"),
                ],
            )?;
            run_cli(
                dir,
                &[
                    "--config",
                    "config.toml",
                    "dereverb",
                    &format!("{run}/data/wet"),
                    "--checkpoint",
                    &format!("{run}/model/checkpoint.bin"),
                    "--out",
                    &format!("{run}/est"),
                ],
            )?;
            run_cli(
                dir,
                &[
                    "--config",
                    "config.toml",
                    "evaluate",
                    &format!("{run}/data/manifest.jsonl"),
                    "--estimates",
                    &format!("{run}/est"),
                    "--out",
                    &format!("{run}/report"),
                ],
            )?;
        }

        let first = file_listing(&dir.join("run1"))?;
        let second = file_listing(&dir.join("run2"))?;
        check(first == second, || {
            format!("runs produced different file sets: {first:?} vs {second:?}")
        })?;
        check(!first.is_empty(), || "runs produced no files".to_string())?;
        let mut compared = 0usize;
        for rel in &first {
            let a = std::fs::read(dir.join("run1").join(rel)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dir.join("run2").join(rel)).map_err(|e| e.to_string())?;
            check(a == b, || {
                format!("{} differs between identical runs", rel.display())
            })?;
            compared += 1;
        }
        // The two runs must have produced the full artifact set, not an
        // accidentally empty pipeline.
        for required in [
            "data/manifest.jsonl",
            "data/rir_index.jsonl",
            "data/resolved_config.toml",
            "model/checkpoint.bin",
            "model/loss_history.csv",
            "report/metrics.csv",
            "report/metrics.json",
        ] {
            check(first.iter().any(|p| p == Path::new(required)), || {
                format!("expected artifact {required} was not produced")
            })?;
        }
        check(compared >= 12, || {
            format!("only {compared} files compared; the pipeline looks truncated")
        })
    });
}
