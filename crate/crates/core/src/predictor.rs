//! Trainable reverse-step predictor.
//!
//! The model is deliberately small: for every reverse step and frequency bin
//! it holds one complex gain and one complex bias, shared between the left
//! and right audio channels and broadcast over frames. The forward map is
//! affine in its parameters, so gradients are exact and cheap: the loss
//! gradient with respect to the prediction chains into closed-form parameter
//! gradients without any autodiff machinery.

use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{forward_mix, DiffusionError, Predictor, ReverseMode};
use crate::losses::{total_loss, total_loss_and_pred_grad, LossError, LossWeights};
use crate::schedule::{Schedule, ScheduleError};
use crate::stft::{stft_forward, SpectroTensor, StftConfig, StftError, Waveform};

const CHECKPOINT_MAGIC: &[u8; 8] = b"DRVBGPC1";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("state has {got} bins but the predictor was built for {want}")]
    BinMismatch { got: usize, want: usize },
    #[error("step {t} is outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("the predictor covers {model} steps but the schedule has {schedule}")]
    StepCountMismatch { model: usize, schedule: usize },
    #[error("training requires at least one example")]
    EmptyDataset,
    #[error("training example {index} is inconsistent: {detail}")]
    BadExample { index: usize, detail: String },
    #[error("invalid training config: {0}")]
    BadTrainConfig(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Stft(#[from] StftError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a predictor checkpoint")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported checkpoint version {version}")]
    BadVersion { path: PathBuf, version: u32 },
    #[error("{path}: corrupt checkpoint ({detail})")]
    Corrupt { path: PathBuf, detail: String },
}

/// One full set of model parameters, each plane indexed `[step][bin]`.
#[derive(Debug, Clone, PartialEq)]
struct ParamSet {
    w_re: Vec<f64>,
    w_im: Vec<f64>,
    b_re: Vec<f64>,
    b_im: Vec<f64>,
}

impl ParamSet {
    fn zeros(steps: usize, bins: usize) -> Self {
        let n = steps * bins;
        ParamSet {
            w_re: vec![0.0; n],
            w_im: vec![0.0; n],
            b_re: vec![0.0; n],
            b_im: vec![0.0; n],
        }
    }

    fn planes(&self) -> [&[f64]; 4] {
        [&self.w_re, &self.w_im, &self.b_re, &self.b_im]
    }

    fn planes_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.w_re,
            &mut self.w_im,
            &mut self.b_re,
            &mut self.b_im,
        ]
    }

    fn is_finite(&self) -> bool {
        self.planes()
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// Per-step, per-bin complex affine model of one reverse step.
#[derive(Debug, Clone, PartialEq)]
pub struct GainPredictor {
    mode: ReverseMode,
    bins: usize,
    steps: usize,
    params: ParamSet,
}

impl GainPredictor {
    /// Neutral initialization: the identity map in direct mode (the state is
    /// passed through unchanged), the zero increment in delta mode.
    pub fn new(bins: usize, steps: usize, mode: ReverseMode) -> Self {
        let mut params = ParamSet::zeros(steps, bins);
        if mode == ReverseMode::Direct {
            for v in params.w_re.iter_mut() {
                *v = 1.0;
            }
        }
        GainPredictor {
            mode,
            bins,
            steps,
            params,
        }
    }

    /// All parameters drawn uniformly from `[-scale, scale]`. Used by tests
    /// that need a nontrivial but reproducible model.
    pub fn random(bins: usize, steps: usize, mode: ReverseMode, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::zeros(steps, bins);
        for plane in params.planes_mut() {
            for v in plane.iter_mut() {
                *v = rng.random_range(-scale..scale);
            }
        }
        GainPredictor {
            mode,
            bins,
            steps,
            params,
        }
    }

    pub fn mode(&self) -> ReverseMode {
        self.mode
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn check_step(&self, t: usize) -> Result<(), PredictorError> {
        if t == 0 || t > self.steps {
            return Err(PredictorError::StepOutOfRange {
                t,
                steps: self.steps,
            });
        }
        Ok(())
    }

    /// Runs the model on a state at step `t`. The complex gain multiplies
    /// each bin of both audio channels, the bias is added afterwards.
    pub fn apply(&self, state: &SpectroTensor, t: usize) -> Result<SpectroTensor, PredictorError> {
        if state.bins() != self.bins {
            return Err(PredictorError::BinMismatch {
                got: state.bins(),
                want: self.bins,
            });
        }
        self.check_step(t)?;
        let row = (t - 1) * self.bins;
        let mut out = state.clone();
        for side in 0..2 {
            for bin in 0..self.bins {
                let w_re = self.params.w_re[row + bin];
                let w_im = self.params.w_im[row + bin];
                let b_re = self.params.b_re[row + bin];
                let b_im = self.params.b_im[row + bin];
                for frame in 0..state.frames() {
                    let x_re = state.get(2 * side, bin, frame);
                    let x_im = state.get(2 * side + 1, bin, frame);
                    out.set(2 * side, bin, frame, w_re * x_re - w_im * x_im + b_re);
                    out.set(2 * side + 1, bin, frame, w_re * x_im + w_im * x_re + b_im);
                }
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients for step `t` given the loss gradient
    /// with respect to the prediction. Other steps receive nothing because
    /// they did not participate in the forward pass.
    fn accumulate_grad(
        &self,
        grads: &mut ParamSet,
        state: &SpectroTensor,
        pred_grad: &SpectroTensor,
        t: usize,
    ) {
        let row = (t - 1) * self.bins;
        for side in 0..2 {
            for bin in 0..self.bins {
                let mut gw_re = 0.0;
                let mut gw_im = 0.0;
                let mut gb_re = 0.0;
                let mut gb_im = 0.0;
                for frame in 0..state.frames() {
                    let x_re = state.get(2 * side, bin, frame);
                    let x_im = state.get(2 * side + 1, bin, frame);
                    let g_re = pred_grad.get(2 * side, bin, frame);
                    let g_im = pred_grad.get(2 * side + 1, bin, frame);
                    gw_re += g_re * x_re + g_im * x_im;
                    gw_im += -g_re * x_im + g_im * x_re;
                    gb_re += g_re;
                    gb_im += g_im;
                }
                grads.w_re[row + bin] += gw_re;
                grads.w_im[row + bin] += gw_im;
                grads.b_re[row + bin] += gb_re;
                grads.b_im[row + bin] += gb_im;
            }
        }
    }
}

impl Predictor for GainPredictor {
    fn predict(&self, state: &SpectroTensor, t: usize) -> Result<SpectroTensor, DiffusionError> {
        self.apply(state, t)
            .map_err(|e| DiffusionError::PredictorFailed {
                t,
                message: e.to_string(),
            })
    }
}

/// Optimizer and schedule settings for a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub ema_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            batch_size: 8,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            ema_decay: 0.995,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |msg: &str| Err(PredictorError::BadTrainConfig(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("ema_decay must lie in [0, 1)");
        }
        Ok(())
    }
}

/// One dry/wet excerpt pair, equal length and rate.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub dry: Waveform,
    pub wet: Waveform,
}

/// Progress snapshot handed to the training observer after each epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_loss: f64,
}

/// Result of a training run: the final parameters, their exponential moving
/// average, and the per-epoch mean loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GainPredictor,
    pub ema: GainPredictor,
    pub history: Vec<f64>,
}

struct Adam {
    m: ParamSet,
    v: ParamSet,
    updates: u64,
}

impl Adam {
    fn new(steps: usize, bins: usize) -> Self {
        Adam {
            m: ParamSet::zeros(steps, bins),
            v: ParamSet::zeros(steps, bins),
            updates: 0,
        }
    }

    fn update(&mut self, params: &mut ParamSet, grads: &ParamSet, config: &TrainConfig) {
        self.updates += 1;
        let correction1 = 1.0 - config.beta1.powi(self.updates as i32);
        let correction2 = 1.0 - config.beta2.powi(self.updates as i32);
        let param_planes = params.planes_mut();
        let grad_planes = grads.planes();
        let m_planes = self.m.planes_mut();
        let v_planes = self.v.planes_mut();
        for (((p, g), m), v) in param_planes
            .into_iter()
            .zip(grad_planes)
            .zip(m_planes)
            .zip(v_planes)
        {
            for i in 0..p.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
    }
}

/// One exponential-moving-average step: `shadow <- d * shadow + (1 - d) * current`.
fn ema_step(shadow: &mut ParamSet, current: &ParamSet, decay: f64) {
    let shadow_planes = shadow.planes_mut();
    let current_planes = current.planes();
    for (s, c) in shadow_planes.into_iter().zip(current_planes) {
        for i in 0..s.len() {
            s[i] = decay * s[i] + (1.0 - decay) * c[i];
        }
    }
}

fn check_pairs(
    pairs: &[TrainingPair],
    stft_config: &StftConfig,
) -> Result<(usize, u32), PredictorError> {
    let first = pairs.first().ok_or(PredictorError::EmptyDataset)?;
    let len = first.dry.len();
    let rate = first.dry.sample_rate();
    for (index, pair) in pairs.iter().enumerate() {
        if pair.dry.len() != pair.wet.len() {
            return Err(PredictorError::BadExample {
                index,
                detail: format!(
                    "dry has {} samples, wet has {}",
                    pair.dry.len(),
                    pair.wet.len()
                ),
            });
        }
        if pair.dry.sample_rate() != pair.wet.sample_rate() || pair.dry.sample_rate() != rate {
            return Err(PredictorError::BadExample {
                index,
                detail: "sample rates disagree".to_string(),
            });
        }
        if pair.dry.len() != len {
            return Err(PredictorError::BadExample {
                index,
                detail: format!("length {} differs from the first pair's {len}", pair.dry.len()),
            });
        }
    }
    if len < stft_config.fft_size {
        return Err(PredictorError::BadExample {
            index: 0,
            detail: format!("{len} samples is shorter than one analysis frame"),
        });
    }
    Ok((len, rate))
}

/// Trains a predictor with mini-batch Adam.
///
/// Each batch samples one step `t`, mixes every example to `x_t` and
/// `x_{t-1}`, and descends the batch-mean loss. The run is fully determined
/// by `train_config.seed`. The EMA shadow starts at the initial parameters
/// and tracks every update.
pub fn train(
    init: GainPredictor,
    pairs: &[TrainingPair],
    schedule: &Schedule,
    weights: &LossWeights,
    stft_config: &StftConfig,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(EpochReport),
) -> Result<TrainOutcome, PredictorError> {
    train_config.validate()?;
    stft_config.validate()?;
    if schedule.steps() != init.steps {
        return Err(PredictorError::StepCountMismatch {
            model: init.steps,
            schedule: schedule.steps(),
        });
    }
    if stft_config.bins() != init.bins {
        return Err(PredictorError::BinMismatch {
            got: stft_config.bins(),
            want: init.bins,
        });
    }
    let (segment_len, _) = check_pairs(pairs, stft_config)?;

    let mode = init.mode;
    let mut model = init;
    let mut shadow = model.params.clone();
    let mut adam = Adam::new(model.steps, model.bins);
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let mut history = Vec::with_capacity(train_config.epochs);

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..train_config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_index, batch) in order.chunks(train_config.batch_size).enumerate() {
            let t = rng.random_range(1..=model.steps);
            let g = schedule.step_size(t)?;
            let mut grads = ParamSet::zeros(model.steps, model.bins);
            let mut batch_loss = 0.0;
            for &example in batch {
                let clean = stft_forward(&pairs[example].dry, stft_config)?;
                let wet = stft_forward(&pairs[example].wet, stft_config)?;
                let x_t = forward_mix(&clean, &wet, schedule, t)?;
                let x_prev = forward_mix(&clean, &wet, schedule, t - 1)?;
                let prediction = model.apply(&x_t, t)?;
                let (breakdown, pred_grad) = total_loss_and_pred_grad(
                    mode,
                    &prediction,
                    &x_prev,
                    &x_t,
                    g,
                    weights,
                    stft_config,
                    segment_len,
                )?;
                batch_loss += breakdown.total;
                model.accumulate_grad(&mut grads, &x_t, &pred_grad, t);
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(PredictorError::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            for plane in grads.planes_mut() {
                for v in plane.iter_mut() {
                    *v *= scale;
                }
            }
            adam.update(&mut model.params, &grads, train_config);
            ema_step(&mut shadow, &model.params, train_config.ema_decay);
            epoch_loss += batch_loss;
            batches += 1;
        }
        let mean_loss = epoch_loss / batches as f64;
        if !model.params.is_finite() || !shadow.is_finite() {
            return Err(PredictorError::NonFiniteLoss {
                epoch,
                batch: batches.saturating_sub(1),
            });
        }
        history.push(mean_loss);
        on_epoch(EpochReport { epoch, mean_loss });
    }

    let ema = GainPredictor {
        mode,
        bins: model.bins,
        steps: model.steps,
        params: shadow,
    };
    Ok(TrainOutcome {
        model,
        ema,
        history,
    })
}

/// Outcome of [`gradient_probe`]: how many coordinates were audited and the
/// worst relative disagreement between the analytic slope and the central
/// difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientProbe {
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Audits the analytic parameter gradients against central finite
/// differences (h = 1e-5) at randomly chosen coordinates of step `t`.
///
/// The loss is piecewise linear in each parameter, so between kinks the
/// central difference is exact. Coordinates whose probe interval straddles a
/// kink are detected by comparing the h and 2h slopes and skipped; `checked`
/// falls short of `probes` only if the attempt budget of `20 * probes` runs
/// out first.
#[allow(clippy::too_many_arguments)]
pub fn gradient_probe(
    model: &GainPredictor,
    clean: &SpectroTensor,
    wet: &SpectroTensor,
    schedule: &Schedule,
    t: usize,
    weights: &LossWeights,
    stft_config: &StftConfig,
    out_len: usize,
    probes: usize,
    seed: u64,
) -> Result<GradientProbe, PredictorError> {
    if schedule.steps() != model.steps {
        return Err(PredictorError::StepCountMismatch {
            model: model.steps,
            schedule: schedule.steps(),
        });
    }
    let g = schedule.step_size(t)?;
    let x_t = forward_mix(clean, wet, schedule, t)?;
    let x_prev = forward_mix(clean, wet, schedule, t - 1)?;
    let prediction = model.apply(&x_t, t)?;
    let (_, pred_grad) = total_loss_and_pred_grad(
        model.mode,
        &prediction,
        &x_prev,
        &x_t,
        g,
        weights,
        stft_config,
        out_len,
    )?;
    let mut grads = ParamSet::zeros(model.steps, model.bins);
    model.accumulate_grad(&mut grads, &x_t, &pred_grad, t);

    let eval = |m: &GainPredictor| -> Result<f64, PredictorError> {
        let p = m.apply(&x_t, t)?;
        let breakdown = total_loss(
            model.mode, &p, &x_prev, &x_t, g, weights, stft_config, out_len,
        )?;
        Ok(breakdown.total)
    };

    let row = (t - 1) * model.bins;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0usize;
    let mut attempted = 0usize;
    let mut max_rel_err: f64 = 0.0;
    let h = 1e-5;
    while checked < probes && attempted < probes.saturating_mul(20) {
        attempted += 1;
        let plane = rng.random_range(0..4usize);
        let index = row + rng.random_range(0..model.bins);
        let probe = |offset: f64| -> Result<f64, PredictorError> {
            let mut m = model.clone();
            m.params.planes_mut()[plane][index] += offset;
            eval(&m)
        };
        let slope_h = (probe(h)? - probe(-h)?) / (2.0 * h);
        let slope_2h = (probe(2.0 * h)? - probe(-2.0 * h)?) / (4.0 * h);
        if (slope_h - slope_2h).abs() > 1e-7 * slope_h.abs().max(1.0) {
            continue;
        }
        let analytic = grads.planes()[plane][index];
        let rel = (slope_h - analytic).abs() / slope_h.abs().max(analytic.abs()).max(1e-6);
        max_rel_err = max_rel_err.max(rel);
        checked += 1;
    }
    Ok(GradientProbe {
        checked,
        max_rel_err,
    })
}

/// A saved pair of parameter sets: the trained model and its EMA.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: GainPredictor,
    pub ema: GainPredictor,
}

fn push_params(buffer: &mut Vec<u8>, params: &ParamSet) {
    for plane in params.planes() {
        for &v in plane {
            buffer.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Serializes model and EMA parameters to a bit-exact binary file,
/// written atomically.
pub fn save_checkpoint(
    path: &Path,
    model: &GainPredictor,
    ema: &GainPredictor,
) -> Result<(), PredictorError> {
    if model.mode != ema.mode || model.bins != ema.bins || model.steps != ema.steps {
        return Err(PredictorError::BadTrainConfig(
            "model and EMA shapes disagree".to_string(),
        ));
    }
    let mut buffer = Vec::with_capacity(24 + 2 * 4 * 8 * model.steps * model.bins);
    buffer.extend_from_slice(CHECKPOINT_MAGIC);
    buffer.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buffer.push(match model.mode {
        ReverseMode::Direct => 0,
        ReverseMode::DeltaNormalized => 1,
    });
    buffer.extend_from_slice(&[0u8; 3]);
    buffer.extend_from_slice(&(model.steps as u32).to_le_bytes());
    buffer.extend_from_slice(&(model.bins as u32).to_le_bytes());
    push_params(&mut buffer, &model.params);
    push_params(&mut buffer, &ema.params);

    let io_err = |source: std::io::Error| PredictorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(dir) => tempfile::Builder::new().prefix(".partial-").tempfile_in(dir),
        None => tempfile::Builder::new().prefix(".partial-").tempfile(),
    }
    .map_err(io_err)?;
    std::fs::write(tmp.path(), &buffer).map_err(io_err)?;
    tmp.into_temp_path().persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn read_params(
    bytes: &mut impl Read,
    steps: usize,
    bins: usize,
    path: &Path,
) -> Result<ParamSet, PredictorError> {
    let mut params = ParamSet::zeros(steps, bins);
    let mut raw = [0u8; 8];
    for plane in params.planes_mut() {
        for v in plane.iter_mut() {
            bytes
                .read_exact(&mut raw)
                .map_err(|_| PredictorError::Corrupt {
                    path: path.to_path_buf(),
                    detail: "file ends before all parameters".to_string(),
                })?;
            *v = f64::from_le_bytes(raw);
        }
    }
    Ok(params)
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PredictorError> {
    let data = std::fs::read(path).map_err(|source| PredictorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |detail: &str| PredictorError::Corrupt {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if data.len() < 24 {
        return Err(corrupt("file too small for a header"));
    }
    if &data[..8] != CHECKPOINT_MAGIC {
        return Err(PredictorError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let version = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(PredictorError::BadVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let mode = match data[12] {
        0 => ReverseMode::Direct,
        1 => ReverseMode::DeltaNormalized,
        other => return Err(corrupt(&format!("unknown mode byte {other}"))),
    };
    let steps = u32::from_le_bytes(data[16..20].try_into().expect("4 bytes")) as usize;
    let bins = u32::from_le_bytes(data[20..24].try_into().expect("4 bytes")) as usize;
    let expected = 24 + 2 * 4 * 8 * steps * bins;
    if data.len() != expected {
        return Err(corrupt(&format!(
            "expected {expected} bytes for {steps} steps x {bins} bins, found {}",
            data.len()
        )));
    }
    let mut cursor = &data[24..];
    let model_params = read_params(&mut cursor, steps, bins, path)?;
    let ema_params = read_params(&mut cursor, steps, bins, path)?;
    Ok(Checkpoint {
        model: GainPredictor {
            mode,
            bins,
            steps,
            params: model_params,
        },
        ema: GainPredictor {
            mode,
            bins,
            steps,
            params: ema_params,
        },
    })
}
