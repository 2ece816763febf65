//! The three training regimes: independent pairs, joint training of one
//! decoder with an autoregressive multi-task loss, and hard parameter sharing
//! through a shared decoder trunk with per-task stems.

mod engine;
mod system;
mod trace;

pub use engine::{
    signal_gain, train, train_hard_sharing, train_independent, train_joint, TrainOutcome, Trainer,
};
pub use system::{DecoderSet, TaskInfo, TrainedSystem};
pub use trace::{EpochRecord, LossTrace, StepRecord};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array4, ArrayView, Dimension};
use serde::{Deserialize, Serialize};

use crate::channel_data::ChannelDataset;
use crate::error::{invalid, Error, Result};
use crate::models::{CompressionRatio, Decoder, Encoder, Family, SharedStemDecoder};
use crate::nn::{cst, AdamConfig, Parameters, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Independent,
    Joint,
    HardSharing,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Independent, Regime::Joint, Regime::HardSharing];
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Independent => "independent",
            Regime::Joint => "joint",
            Regime::HardSharing => "hard_sharing",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Regime::Independent),
            "joint" => Ok(Regime::Joint),
            "hard_sharing" | "hard-sharing" | "hard" => Ok(Regime::HardSharing),
            _ => invalid(format!("unknown regime '{s}' (expected independent, joint or hard_sharing)")),
        }
    }
}

/// Per-epoch learning-rate schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// The configured rate throughout.
    #[default]
    Constant,
    /// Half-cosine decay from the configured rate towards zero over the run:
    /// `lr * (1 + cos(pi * epoch / epochs)) / 2`.
    Cosine,
}

/// Optimization hyperparameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the previous step's loss in the joint objective, in `[0, 1)`.
    pub alpha: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Batch size for validation passes; does not affect training.
    pub eval_batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            alpha: 0.3,
            batch_size: 50,
            learning_rate: adam.learning_rate,
            lr_schedule: LrSchedule::Constant,
            epochs: 10,
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            eval_batch_size: 250,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return invalid(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if self.batch_size == 0 {
            return invalid("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return invalid("optimizer moment decays must lie in [0, 1) and epsilon must be positive");
        }
        if self.eval_batch_size == 0 {
            return invalid("eval_batch_size must be at least 1");
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let phase = std::f64::consts::PI * epoch as f64 / self.epochs.max(1) as f64;
                self.learning_rate * 0.5 * (1.0 + phase.cos())
            }
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One task: an encoder family serving users of the scenario the datasets
/// were drawn from.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub family: Family,
    pub compression_ratio: CompressionRatio,
    pub train: ChannelDataset,
    pub val: ChannelDataset,
}

impl TaskSpec {
    pub fn scenario(&self) -> &str {
        &self.train.meta.scenario
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.family, self.scenario())
    }
}

/// User-distribution category of a task set: single/multi scenario crossed
/// with single/multi encoder model (`SSSM`, `SSMM`, `MSSM`, `MSMM`).
pub fn distribution_label<'a>(tasks: impl IntoIterator<Item = (&'a str, Family)>) -> &'static str {
    let mut scenarios = Vec::new();
    let mut families = Vec::new();
    for (s, f) in tasks {
        if !scenarios.contains(&s) {
            scenarios.push(s);
        }
        if !families.contains(&f) {
            families.push(f);
        }
    }
    match (scenarios.len() > 1, families.len() > 1) {
        (false, false) => "SSSM",
        (false, true) => "SSMM",
        (true, false) => "MSSM",
        (true, true) => "MSMM",
    }
}

/// `(1/B) Σ_i ‖H_i − Ĥ_i‖²_F` over the leading (sample) axis.
pub fn mse_loss<A, D>(h: &ArrayView<'_, A, D>, h_hat: &ArrayView<'_, A, D>) -> Result<f64>
where
    A: Copy + Into<f64>,
    D: Dimension,
{
    if h.shape() != h_hat.shape() {
        return invalid(format!("shape mismatch: {:?} vs {:?}", h.shape(), h_hat.shape()));
    }
    let b = h.shape().first().copied().unwrap_or(0);
    if b == 0 {
        return invalid("mse of an empty batch");
    }
    let sum: f64 = h
        .iter()
        .zip(h_hat.iter())
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum();
    Ok(sum / b as f64)
}

/// `current_mse + alpha * previous_loss`.
pub fn autoregressive_loss(current_mse: f64, previous_loss: f64, alpha: f64) -> f64 {
    current_mse + alpha * previous_loss
}

/// MSE of normalized tensors measured on the denormalized scale
/// (`scale² · (1/B) Σ ‖x − y‖²`), and `weight` times its gradient with respect to `y`.
fn mse_with_grad<T: Scalar>(x: &Array4<T>, y: &Array4<T>, scale: f64, weight: f64) -> (f64, Array4<T>) {
    let b = x.dim().0 as f64;
    let s2 = scale * scale;
    let mut sum = 0.0f64;
    let mut dy = y - x;
    for d in dy.iter() {
        let d = d.to_f64().unwrap_or(f64::NAN);
        sum += d * d;
    }
    let g: T = cst(weight * 2.0 * s2 / b);
    dy.mapv_inplace(|d| d * g);
    (s2 * sum / b, dy)
}

/// A normalized minibatch of one task and its normalization scale.
#[derive(Debug, Clone, Copy)]
pub struct StepBatch<'a, T> {
    pub task: usize,
    pub x: &'a Array4<T>,
    pub scale: f64,
}

/// Accumulates `weight · ∇ mse` for an encoder/decoder pair into the gradient
/// buffers and returns the (unweighted) MSE.
pub fn pair_gradients<T: Scalar>(
    encoder: &Encoder<T>,
    decoder: &Decoder<T>,
    batch: StepBatch<'_, T>,
    weight: f64,
    encoder_grads: &mut Encoder<T>,
    decoder_grads: &mut Decoder<T>,
) -> Result<f64> {
    let (code, ec) = encoder.forward(batch.x)?;
    let (y, dc) = decoder.forward(&code)?;
    let (mse, dy) = mse_with_grad(batch.x, &y, batch.scale, weight);
    let dcode = decoder.backward(&dc, &dy, decoder_grads);
    encoder.backward(&ec, &dcode, encoder_grads);
    Ok(mse)
}

/// Like [`pair_gradients`], routed through the stem of `batch.task`.
pub fn shared_gradients<T: Scalar>(
    encoder: &Encoder<T>,
    decoder: &SharedStemDecoder<T>,
    batch: StepBatch<'_, T>,
    weight: f64,
    encoder_grads: &mut Encoder<T>,
    decoder_grads: &mut SharedStemDecoder<T>,
) -> Result<f64> {
    let (code, ec) = encoder.forward(batch.x)?;
    let (y, dc) = decoder.forward_task(&code, batch.task)?;
    let (mse, dy) = mse_with_grad(batch.x, &y, batch.scale, weight);
    let dcode = decoder.backward_task(&dc, &dy, decoder_grads);
    encoder.backward(&ec, &dcode, encoder_grads);
    Ok(mse)
}

/// Gradients of one joint-training step objective.
#[derive(Debug, Clone)]
pub struct JointGradients<T> {
    pub mse_current: f64,
    /// MSE of the retained previous batch under the current parameters, when
    /// that term is active.
    pub mse_previous: Option<f64>,
    /// Encoder gradients, `None` for encoders the step does not touch.
    pub encoders: Vec<Option<Encoder<T>>>,
    pub decoder: Decoder<T>,
}

/// Gradients of `mse(current) + alpha · mse(previous)` where both terms are
/// evaluated under the current parameters. The previous term is dropped when
/// `alpha` is zero or there is no previous batch.
pub fn joint_step_gradients<T: Scalar>(
    encoders: &[Encoder<T>],
    decoder: &Decoder<T>,
    current: StepBatch<'_, T>,
    previous: Option<StepBatch<'_, T>>,
    alpha: f64,
) -> Result<JointGradients<T>> {
    for b in std::iter::once(&current).chain(previous.as_ref()) {
        if b.task >= encoders.len() {
            return invalid(format!("task {} has no encoder", b.task));
        }
    }
    let mut enc_grads: Vec<Option<Encoder<T>>> = vec![None; encoders.len()];
    let mut dec_grads = decoder.zeros_like();
    let i = current.task;
    let mut g = encoders[i].zeros_like();
    let mse_current = pair_gradients(&encoders[i], decoder, current, 1.0, &mut g, &mut dec_grads)?;
    enc_grads[i] = Some(g);
    let mut mse_previous = None;
    if let Some(prev) = previous.filter(|_| alpha > 0.0) {
        let j = prev.task;
        let mut g = enc_grads[j].take().unwrap_or_else(|| encoders[j].zeros_like());
        mse_previous = Some(pair_gradients(&encoders[j], decoder, prev, alpha, &mut g, &mut dec_grads)?);
        enc_grads[j] = Some(g);
    }
    Ok(JointGradients {
        mse_current,
        mse_previous,
        encoders: enc_grads,
        decoder: dec_grads,
    })
}
