use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::system::{DecoderSet, TaskInfo, TrainedSystem};
use super::trace::{EpochRecord, LossTrace, StepRecord};
use super::{joint_step_gradients, pair_gradients, shared_gradients, Regime, StepBatch, TaskSpec, TrainConfig};
use crate::error::{invalid, Error, Result};
use crate::evaluation::reconstruction_nmse_db;
use crate::models::{Checkpoint, CheckpointBuilder, Decoder, Encoder, Family, ModelConfig, SharedStemDecoder};
use crate::nn::{Adam, Parameters};
use crate::seed::{derive_seed, rng_for};

/// Result of a finished run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Models with the best validation NMSE (per task for independent pairs,
    /// by mean over tasks otherwise).
    pub best: TrainedSystem,
    /// Models after the last epoch.
    pub last: TrainedSystem,
    pub trace: LossTrace,
    pub best_epochs: Vec<Option<usize>>,
}

/// Resumable state that is not part of the models or optimizers.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunState {
    regime: Regime,
    config: TrainConfig,
    tasks: Vec<TaskInfo>,
    epochs_done: usize,
    previous: Option<(usize, Vec<usize>)>,
    best_scores: Vec<Option<f64>>,
    best_epochs: Vec<Option<usize>>,
    trace: LossTrace,
}

/// Step-level driver of one training run.
pub struct Trainer<'a> {
    tasks: &'a [TaskSpec],
    current: TrainedSystem,
    best: TrainedSystem,
    encoder_opt: Vec<Adam<f32>>,
    /// Per task (independent), one (joint), or trunk followed by one per
    /// task stem (hard sharing).
    decoder_opt: Vec<Adam<f32>>,
    state: RunState,
    epoch_mse: Vec<(f64, usize)>,
}

fn check_tasks(regime: Regime, tasks: &[TaskSpec], cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    let Some(first) = tasks.first() else {
        return invalid("at least one task is required");
    };
    let dims = first.train.meta.dims;
    for (t, task) in tasks.iter().enumerate() {
        if task.train.is_empty() || task.val.is_empty() {
            return invalid(format!("task {t} has an empty training or validation set"));
        }
        for ds in [&task.train, &task.val] {
            let d = ds.meta.dims;
            if (d.n_delay, d.n_tx) != (dims.n_delay, dims.n_tx) {
                return Err(Error::ShapeMismatch(format!(
                    "task {t} dataset dims {}x{} differ from {}x{}",
                    d.n_delay, d.n_tx, dims.n_delay, dims.n_tx
                )));
            }
        }
        task.compression_ratio.code_len(dims.n_delay, dims.n_tx)?;
        if regime != Regime::Independent && task.compression_ratio != first.compression_ratio {
            return invalid("tasks sharing a decoder must use the same compression ratio");
        }
    }
    if regime == Regime::Joint && tasks.len() == 1 && cfg.alpha > 0.0 {
        log::warn!("joint training with a single task regularizes the task against its own previous batch");
    }
    Ok(())
}

/// Reciprocal RMS of the centred training tensors pooled over `tasks`; 1 for
/// degenerate (constant) data.
pub fn signal_gain<'a>(tasks: impl IntoIterator<Item = &'a TaskSpec>) -> f64 {
    let (ss, n) = tasks.into_iter().fold((0.0, 0usize), |(ss, n), t| {
        let (s, c) = t.train.centred_power();
        (ss + s, n + c)
    });
    let rms = (ss / n.max(1) as f64).sqrt();
    if rms > 0.0 && rms.is_finite() {
        1.0 / rms
    } else {
        1.0
    }
}

fn encoder_config(task: &TaskSpec) -> ModelConfig {
    ModelConfig::encoder(task.family, task.compression_ratio, &task.train.meta.dims)
        .with_signal_gain(signal_gain([task]))
}

fn initial_system(regime: Regime, tasks: &[TaskSpec], seed: u64) -> Result<TrainedSystem> {
    let dims = tasks[0].train.meta.dims;
    let ratio = tasks[0].compression_ratio;
    let encoders = tasks
        .iter()
        .enumerate()
        .map(|(t, task)| Encoder::build(&encoder_config(task), derive_seed(seed, &format!("encoder{t}"))))
        .collect::<Result<Vec<_>>>()?;
    let shared_seed = derive_seed(seed, "decoder0");
    let decoders = match regime {
        Regime::Independent => DecoderSet::PerTask(
            tasks
                .iter()
                .enumerate()
                .map(|(t, task)| {
                    let cfg = ModelConfig::decoder(task.family, task.compression_ratio, &task.train.meta.dims)
                        .with_signal_gain(signal_gain([task]));
                    Decoder::build(&cfg, derive_seed(seed, &format!("decoder{t}")))
                })
                .collect::<Result<_>>()?,
        ),
        Regime::Joint => DecoderSet::Joint(Decoder::build(
            &ModelConfig::decoder(Family::StNet, ratio, &dims).with_signal_gain(signal_gain(tasks)),
            shared_seed,
        )?),
        Regime::HardSharing => DecoderSet::Shared(SharedStemDecoder::build(
            &ModelConfig::shared_stem_decoder(ratio, &dims, tasks.len()).with_signal_gain(signal_gain(tasks)),
            shared_seed,
        )?),
    };
    Ok(TrainedSystem {
        regime,
        tasks: tasks.iter().map(TaskInfo::of).collect(),
        encoders,
        decoders,
    })
}

fn decoder_optimizers(decoders: &DecoderSet, cfg: &TrainConfig) -> Vec<Adam<f32>> {
    let adam = cfg.adam();
    match decoders {
        DecoderSet::PerTask(ds) => ds.iter().map(|d| Adam::new(adam, d)).collect(),
        DecoderSet::Joint(d) => vec![Adam::new(adam, d)],
        DecoderSet::Shared(d) => std::iter::once(Adam::new(adam, &d.trunk))
            .chain(d.stems.iter().map(|s| Adam::new(adam, s)))
            .collect(),
    }
}

fn decoder_optimizer_names(decoders: &DecoderSet) -> Vec<String> {
    match decoders {
        DecoderSet::PerTask(ds) => (0..ds.len()).map(|t| format!("optim/decoder{t}")).collect(),
        DecoderSet::Joint(_) => vec!["optim/decoder".into()],
        DecoderSet::Shared(d) => std::iter::once("optim/decoder/shared".to_string())
            .chain((0..d.n_tasks()).map(|t| format!("optim/decoder/task{t}")))
            .collect(),
    }
}

impl<'a> Trainer<'a> {
    pub fn new(regime: Regime, tasks: &'a [TaskSpec], cfg: &TrainConfig) -> Result<Self> {
        check_tasks(regime, tasks, cfg)?;
        let current = initial_system(regime, tasks, cfg.seed)?;
        let encoder_opt = current.encoders.iter().map(|e| Adam::new(cfg.adam(), e)).collect();
        let decoder_opt = decoder_optimizers(&current.decoders, cfg);
        let groups = if regime == Regime::Independent { tasks.len() } else { 1 };
        let alpha = if regime == Regime::Joint { cfg.alpha } else { 0.0 };
        Ok(Self {
            tasks,
            best: current.clone(),
            current,
            encoder_opt,
            decoder_opt,
            state: RunState {
                regime,
                config: cfg.clone(),
                tasks: tasks.iter().map(TaskInfo::of).collect(),
                epochs_done: 0,
                previous: None,
                best_scores: vec![None; groups],
                best_epochs: vec![None; groups],
                trace: LossTrace::new(alpha),
            },
            epoch_mse: vec![(0.0, 0); tasks.len()],
        })
    }

    /// Restores a run saved with [`Trainer::save_state`]. The stored
    /// configuration must match `cfg` in everything except the epoch count.
    pub fn resume(path: impl AsRef<Path>, regime: Regime, tasks: &'a [TaskSpec], cfg: &TrainConfig) -> Result<Self> {
        check_tasks(regime, tasks, cfg)?;
        let ck = Checkpoint::load(path)?;
        let extra = &ck.manifest.extra;
        let state: RunState = serde_json::from_value(extra.get("state").cloned().unwrap_or_default())
            .map_err(|e| Error::CorruptHeader(format!("checkpoint carries no resumable state: {e}")))?;
        if state.regime != regime {
            return Err(Error::Incompatible(format!(
                "checkpoint was written by a {} run, not {regime}",
                state.regime
            )));
        }
        let infos: Vec<TaskInfo> = tasks.iter().map(TaskInfo::of).collect();
        if state.tasks != infos {
            return Err(Error::Incompatible("checkpoint task set differs from the configured tasks".into()));
        }
        let comparable = TrainConfig {
            epochs: cfg.epochs,
            ..state.config.clone()
        };
        if &comparable != cfg {
            return Err(Error::Incompatible(
                "training configuration differs from the checkpointed run".into(),
            ));
        }
        let meta = extra
            .get("system")
            .ok_or_else(|| Error::CorruptHeader("checkpoint does not describe a trained system".into()))?;
        let current = TrainedSystem::from_checkpoint(&ck, "current/", meta)?;
        let best = TrainedSystem::from_checkpoint(&ck, "best/", meta)?;
        let encoder_opt = current
            .encoders
            .iter()
            .enumerate()
            .map(|(t, e)| ck.load_optimizer(&format!("optim/encoder{t}"), e))
            .collect::<Result<Vec<_>>>()?;
        let names = decoder_optimizer_names(&current.decoders);
        let decoder_opt = match &current.decoders {
            DecoderSet::PerTask(ds) => ds
                .iter()
                .zip(&names)
                .map(|(d, n)| ck.load_optimizer(n, d))
                .collect::<Result<Vec<_>>>()?,
            DecoderSet::Joint(d) => vec![ck.load_optimizer(&names[0], d)?],
            DecoderSet::Shared(d) => {
                let mut v = vec![ck.load_optimizer(&names[0], &d.trunk)?];
                for (s, n) in d.stems.iter().zip(&names[1..]) {
                    v.push(ck.load_optimizer(n, s)?);
                }
                v
            }
        };
        let mut state = state;
        state.config.epochs = cfg.epochs;
        Ok(Self {
            tasks,
            current,
            best,
            encoder_opt,
            decoder_opt,
            state,
            epoch_mse: vec![(0.0, 0); tasks.len()],
        })
    }

    /// Writes models, optimizer moments and run state after the last
    /// completed epoch.
    pub fn save_state(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut b = CheckpointBuilder::new(self.state.trace.global_step());
        self.current.add_to(&mut b, "current/");
        self.best.add_to(&mut b, "best/");
        for (t, (e, adam)) in self.current.encoders.iter().zip(&self.encoder_opt).enumerate() {
            b.add_optimizer(&format!("optim/encoder{t}"), &format!("current/encoder{t}"), adam, e);
        }
        let names = decoder_optimizer_names(&self.current.decoders);
        match &self.current.decoders {
            DecoderSet::PerTask(ds) => {
                for (t, d) in ds.iter().enumerate() {
                    b.add_optimizer(&names[t], &format!("current/decoder{t}"), &self.decoder_opt[t], d);
                }
            }
            DecoderSet::Joint(d) => {
                b.add_optimizer(&names[0], "current/decoder", &self.decoder_opt[0], d);
            }
            DecoderSet::Shared(d) => {
                b.add_optimizer(&names[0], "current/decoder", &self.decoder_opt[0], &d.trunk);
                for (t, s) in d.stems.iter().enumerate() {
                    b.add_optimizer(&names[t + 1], "current/decoder", &self.decoder_opt[t + 1], s);
                }
            }
        }
        b.extra(serde_json::json!({
            "system": self.current.meta_json(),
            "state": serde_json::to_value(&self.state)?,
        }));
        b.save(path)
    }

    pub fn regime(&self) -> Regime {
        self.state.regime
    }

    pub fn epochs_done(&self) -> usize {
        self.state.epochs_done
    }

    pub fn current(&self) -> &TrainedSystem {
        &self.current
    }

    pub fn trace(&self) -> &LossTrace {
        &self.state.trace
    }

    /// Minibatches of one epoch in visiting order: all batches of each task in
    /// turn for independent pairs, otherwise cyclic rounds over the tasks in
    /// configuration order. Shorter task sets wrap around so every task gets
    /// the same number of steps per epoch.
    pub fn schedule(&self, epoch: usize) -> Vec<(usize, Vec<usize>)> {
        let bs = self.state.config.batch_size;
        let per_task: Vec<Vec<Vec<usize>>> = self
            .tasks
            .iter()
            .enumerate()
            .map(|(t, task)| {
                let mut order: Vec<usize> = (0..task.train.len()).collect();
                let mut rng = rng_for(self.state.config.seed, &format!("shuffle/epoch{epoch}/task{t}"));
                order.shuffle(&mut rng);
                order.chunks(bs).map(<[usize]>::to_vec).collect()
            })
            .collect();
        match self.state.regime {
            Regime::Independent => per_task
                .into_iter()
                .enumerate()
                .flat_map(|(t, bs)| bs.into_iter().map(move |b| (t, b)))
                .collect(),
            Regime::Joint | Regime::HardSharing => {
                let rounds = per_task.iter().map(Vec::len).max().unwrap_or(0);
                (0..rounds)
                    .flat_map(|r| per_task.iter().enumerate().map(move |(t, b)| (t, b[r % b.len()].clone())))
                    .collect()
            }
        }
    }

    /// One optimization step on the given training samples of `task`.
    pub fn step(&mut self, task: usize, indices: &[usize]) -> Result<StepRecord> {
        if task >= self.tasks.len() {
            return invalid(format!("task {task} out of range"));
        }
        let spec = &self.tasks[task];
        let x = spec.train.batch(indices);
        let batch = StepBatch {
            task,
            x: &x,
            scale: spec.train.meta.norm.scale as f64,
        };
        let enc = &mut self.current.encoders;
        let mse = match &mut self.current.decoders {
            DecoderSet::PerTask(ds) => {
                let mut ge = enc[task].zeros_like();
                let mut gd = ds[task].zeros_like();
                let mse = pair_gradients(&enc[task], &ds[task], batch, 1.0, &mut ge, &mut gd)?;
                self.encoder_opt[task].update(&mut enc[task], &ge);
                self.decoder_opt[task].update(&mut ds[task], &gd);
                mse
            }
            DecoderSet::Joint(d) => {
                let alpha = self.state.config.alpha;
                let prev_x = match (&self.state.previous, alpha > 0.0) {
                    (Some((pt, pidx)), true) => Some((*pt, self.tasks[*pt].train.batch(pidx))),
                    _ => None,
                };
                let previous = prev_x.as_ref().map(|(pt, px)| StepBatch {
                    task: *pt,
                    x: px,
                    scale: self.tasks[*pt].train.meta.norm.scale as f64,
                });
                let g = joint_step_gradients(enc, d, batch, previous, alpha)?;
                for (t, ge) in g.encoders.iter().enumerate() {
                    if let Some(ge) = ge {
                        self.encoder_opt[t].update(&mut enc[t], ge);
                    }
                }
                self.decoder_opt[0].update(d, &g.decoder);
                self.state.previous = Some((task, indices.to_vec()));
                g.mse_current
            }
            DecoderSet::Shared(d) => {
                let mut ge = enc[task].zeros_like();
                let mut gd = d.zeros_like();
                let mse = shared_gradients(&enc[task], d, batch, 1.0, &mut ge, &mut gd)?;
                self.encoder_opt[task].update(&mut enc[task], &ge);
                self.decoder_opt[0].update(&mut d.trunk, &gd.trunk);
                self.decoder_opt[task + 1].update(&mut d.stems[task], &gd.stems[task]);
                mse
            }
        };
        if !mse.is_finite() {
            return Err(Error::Data(format!("non-finite training loss at task {task}")));
        }
        let acc = &mut self.epoch_mse[task];
        acc.0 += mse;
        acc.1 += 1;
        self.state.trace.push_step(self.state.epochs_done, task, mse);
        Ok(*self.state.trace.steps.last().expect("just pushed"))
    }

    /// Validation NMSE (dB) of every task under the current models.
    pub fn validate(&self) -> Result<Vec<f64>> {
        let bs = self.state.config.eval_batch_size;
        (0..self.tasks.len())
            .map(|t| {
                let route = self.current.route(t)?;
                reconstruction_nmse_db(&self.current.encoders[t], route.as_ref(), &self.tasks[t].val, bs)
            })
            .collect()
    }

    /// Runs the next epoch, validates and updates the best snapshot.
    pub fn run_epoch(&mut self) -> Result<Vec<f64>> {
        let epoch = self.state.epochs_done;
        let lr = self.state.config.learning_rate_at(epoch);
        for adam in self.encoder_opt.iter_mut().chain(self.decoder_opt.iter_mut()) {
            adam.config.learning_rate = lr;
        }
        self.epoch_mse.iter_mut().for_each(|a| *a = (0.0, 0));
        for (task, indices) in self.schedule(epoch) {
            self.step(task, &indices)?;
        }
        let val = self.validate()?;
        for (t, &v) in val.iter().enumerate() {
            let (sum, n) = self.epoch_mse[t];
            self.state.trace.epochs.push(EpochRecord {
                epoch,
                task: t,
                train_mse: if n > 0 { sum / n as f64 } else { f64::NAN },
                val_nmse_db: v,
            });
        }
        self.update_best(epoch, &val);
        self.state.epochs_done += 1;
        log::info!(
            "{} epoch {}/{}: val NMSE {:?} dB",
            self.state.regime,
            epoch + 1,
            self.state.config.epochs,
            val.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
        Ok(val)
    }

    fn update_best(&mut self, epoch: usize, val: &[f64]) {
        let improves = |slot: &Option<f64>, score: f64| slot.is_none_or(|b| score < b);
        match (&mut self.best.decoders, &self.current.decoders) {
            (DecoderSet::PerTask(best), DecoderSet::PerTask(cur)) => {
                for (t, &v) in val.iter().enumerate() {
                    if improves(&self.state.best_scores[t], v) {
                        self.state.best_scores[t] = Some(v);
                        self.state.best_epochs[t] = Some(epoch);
                        self.best.encoders[t] = self.current.encoders[t].clone();
                        best[t] = cur[t].clone();
                    }
                }
            }
            _ => {
                let mean = val.iter().sum::<f64>() / val.len() as f64;
                if improves(&self.state.best_scores[0], mean) {
                    self.state.best_scores[0] = Some(mean);
                    self.state.best_epochs[0] = Some(epoch);
                    self.best = self.current.clone();
                }
            }
        }
    }

    /// Trains until the configured number of epochs, saving the state after
    /// every epoch when `checkpoint` is given.
    pub fn run(mut self, checkpoint: Option<&Path>) -> Result<TrainOutcome> {
        while self.state.epochs_done < self.state.config.epochs {
            self.run_epoch()?;
            if let Some(path) = checkpoint {
                self.save_state(path)?;
            }
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            best: self.best,
            last: self.current,
            trace: self.state.trace,
            best_epochs: self.state.best_epochs,
        }
    }
}

/// Trains `tasks` under `regime` for `cfg.epochs` epochs.
pub fn train(regime: Regime, tasks: &[TaskSpec], cfg: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(regime, tasks, cfg)?.run(None)
}

/// One encoder/decoder pair trained on its own data.
pub fn train_independent(task: &TaskSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(Regime::Independent, std::slice::from_ref(task), cfg)
}

/// Per-task encoders and one STNet decoder trained cyclically with the
/// autoregressive objective.
pub fn train_joint(tasks: &[TaskSpec], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(Regime::Joint, tasks, cfg)
}

/// Per-task encoders and a shared-trunk decoder with one stem per task.
pub fn train_hard_sharing(tasks: &[TaskSpec], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(Regime::HardSharing, tasks, cfg)
}
