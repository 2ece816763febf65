use std::io::Write;

use serde::{Deserialize, Serialize};

use super::autoregressive_loss;
use crate::error::Result;

/// One optimization step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based global step count.
    pub step: u64,
    pub epoch: usize,
    pub task: usize,
    /// Raw MSE of the task batch before the update.
    pub mse: f64,
    /// Autoregressive loss: `mse + alpha * previous loss`.
    pub loss: f64,
}

/// Per-epoch, per-task summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task: usize,
    /// Mean step MSE of this task during the epoch.
    pub train_mse: f64,
    pub val_nmse_db: f64,
}

/// Complete loss history of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub alpha: f64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl LossTrace {
    pub fn new(alpha: f64) -> Self {
        Self {
            alpha,
            steps: Vec::new(),
            epochs: Vec::new(),
        }
    }

    /// The loss carried into the next step; zero before the first step.
    pub fn last_loss(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.loss)
    }

    pub fn global_step(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.step)
    }

    /// Appends a step and returns its autoregressive loss.
    pub fn push_step(&mut self, epoch: usize, task: usize, mse: f64) -> f64 {
        let loss = autoregressive_loss(mse, self.last_loss(), self.alpha);
        self.steps.push(StepRecord {
            step: self.global_step() + 1,
            epoch,
            task,
            mse,
            loss,
        });
        loss
    }

    /// True when every recorded loss equals its recursion value exactly.
    pub fn recursion_holds(&self) -> bool {
        let mut prev = 0.0;
        self.steps.iter().all(|s| {
            let ok = s.loss == autoregressive_loss(s.mse, prev, self.alpha);
            prev = s.loss;
            ok
        })
    }

    pub fn steps_for_task(&self, task: usize) -> usize {
        self.steps.iter().filter(|s| s.task == task).count()
    }

    /// One JSON object per step.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Columns `epoch,task,train_mse,val_nmse_db`.
    pub fn write_epoch_csv(&self, w: impl Write) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for e in &self.epochs {
            csv.serialize(e)?;
        }
        csv.flush()?;
        Ok(())
    }
}
