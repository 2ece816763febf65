use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Regime, TaskSpec};
use crate::error::{Error, Result};
use crate::models::{
    Checkpoint, CheckpointBuilder, CodeDecoder, CompressionRatio, Decoder, Encoder, Family, Model, SharedStemDecoder,
    TaskRoute,
};

/// Identity of a trained task: which encoder family serves which scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInfo {
    pub scenario: String,
    pub family: Family,
    pub compression_ratio: CompressionRatio,
}

impl TaskInfo {
    pub fn of(task: &TaskSpec) -> Self {
        Self {
            scenario: task.train.meta.scenario.clone(),
            family: task.family,
            compression_ratio: task.compression_ratio,
        }
    }

    /// Label such as `csinet-indoor`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.family, self.scenario)
    }
}

/// Decoder side of a trained system.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderSet {
    /// One decoder per task.
    PerTask(Vec<Decoder<f32>>),
    /// One decoder serving every task.
    Joint(Decoder<f32>),
    /// Shared trunk with one stem per task.
    Shared(SharedStemDecoder<f32>),
}

/// Encoders and decoders produced by one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub regime: Regime,
    pub tasks: Vec<TaskInfo>,
    pub encoders: Vec<Encoder<f32>>,
    pub decoders: DecoderSet,
}

#[derive(Serialize, Deserialize)]
struct SystemMeta {
    regime: Regime,
    tasks: Vec<TaskInfo>,
}

impl TrainedSystem {
    pub fn n_tasks(&self) -> usize {
        self.encoders.len()
    }

    /// The decoder path that serves `task`.
    pub fn route(&self, task: usize) -> Result<Box<dyn CodeDecoder + '_>> {
        if task >= self.n_tasks() {
            return Err(Error::InvalidArgument(format!(
                "task {task} out of range for a system with {} tasks",
                self.n_tasks()
            )));
        }
        Ok(match &self.decoders {
            DecoderSet::PerTask(d) => Box::new(DecoderRef(&d[task])),
            DecoderSet::Joint(d) => Box::new(DecoderRef(d)),
            DecoderSet::Shared(d) => Box::new(TaskRoute { decoder: d, task }),
        })
    }

    pub(crate) fn add_to(&self, b: &mut CheckpointBuilder, prefix: &str) {
        for (t, e) in self.encoders.iter().enumerate() {
            b.add_model(&format!("{prefix}encoder{t}"), e.config(), e);
        }
        match &self.decoders {
            DecoderSet::PerTask(ds) => {
                for (t, d) in ds.iter().enumerate() {
                    b.add_model(&format!("{prefix}decoder{t}"), d.config(), d);
                }
            }
            DecoderSet::Joint(d) => {
                b.add_model(&format!("{prefix}decoder"), d.config(), d);
            }
            DecoderSet::Shared(d) => {
                b.add_model(&format!("{prefix}decoder"), &d.config, d);
            }
        }
    }

    pub(crate) fn meta_json(&self) -> serde_json::Value {
        serde_json::to_value(SystemMeta {
            regime: self.regime,
            tasks: self.tasks.clone(),
        })
        .expect("plain data serializes")
    }

    pub(crate) fn from_checkpoint(ck: &Checkpoint, prefix: &str, meta: &serde_json::Value) -> Result<Self> {
        let meta: SystemMeta = serde_json::from_value(meta.clone())
            .map_err(|e| Error::CorruptHeader(format!("bad system description: {e}")))?;
        let n = meta.tasks.len();
        let encoders = (0..n)
            .map(|t| match ck.load_model(&format!("{prefix}encoder{t}"))? {
                Model::Encoder(e) => Ok(e),
                _ => Err(Error::Incompatible(format!("model encoder{t} is not an encoder"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let plain = |name: &str| match ck.load_model(name)? {
            Model::Decoder(d) => Ok(d),
            _ => Err(Error::Incompatible(format!("model {name} is not a plain decoder"))),
        };
        let decoders = match meta.regime {
            Regime::Independent => DecoderSet::PerTask(
                (0..n)
                    .map(|t| plain(&format!("{prefix}decoder{t}")))
                    .collect::<Result<_>>()?,
            ),
            Regime::Joint => DecoderSet::Joint(plain(&format!("{prefix}decoder"))?),
            Regime::HardSharing => match ck.load_model(&format!("{prefix}decoder"))? {
                Model::SharedStemDecoder(d) => DecoderSet::Shared(d),
                _ => return Err(Error::Incompatible("decoder is not a shared-stem decoder".into())),
            },
        };
        Ok(Self {
            regime: meta.regime,
            tasks: meta.tasks,
            encoders,
            decoders,
        })
    }

    /// Writes the system as a standalone checkpoint.
    pub fn save(&self, path: impl AsRef<Path>, step: u64) -> Result<()> {
        let mut b = CheckpointBuilder::new(step);
        self.add_to(&mut b, "");
        b.extra(serde_json::json!({ "system": self.meta_json() }));
        b.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let meta = ck
            .manifest
            .extra
            .get("system")
            .ok_or_else(|| Error::CorruptHeader("checkpoint does not describe a trained system".into()))?
            .clone();
        Self::from_checkpoint(&ck, "", &meta)
    }
}

struct DecoderRef<'a>(&'a Decoder<f32>);

impl CodeDecoder for DecoderRef<'_> {
    fn code_len(&self) -> usize {
        self.0.code_len()
    }

    fn decode_codes(&self, codes: &ndarray::Array2<f32>) -> Result<ndarray::Array4<f32>> {
        self.0.decode_codes(codes)
    }
}
