//! Declarative run configuration read from JSON files.

use std::path::{Path, PathBuf};

use csi_mtl::channel_data::{load_dataset, ChannelDataset, Dims};
use csi_mtl::models::{CompressionRatio, Family};
use csi_mtl::training::{distribution_label, Regime, TaskSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Settings of the `generate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub scenario: String,
    pub samples: usize,
    /// Defaults to a tenth of `samples` (at least one).
    pub val_samples: Option<usize>,
    pub test_samples: Option<usize>,
    pub dims: Dims,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            scenario: "indoor".into(),
            samples: 5000,
            val_samples: None,
            test_samples: None,
            dims: Dims::default(),
            seed: 0,
        }
    }
}

impl GenerateConfig {
    pub fn counts(&self) -> [usize; 3] {
        let aux = (self.samples / 10).max(1);
        [
            self.samples,
            self.val_samples.unwrap_or(aux),
            self.test_samples.unwrap_or(aux),
        ]
    }
}

/// One task of a run: an encoder family, a compression ratio and its data.
///
/// Data is given either as a directory holding `train.csi`, `val.csi` and
/// `test.csi` (as written by `generate`) or as explicit file paths; explicit
/// paths win. Relative paths are resolved against the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub family: Family,
    pub compression_ratio: CompressionRatio,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

impl TaskEntry {
    /// Parses the `family:ratio:data_dir` shorthand of `--task`.
    pub fn parse_shorthand(s: &str) -> CliResult<Self> {
        let mut parts = s.splitn(3, ':');
        let (Some(f), Some(r), Some(d)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(CliError::Config(format!(
                "task '{s}' is not of the form family:ratio:data_dir"
            )));
        };
        Ok(Self {
            family: f.parse()?,
            compression_ratio: r.parse()?,
            data: Some(PathBuf::from(d)),
            train: None,
            val: None,
            test: None,
        })
    }

    fn split_path(&self, explicit: &Option<PathBuf>, file: &str) -> CliResult<PathBuf> {
        match (explicit, &self.data) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(dir)) => Ok(dir.join(file)),
            (None, None) => Err(CliError::Config(format!(
                "task {}-{} names neither a data directory nor a {file} path",
                self.family, self.compression_ratio
            ))),
        }
    }

    pub fn train_path(&self) -> CliResult<PathBuf> {
        self.split_path(&self.train, "train.csi")
    }

    pub fn val_path(&self) -> CliResult<PathBuf> {
        self.split_path(&self.val, "val.csi")
    }

    pub fn test_path(&self) -> CliResult<PathBuf> {
        self.split_path(&self.test, "test.csi")
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.data, &mut self.train, &mut self.val, &mut self.test]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Settings of the `train` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub regime: Regime,
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Independent,
            tasks: Vec::new(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.tasks.is_empty() {
            return Err(CliError::Config("the run configures no tasks".into()));
        }
        if self.regime != Regime::Independent && self.tasks.len() < 2 {
            return Err(CliError::Config(format!(
                "the {} regime shares a decoder between tasks and needs at least 2 tasks, got {}",
                self.regime,
                self.tasks.len()
            )));
        }
        self.train.validate()?;
        Ok(())
    }

    /// Loads the training and validation sets of every task.
    pub fn load_tasks(&self) -> CliResult<Vec<TaskSpec>> {
        self.tasks
            .iter()
            .map(|t| {
                Ok(TaskSpec {
                    family: t.family,
                    compression_ratio: t.compression_ratio,
                    train: load_dataset(t.train_path()?)?,
                    val: load_dataset(t.val_path()?)?,
                })
            })
            .collect()
    }

    pub fn load_test_sets(&self) -> CliResult<Vec<ChannelDataset>> {
        self.tasks
            .iter()
            .map(|t| Ok(load_dataset(t.test_path()?)?))
            .collect()
    }
}

/// Reads a JSON configuration file and resolves relative task paths against
/// its directory.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn read_run_config(path: &Path) -> CliResult<RunConfig> {
    let mut cfg: RunConfig = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.tasks.iter_mut().for_each(|t| t.resolve(base));
    Ok(cfg)
}

/// Distribution label of the loaded task set.
pub fn label_of(tasks: &[TaskSpec]) -> &'static str {
    distribution_label(tasks.iter().map(|t| (t.scenario(), t.family)))
}
