//! Python bindings for the `csi_mtl` harness.
//!
//! The extension module `csi_mtl_py` exposes dataset generation and I/O,
//! training under the three regimes, NMSE and cross-pair evaluation, and
//! parameter accounting. Tensors cross the boundary as flat `float` lists
//! plus a shape tuple, so the module has no NumPy build dependency;
//! `numpy.asarray(ds.to_list()).reshape(ds.shape)` recovers the array.

use std::collections::BTreeMap;

use csi_mtl::channel_data::{effective_sparsity, generate_splits, load_dataset, save_dataset, ChannelDataset, Dims, ScenarioConfig};
use csi_mtl::evaluation::{cross_pair_matrix, reconstruction_nmse_db, system_parameter_count, DecoderUnderTest, EncoderUnderTest};
use csi_mtl::models::{regime_parameter_counts, CompressionRatio, Family};
use csi_mtl::training::{self, LrSchedule, Regime, TaskSpec, TrainConfig, TrainedSystem};
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;

/// Maps harness errors onto the closest built-in Python exception.
fn py_err(e: csi_mtl::Error) -> PyErr {
    use csi_mtl::Error as E;
    let msg = e.to_string();
    match e {
        E::MissingArtifact(_) => PyFileNotFoundError::new_err(msg),
        E::Io(_) | E::CorruptHeader(_) | E::TruncatedPayload { .. } | E::Csv(_) | E::Json(_) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse<T: std::str::FromStr<Err = csi_mtl::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// A normalized angular-delay dataset of shape `(n, 2, n_delay, n_tx)`.
#[pyclass(name = "Dataset", module = "csi_mtl_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    pub inner: ChannelDataset,
}

#[pymethods]
impl PyDataset {
    /// Reads a dataset file written by `save` or the command-line tool.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_dataset(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_dataset(&self.inner, path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        self.inner.data.dim()
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.meta.scenario.clone()
    }

    #[getter]
    fn split(&self) -> String {
        self.inner.meta.split.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.meta.seed
    }

    /// `(offset, scale)` of the map `x = (raw - offset) / scale + 0.5`.
    #[getter]
    fn normalization(&self) -> (f32, f32) {
        (self.inner.meta.norm.offset, self.inner.meta.norm.scale)
    }

    /// Mean fraction of entries above 1% of each sample's peak magnitude.
    fn effective_sparsity(&self) -> f64 {
        effective_sparsity(&self.inner)
    }

    /// The first `n` samples.
    fn head(&self, n: usize) -> Self {
        Self { inner: self.inner.head(n) }
    }

    /// All normalized values in row-major order.
    fn to_list(&self) -> Vec<f32> {
        self.inner.data.iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(scenario={:?}, split={}, shape={:?})", self.inner.meta.scenario, self.inner.meta.split, self.shape())
    }
}

/// Generates train/val/test splits of a synthetic scenario (`indoor` or
/// `outdoor`) that share one normalization.
#[pyfunction]
#[pyo3(signature = (scenario, train, val, test, seed = 0, n_subcarriers = 1024, n_delay = 32, n_tx = 32))]
#[allow(clippy::too_many_arguments)]
fn generate(
    scenario: &str,
    train: usize,
    val: usize,
    test: usize,
    seed: u64,
    n_subcarriers: usize,
    n_delay: usize,
    n_tx: usize,
) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
    let dims = Dims::new(n_subcarriers, n_delay, n_tx).map_err(py_err)?;
    let cfg = ScenarioConfig::preset(scenario, seed, n_delay).map_err(py_err)?;
    let [a, b, c] = generate_splits(&cfg, [train, val, test], &dims).map_err(py_err)?;
    Ok((PyDataset { inner: a }, PyDataset { inner: b }, PyDataset { inner: c }))
}

/// Encoders and decoders of one training run.
#[pyclass(name = "System", module = "csi_mtl_py", frozen)]
pub struct PySystem {
    pub inner: TrainedSystem,
}

#[pymethods]
impl PySystem {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: TrainedSystem::load(path).map_err(py_err)? })
    }

    /// Writes a checkpoint tagged with `step`.
    #[pyo3(signature = (path, step = 0))]
    fn save(&self, path: &str, step: u64) -> PyResult<()> {
        self.inner.save(path, step).map_err(py_err)
    }

    #[getter]
    fn regime(&self) -> String {
        self.inner.regime.to_string()
    }

    #[getter]
    fn tasks(&self) -> Vec<String> {
        self.inner.tasks.iter().map(|t| t.label()).collect()
    }

    /// Total number of trainable parameters.
    fn parameter_count(&self) -> u64 {
        system_parameter_count(&self.inner).total
    }

    /// NMSE in dB of task `task`'s encoder/decoder route over `dataset`.
    #[pyo3(signature = (task, dataset, batch_size = 250))]
    fn nmse_db(&self, task: usize, dataset: &PyDataset, batch_size: usize) -> PyResult<f64> {
        let decoder = self.inner.route(task).map_err(py_err)?;
        reconstruction_nmse_db(&self.inner.encoders[task], decoder.as_ref(), &dataset.inner, batch_size).map_err(py_err)
    }

    /// Matrix of NMSE (dB) of every task encoder paired with every task
    /// decoder route; entry `[e][d]` uses encoder `e`'s test set. `None`
    /// marks pairings whose code lengths differ.
    #[pyo3(signature = (test_sets, batch_size = 250))]
    fn cross_pair(&self, test_sets: Vec<PyRef<'_, PyDataset>>, batch_size: usize) -> PyResult<Vec<Vec<Option<f64>>>> {
        let n = self.inner.n_tasks();
        if test_sets.len() != n {
            return Err(PyValueError::new_err(format!("expected {n} test sets, got {}", test_sets.len())));
        }
        let labels = self.tasks();
        let routes = (0..n).map(|t| self.inner.route(t)).collect::<csi_mtl::Result<Vec<_>>>().map_err(py_err)?;
        let encoders: Vec<EncoderUnderTest<'_>> = (0..n)
            .map(|t| EncoderUnderTest { label: labels[t].clone(), encoder: &self.inner.encoders[t], test: &test_sets[t].inner })
            .collect();
        let decoders: Vec<DecoderUnderTest<'_>> = routes
            .iter()
            .zip(&labels)
            .map(|(d, l)| DecoderUnderTest { label: l.clone(), decoder: d.as_ref() })
            .collect();
        Ok(cross_pair_matrix(&encoders, &decoders, batch_size).map_err(py_err)?.entries)
    }

    fn __repr__(&self) -> String {
        format!("System(regime={}, tasks={:?})", self.inner.regime, self.tasks())
    }
}

/// Trains one system. `tasks` is a list of `(family, ratio, train, val)`
/// tuples such as `("csinet", "1/4", train_ds, val_ds)`. Returns the models
/// with the best validation NMSE and the per-epoch validation NMSE (dB) of
/// every task.
#[pyfunction]
#[pyo3(signature = (regime, tasks, epochs = 10, batch_size = 50, learning_rate = 1e-3, alpha = 0.3, seed = 0, cosine = false))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    regime: &str,
    tasks: Vec<(String, String, PyRef<'_, PyDataset>, PyRef<'_, PyDataset>)>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    alpha: f64,
    seed: u64,
    cosine: bool,
) -> PyResult<(PySystem, Vec<Vec<f64>>)> {
    let regime: Regime = parse(regime)?;
    let specs = tasks
        .iter()
        .map(|(f, r, tr, va)| {
            Ok(TaskSpec {
                family: parse::<Family>(f)?,
                compression_ratio: parse::<CompressionRatio>(r)?,
                train: tr.inner.clone(),
                val: va.inner.clone(),
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        alpha,
        seed,
        lr_schedule: if cosine { LrSchedule::Cosine } else { LrSchedule::Constant },
        ..Default::default()
    };
    let outcome = py.detach(|| training::train(regime, &specs, &cfg)).map_err(py_err)?;
    let mut curves = vec![Vec::new(); specs.len()];
    for rec in &outcome.trace.epochs {
        curves[rec.task].push(rec.val_nmse_db);
    }
    Ok((PySystem { inner: outcome.best }, curves))
}

/// Parameter totals of the three regimes for tasks with the given encoder
/// families, plus the fractional reductions of the shared regimes.
#[pyfunction]
#[pyo3(signature = (families, ratio = "1/4", n_subcarriers = 1024, n_delay = 32, n_tx = 32))]
fn parameter_counts(
    families: Vec<String>,
    ratio: &str,
    n_subcarriers: usize,
    n_delay: usize,
    n_tx: usize,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let families = families.iter().map(|f| parse::<Family>(f)).collect::<PyResult<Vec<_>>>()?;
    let dims = Dims::new(n_subcarriers, n_delay, n_tx).map_err(py_err)?;
    let c = regime_parameter_counts(&families, parse(ratio)?, &dims).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("independent", c.independent.total as f64),
        ("joint", c.joint.total as f64),
        ("hard_sharing", c.hard_sharing.total as f64),
        ("joint_reduction", c.reduction(&c.joint)),
        ("hard_sharing_reduction", c.reduction(&c.hard_sharing)),
    ]))
}

#[pymodule]
fn csi_mtl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PySystem>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(parameter_counts, m)?)?;
    Ok(())
}
