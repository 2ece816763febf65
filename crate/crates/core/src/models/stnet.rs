//! STNet-style networks: a CNN stem and a transformer stem in parallel, the
//! CNN-stem output injected additively into the transformer-stem input.
//!
//! The decoder is split into a [`DecoderTrunk`] (input projection and CNN
//! stem) and a [`TaskStem`] (transformer stem and output head) so that the
//! same code serves the plain decoder and the shared-stem multi-task decoder.

use ndarray::{Array2, Array4};

use super::ModelConfig;
use crate::error::{invalid, Result};
use crate::nn::{
    center, prefixed, prefixed_mut, scaled_sigmoid, scaled_sigmoid_backward, CnnStem, CnnStemCache, Conv2d, Dense, ParamMut, ParamView, Parameters,
    Scalar, TransformerCache, TransformerStem,
};

#[derive(Debug, Clone, PartialEq)]
pub struct StNetEncoder<T> {
    pub config: ModelConfig,
    pub cnn: CnnStem<T>,
    pub transformer: TransformerStem<T>,
    pub fc: Dense<T>,
}

pub struct StNetEncoderCache<T> {
    cnn: CnnStemCache<T>,
    transformer: TransformerCache<T>,
    flat: Array2<T>,
    dim: (usize, usize, usize, usize),
}

impl<T: Scalar> StNetEncoder<T> {
    pub fn new(config: ModelConfig, code_len: usize, seed: u64) -> Self {
        let key = config.init_key();
        let w = config.widths;
        Self {
            cnn: CnnStem::new(w.cnn_width, seed, &format!("{key}.cnn")),
            transformer: TransformerStem::new(
                2 * config.n_tx,
                w.encoder_model_dim,
                w.ff_expansion,
                seed,
                &format!("{key}.transformer"),
            ),
            fc: Dense::new(config.feedback_len(), code_len, seed, &format!("{key}.fc")),
            config,
        }
    }

    pub fn forward(&self, x: &Array4<T>) -> (Array2<T>, StNetEncoderCache<T>) {
        let dim = x.dim();
        let x = center(x, self.config.signal_gain);
        let (c, cnn) = self.cnn.forward(&x);
        let u = x + &c;
        let (t, transformer) = self.transformer.forward(&u);
        let flat = t
            .into_shape_with_order((dim.0, self.config.feedback_len()))
            .unwrap();
        let code = self.fc.forward(&flat);
        (
            code,
            StNetEncoderCache {
                cnn,
                transformer,
                flat,
                dim,
            },
        )
    }

    pub fn backward(&self, c: &StNetEncoderCache<T>, dcode: &Array2<T>, g: &mut Self) -> Array4<T> {
        let dflat = self.fc.backward(&c.flat, dcode, &mut g.fc);
        let dt = dflat.into_shape_with_order(c.dim).unwrap();
        let du = self.transformer.backward(&c.transformer, &dt, &mut g.transformer);
        let dx = self.cnn.backward(&c.cnn, &du, &mut g.cnn);
        dx + du
    }
}

impl<T: Scalar> Parameters<T> for StNetEncoder<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        prefixed("cnn", self.cnn.params())
            .chain(prefixed("transformer", self.transformer.params()))
            .chain(prefixed("fc", self.fc.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        prefixed_mut("cnn", self.cnn.params_mut())
            .chain(prefixed_mut("transformer", self.transformer.params_mut()))
            .chain(prefixed_mut("fc", self.fc.params_mut()))
            .collect()
    }
}

/// Input projection plus CNN stem: `u = x0 + cnn(x0)` with `x0 = reshape(fc(code))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTrunk<T> {
    pub fc: Dense<T>,
    pub cnn: CnnStem<T>,
}

pub struct TrunkCache<T> {
    code: Array2<T>,
    cnn: CnnStemCache<T>,
}

impl<T: Scalar> DecoderTrunk<T> {
    fn new(config: &ModelConfig, code_len: usize, seed: u64) -> Self {
        let key = config.init_key();
        Self {
            fc: Dense::new(code_len, config.feedback_len(), seed, &format!("{key}.fc")),
            cnn: CnnStem::new(config.widths.cnn_width, seed, &format!("{key}.cnn")),
        }
    }

    fn forward(&self, config: &ModelConfig, code: &Array2<T>) -> (Array4<T>, TrunkCache<T>) {
        let b = code.nrows();
        let x0 = self
            .fc
            .forward(code)
            .into_shape_with_order((b, 2, config.n_delay, config.n_tx))
            .unwrap();
        let (c, cnn) = self.cnn.forward(&x0);
        (
            x0 + c,
            TrunkCache {
                code: code.clone(),
                cnn,
            },
        )
    }

    fn backward(&self, c: &TrunkCache<T>, du: &Array4<T>, g: &mut Self) -> Array2<T> {
        let dx0 = du + &self.cnn.backward(&c.cnn, du, &mut g.cnn);
        let b = dx0.dim().0;
        let len = dx0.len() / b;
        let dflat = dx0.into_shape_with_order((b, len)).unwrap();
        self.fc.backward(&c.code, &dflat, &mut g.fc)
    }
}

impl<T: Scalar> Parameters<T> for DecoderTrunk<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        prefixed("fc", self.fc.params())
            .chain(prefixed("cnn", self.cnn.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        prefixed_mut("fc", self.fc.params_mut())
            .chain(prefixed_mut("cnn", self.cnn.params_mut()))
            .collect()
    }
}

/// Transformer stem followed by a 3x3 output convolution and a sigmoid with
/// slope [`ModelConfig::output_slope`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStem<T> {
    pub transformer: TransformerStem<T>,
    pub head: Conv2d<T>,
}

pub struct TaskStemCache<T> {
    transformer: TransformerCache<T>,
    col: Array2<T>,
    y: Array4<T>,
    slope: f64,
}

impl<T: Scalar> TaskStem<T> {
    fn new(config: &ModelConfig, seed: u64, key: &str) -> Self {
        let w = config.widths;
        Self {
            transformer: TransformerStem::new(
                2 * config.n_tx,
                w.decoder_model_dim,
                w.ff_expansion,
                seed,
                &format!("{key}.transformer"),
            ),
            head: Conv2d::new(2, 2, seed, &format!("{key}.head")),
        }
    }

    fn forward(&self, u: &Array4<T>, slope: f64) -> (Array4<T>, TaskStemCache<T>) {
        let (t, transformer) = self.transformer.forward(u);
        let (o, col) = self.head.forward(&t);
        let y = scaled_sigmoid(&o, slope);
        (
            y.clone(),
            TaskStemCache {
                transformer,
                col,
                y,
                slope,
            },
        )
    }

    fn backward(&self, c: &TaskStemCache<T>, dy: &Array4<T>, g: &mut Self) -> Array4<T> {
        let d_o = scaled_sigmoid_backward(&c.y, dy, c.slope);
        let dt = self.head.backward(&c.col, c.y.dim(), &d_o, &mut g.head);
        self.transformer.backward(&c.transformer, &dt, &mut g.transformer)
    }
}

impl<T: Scalar> Parameters<T> for TaskStem<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        prefixed("transformer", self.transformer.params())
            .chain(prefixed("head", self.head.params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        prefixed_mut("transformer", self.transformer.params_mut())
            .chain(prefixed_mut("head", self.head.params_mut()))
            .collect()
    }
}

pub struct StNetDecoderCache<T> {
    trunk: TrunkCache<T>,
    stem: TaskStemCache<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StNetDecoder<T> {
    pub config: ModelConfig,
    pub trunk: DecoderTrunk<T>,
    pub stem: TaskStem<T>,
}

impl<T: Scalar> StNetDecoder<T> {
    pub fn new(config: ModelConfig, code_len: usize, seed: u64) -> Self {
        let key = config.init_key();
        Self {
            trunk: DecoderTrunk::new(&config, code_len, seed),
            stem: TaskStem::new(&config, seed, &key),
            config,
        }
    }

    pub fn forward(&self, code: &Array2<T>) -> (Array4<T>, StNetDecoderCache<T>) {
        let (u, trunk) = self.trunk.forward(&self.config, code);
        let (y, stem) = self.stem.forward(&u, self.config.output_slope());
        (y, StNetDecoderCache { trunk, stem })
    }

    pub fn backward(&self, c: &StNetDecoderCache<T>, dy: &Array4<T>, g: &mut Self) -> Array2<T> {
        let du = self.stem.backward(&c.stem, dy, &mut g.stem);
        self.trunk.backward(&c.trunk, &du, &mut g.trunk)
    }
}

impl<T: Scalar> Parameters<T> for StNetDecoder<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        let mut v = self.trunk.params();
        v.extend(self.stem.params());
        v
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut v = self.trunk.params_mut();
        v.extend(self.stem.params_mut());
        v
    }
}

/// Multi-task decoder: one shared trunk (input projection and CNN stem), one
/// transformer stem and output head per task.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedStemDecoder<T> {
    pub config: ModelConfig,
    pub trunk: DecoderTrunk<T>,
    pub stems: Vec<TaskStem<T>>,
}

pub struct SharedStemCache<T> {
    task: usize,
    trunk: TrunkCache<T>,
    stem: TaskStemCache<T>,
}

impl<T: Scalar> SharedStemDecoder<T> {
    /// Task 0 is initialized exactly like the plain STNet decoder with the
    /// same seed; further tasks draw from their own streams.
    pub fn new(config: ModelConfig, code_len: usize, seed: u64) -> Self {
        let key = config.init_key();
        Self {
            trunk: DecoderTrunk::new(&config, code_len, seed),
            stems: (0..config.n_tasks)
                .map(|t| {
                    let k = if t == 0 { key.clone() } else { format!("{key}.task{t}") };
                    TaskStem::new(&config, seed, &k)
                })
                .collect(),
            config,
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.stems.len()
    }

    fn check_task(&self, task: usize) -> Result<()> {
        if task >= self.stems.len() {
            return invalid(format!(
                "task index {task} out of range for a decoder with {} task stems",
                self.stems.len()
            ));
        }
        Ok(())
    }

    pub fn forward_task(&self, code: &Array2<T>, task: usize) -> Result<(Array4<T>, SharedStemCache<T>)> {
        self.check_task(task)?;
        let (u, trunk) = self.trunk.forward(&self.config, code);
        let (y, stem) = self.stems[task].forward(&u, self.config.output_slope());
        Ok((y, SharedStemCache { task, trunk, stem }))
    }

    pub fn backward_task(&self, c: &SharedStemCache<T>, dy: &Array4<T>, g: &mut Self) -> Array2<T> {
        let du = self.stems[c.task].backward(&c.stem, dy, &mut g.stems[c.task]);
        self.trunk.backward(&c.trunk, &du, &mut g.trunk)
    }

    /// Plain decoder made of the trunk and the stem of `task`.
    pub fn task_decoder(&self, task: usize) -> Result<StNetDecoder<T>> {
        self.check_task(task)?;
        Ok(StNetDecoder {
            config: ModelConfig {
                role: super::Role::Decoder,
                n_tasks: 1,
                ..self.config.clone()
            },
            trunk: self.trunk.clone(),
            stem: self.stems[task].clone(),
        })
    }

    pub fn shared_param_names(&self) -> Vec<String> {
        self.params()
            .into_iter()
            .map(|p| p.name)
            .filter(|n| n.starts_with("shared."))
            .collect()
    }

    pub fn task_param_names(&self, task: usize) -> Vec<String> {
        let prefix = format!("task{task}.");
        self.params()
            .into_iter()
            .map(|p| p.name)
            .filter(|n| n.starts_with(&prefix))
            .collect()
    }
}

impl<T: Scalar> Parameters<T> for SharedStemDecoder<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        let mut v: Vec<_> = prefixed("shared", self.trunk.params()).collect();
        for (t, stem) in self.stems.iter().enumerate() {
            v.extend(prefixed(&format!("task{t}"), stem.params()));
        }
        v
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        let mut v: Vec<_> = prefixed_mut("shared", self.trunk.params_mut()).collect();
        for (t, stem) in self.stems.iter_mut().enumerate() {
            v.extend(prefixed_mut(&format!("task{t}"), stem.params_mut()));
        }
        v
    }
}
