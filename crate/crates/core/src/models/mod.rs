//! Encoder and decoder networks, parameter accounting and checkpoints.

mod checkpoint;
mod config;
mod count;
mod csinet;
mod stnet;

pub use checkpoint::{Checkpoint, CheckpointBuilder, CheckpointManifest, CHECKPOINT_MAGIC};
pub use config::{CompressionRatio, Family, ModelConfig, Role, StemWidths};
pub use count::{count_parameters, regime_parameter_counts, ComponentCount, ParameterCount, RegimeCounts};
pub use csinet::{CsiNetDecoder, CsiNetDecoderCache, CsiNetEncoder, CsiNetEncoderCache};
pub use stnet::{
    DecoderTrunk, SharedStemCache, SharedStemDecoder, StNetDecoder, StNetDecoderCache, StNetEncoder,
    StNetEncoderCache, TaskStem,
};

use ndarray::{Array2, Array4};

use crate::channel_data::AngularDelayChannel;
use crate::error::{invalid, Error, Result};
use crate::nn::{copy_params, cst, ParamMut, ParamView, Parameters, Scalar};

fn check_input<T>(cfg: &ModelConfig, x: &Array4<T>) -> Result<()> {
    let (_, c, nc, nt) = x.dim();
    if (c, nc, nt) != (2, cfg.n_delay, cfg.n_tx) {
        return Err(Error::ShapeMismatch(format!(
            "input sample shape ({c}, {nc}, {nt}) does not match model ({}, {}, {})",
            2, cfg.n_delay, cfg.n_tx
        )));
    }
    Ok(())
}

fn check_code<T>(cfg: &ModelConfig, code: &Array2<T>) -> Result<()> {
    let m = cfg.code_len()?;
    if code.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "code length {} does not match model code length {m}",
            code.ncols()
        )));
    }
    Ok(())
}

fn sample_batch<T: Scalar>(h: &AngularDelayChannel) -> Array4<T> {
    h.tensor
        .mapv(|v| cst::<T>(v as f64))
        .insert_axis(ndarray::Axis(0))
}

/// UE-side network mapping a `2 x n_delay x n_tx` tensor to a code of length `M`.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder<T> {
    CsiNet(CsiNetEncoder<T>),
    StNet(StNetEncoder<T>),
}

pub enum EncoderCache<T> {
    CsiNet(CsiNetEncoderCache<T>),
    StNet(StNetEncoderCache<T>),
}

impl<T: Scalar> Encoder<T> {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.role != Role::Encoder {
            return invalid(format!("config role {:?} is not an encoder", config.role));
        }
        let m = config.code_len()?;
        Ok(match config.family {
            Family::CsiNet => Encoder::CsiNet(CsiNetEncoder::new(config.clone(), m, seed)),
            Family::StNet => Encoder::StNet(StNetEncoder::new(config.clone(), m, seed)),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Encoder::CsiNet(e) => &e.config,
            Encoder::StNet(e) => &e.config,
        }
    }

    pub fn code_len(&self) -> usize {
        self.config().code_len().expect("validated at build")
    }

    pub fn forward(&self, x: &Array4<T>) -> Result<(Array2<T>, EncoderCache<T>)> {
        check_input(self.config(), x)?;
        Ok(match self {
            Encoder::CsiNet(e) => {
                let (y, c) = e.forward(x);
                (y, EncoderCache::CsiNet(c))
            }
            Encoder::StNet(e) => {
                let (y, c) = e.forward(x);
                (y, EncoderCache::StNet(c))
            }
        })
    }

    /// Accumulates parameter gradients into `grads` (same variant) and
    /// returns the input gradient.
    pub fn backward(&self, cache: &EncoderCache<T>, dcode: &Array2<T>, grads: &mut Self) -> Array4<T> {
        match (self, cache, grads) {
            (Encoder::CsiNet(e), EncoderCache::CsiNet(c), Encoder::CsiNet(g)) => e.backward(c, dcode, g),
            (Encoder::StNet(e), EncoderCache::StNet(c), Encoder::StNet(g)) => e.backward(c, dcode, g),
            _ => panic!("encoder, cache and gradient variants differ"),
        }
    }

    pub fn encode(&self, x: &Array4<T>) -> Result<Array2<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Encodes a single sample.
    pub fn encode_channel(&self, h: &AngularDelayChannel) -> Result<Vec<T>> {
        Ok(self.encode(&sample_batch(h))?.into_raw_vec_and_offset().0)
    }

    pub fn cast<U: Scalar>(&self) -> Encoder<U> {
        let mut out = Encoder::<U>::build(self.config(), 0).expect("config already validated");
        copy_params(self, &mut out);
        out
    }
}

impl<T: Scalar> Parameters<T> for Encoder<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        match self {
            Encoder::CsiNet(e) => e.params(),
            Encoder::StNet(e) => e.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        match self {
            Encoder::CsiNet(e) => e.params_mut(),
            Encoder::StNet(e) => e.params_mut(),
        }
    }
}

/// gNB-side network mapping a code back to a `[0, 1]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoder<T> {
    CsiNet(CsiNetDecoder<T>),
    StNet(StNetDecoder<T>),
}

pub enum DecoderCache<T> {
    CsiNet(CsiNetDecoderCache<T>),
    StNet(StNetDecoderCache<T>),
}

impl<T: Scalar> Decoder<T> {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.role != Role::Decoder {
            return invalid(format!("config role {:?} is not a plain decoder", config.role));
        }
        let m = config.code_len()?;
        Ok(match config.family {
            Family::CsiNet => Decoder::CsiNet(CsiNetDecoder::new(config.clone(), m, seed)),
            Family::StNet => Decoder::StNet(StNetDecoder::new(config.clone(), m, seed)),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        match self {
            Decoder::CsiNet(d) => &d.config,
            Decoder::StNet(d) => &d.config,
        }
    }

    pub fn forward(&self, code: &Array2<T>) -> Result<(Array4<T>, DecoderCache<T>)> {
        check_code(self.config(), code)?;
        Ok(match self {
            Decoder::CsiNet(d) => {
                let (y, c) = d.forward(code);
                (y, DecoderCache::CsiNet(c))
            }
            Decoder::StNet(d) => {
                let (y, c) = d.forward(code);
                (y, DecoderCache::StNet(c))
            }
        })
    }

    pub fn backward(&self, cache: &DecoderCache<T>, dy: &Array4<T>, grads: &mut Self) -> Array2<T> {
        match (self, cache, grads) {
            (Decoder::CsiNet(d), DecoderCache::CsiNet(c), Decoder::CsiNet(g)) => d.backward(c, dy, g),
            (Decoder::StNet(d), DecoderCache::StNet(c), Decoder::StNet(g)) => d.backward(c, dy, g),
            _ => panic!("decoder, cache and gradient variants differ"),
        }
    }

    pub fn decode(&self, code: &Array2<T>) -> Result<Array4<T>> {
        Ok(self.forward(code)?.0)
    }

    pub fn cast<U: Scalar>(&self) -> Decoder<U> {
        let mut out = Decoder::<U>::build(self.config(), 0).expect("config already validated");
        copy_params(self, &mut out);
        out
    }
}

impl<T: Scalar> Parameters<T> for Decoder<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        match self {
            Decoder::CsiNet(d) => d.params(),
            Decoder::StNet(d) => d.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        match self {
            Decoder::CsiNet(d) => d.params_mut(),
            Decoder::StNet(d) => d.params_mut(),
        }
    }
}

impl<T: Scalar> SharedStemDecoder<T> {
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.role != Role::SharedStemDecoder {
            return invalid(format!("config role {:?} is not a shared-stem decoder", config.role));
        }
        Ok(Self::new(config.clone(), config.code_len()?, seed))
    }

    /// Routes `code` through the shared trunk and the stem of `task`.
    pub fn decode_task(&self, code: &Array2<T>, task: usize) -> Result<Array4<T>> {
        check_code(&self.config, code)?;
        Ok(self.forward_task(code, task)?.0)
    }

    pub fn cast<U: Scalar>(&self) -> SharedStemDecoder<U> {
        let mut out = SharedStemDecoder::<U>::build(&self.config, 0).expect("config already validated");
        copy_params(self, &mut out);
        out
    }
}

/// Any network described by a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub enum Model<T> {
    Encoder(Encoder<T>),
    Decoder(Decoder<T>),
    SharedStemDecoder(SharedStemDecoder<T>),
}

impl<T: Scalar> Model<T> {
    pub fn config(&self) -> &ModelConfig {
        match self {
            Model::Encoder(m) => m.config(),
            Model::Decoder(m) => m.config(),
            Model::SharedStemDecoder(m) => &m.config,
        }
    }
}

impl<T: Scalar> Parameters<T> for Model<T> {
    fn params(&self) -> Vec<ParamView<'_, T>> {
        match self {
            Model::Encoder(m) => m.params(),
            Model::Decoder(m) => m.params(),
            Model::SharedStemDecoder(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_, T>> {
        match self {
            Model::Encoder(m) => m.params_mut(),
            Model::Decoder(m) => m.params_mut(),
            Model::SharedStemDecoder(m) => m.params_mut(),
        }
    }
}

/// Builds a deterministically initialized network.
pub fn build_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    Ok(match config.role {
        Role::Encoder => Model::Encoder(Encoder::build(config, seed)?),
        Role::Decoder => Model::Decoder(Decoder::build(config, seed)?),
        Role::SharedStemDecoder => Model::SharedStemDecoder(SharedStemDecoder::build(config, seed)?),
    })
}

/// Something that turns feedback codes into reconstructed tensors.
pub trait CodeDecoder {
    fn code_len(&self) -> usize;
    fn decode_codes(&self, codes: &Array2<f32>) -> Result<Array4<f32>>;
}

impl CodeDecoder for Decoder<f32> {
    fn code_len(&self) -> usize {
        self.config().code_len().expect("validated at build")
    }

    fn decode_codes(&self, codes: &Array2<f32>) -> Result<Array4<f32>> {
        self.decode(codes)
    }
}

/// One task route of a shared-stem decoder.
pub struct TaskRoute<'a> {
    pub decoder: &'a SharedStemDecoder<f32>,
    pub task: usize,
}

impl CodeDecoder for TaskRoute<'_> {
    fn code_len(&self) -> usize {
        self.decoder.config.code_len().expect("validated at build")
    }

    fn decode_codes(&self, codes: &Array2<f32>) -> Result<Array4<f32>> {
        self.decoder.decode_task(codes, self.task)
    }
}
