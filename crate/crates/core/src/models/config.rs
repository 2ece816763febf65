use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel_data::Dims;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    CsiNet,
    StNet,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::CsiNet => "csinet",
            Family::StNet => "stnet",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csinet" => Ok(Family::CsiNet),
            "stnet" => Ok(Family::StNet),
            other => invalid(format!("unknown model family '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Encoder,
    Decoder,
    SharedStemDecoder,
}

/// Compression ratio `M / (2 * n_delay * n_tx)` as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CompressionRatio {
    pub num: u32,
    pub den: u32,
}

impl CompressionRatio {
    pub const QUARTER: Self = Self { num: 1, den: 4 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return invalid(format!("compression ratio {num}/{den} must lie in (0, 1]"));
        }
        Ok(Self { num, den })
    }

    /// Feedback code length for the given truncated dimensions.
    pub fn code_len(&self, n_delay: usize, n_tx: usize) -> Result<usize> {
        let total = 2 * n_delay * n_tx * self.num as usize;
        if total % self.den as usize != 0 {
            return invalid(format!(
                "compression ratio {self} does not give an integral code length for {n_delay}x{n_tx}"
            ));
        }
        Ok(total / self.den as usize)
    }
}

impl fmt::Display for CompressionRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for CompressionRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (n, d) = s
            .split_once('/')
            .ok_or_else(|| Error::InvalidArgument(format!("compression ratio '{s}' is not of the form a/b")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidArgument(format!("bad compression ratio '{s}'")))
        };
        Self::new(parse(n)?, parse(d)?)
    }
}

impl TryFrom<String> for CompressionRatio {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CompressionRatio> for String {
    fn from(r: CompressionRatio) -> String {
        r.to_string()
    }
}

/// Widths of the convolutional and transformer stems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StemWidths {
    /// Channels of the hidden convolution in the CNN stem.
    pub cnn_width: usize,
    /// Transformer model dimension in STNet-style encoders.
    pub encoder_model_dim: usize,
    /// Transformer model dimension in STNet-style decoders.
    pub decoder_model_dim: usize,
    /// Feed-forward expansion factor of the transformer blocks.
    pub ff_expansion: usize,
    /// Number of residual refinement blocks in the CSINet-style decoder.
    pub refine_blocks: usize,
}

impl Default for StemWidths {
    fn default() -> Self {
        Self {
            cnn_width: 8,
            encoder_model_dim: 64,
            decoder_model_dim: 256,
            ff_expansion: 2,
            refine_blocks: 2,
        }
    }
}

fn one() -> usize {
    1
}

fn unit_gain() -> f64 {
    1.0
}

/// Declarative description of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: Family,
    pub role: Role,
    pub compression_ratio: CompressionRatio,
    pub n_delay: usize,
    pub n_tx: usize,
    #[serde(default = "one")]
    pub n_tasks: usize,
    #[serde(default)]
    pub widths: StemWidths,
    /// Encoders see `signal_gain * (x - 0.5)`; decoders undo the gain before
    /// their output sigmoid (see [`ModelConfig::output_slope`]). Trainers set
    /// it to the reciprocal RMS of the centred training tensors so that the
    /// networks work on unit-scale signals.
    #[serde(default = "unit_gain")]
    pub signal_gain: f64,
}

impl ModelConfig {
    pub fn new(family: Family, role: Role, compression_ratio: CompressionRatio, dims: &Dims) -> Self {
        Self {
            family,
            role,
            compression_ratio,
            n_delay: dims.n_delay,
            n_tx: dims.n_tx,
            n_tasks: 1,
            widths: StemWidths::default(),
            signal_gain: 1.0,
        }
    }

    pub fn with_signal_gain(self, signal_gain: f64) -> Self {
        Self { signal_gain, ..self }
    }

    /// Slope of the output sigmoid, `4 / signal_gain`, so that a pre-activation
    /// `o` near zero maps to `0.5 + o / signal_gain`.
    pub fn output_slope(&self) -> f64 {
        4.0 / self.signal_gain
    }

    pub fn encoder(family: Family, ratio: CompressionRatio, dims: &Dims) -> Self {
        Self::new(family, Role::Encoder, ratio, dims)
    }

    pub fn decoder(family: Family, ratio: CompressionRatio, dims: &Dims) -> Self {
        Self::new(family, Role::Decoder, ratio, dims)
    }

    pub fn shared_stem_decoder(ratio: CompressionRatio, dims: &Dims, n_tasks: usize) -> Self {
        Self {
            n_tasks,
            ..Self::new(Family::StNet, Role::SharedStemDecoder, ratio, dims)
        }
    }

    pub fn code_len(&self) -> Result<usize> {
        self.compression_ratio.code_len(self.n_delay, self.n_tx)
    }

    pub fn feedback_len(&self) -> usize {
        2 * self.n_delay * self.n_tx
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_delay == 0 || self.n_tx == 0 {
            return invalid("model dimensions must be positive");
        }
        self.code_len()?;
        if self.n_tasks == 0 {
            return invalid("n_tasks must be at least 1");
        }
        if self.role == Role::SharedStemDecoder && self.family != Family::StNet {
            return invalid("shared-stem decoders are only defined for the stnet family");
        }
        let w = &self.widths;
        if w.cnn_width == 0 || w.encoder_model_dim == 0 || w.decoder_model_dim == 0 || w.ff_expansion == 0 {
            return invalid("stem widths must be positive");
        }
        if !(self.signal_gain.is_finite() && self.signal_gain > 0.0) {
            return invalid(format!("signal_gain must be positive and finite, got {}", self.signal_gain));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        crate::seed::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Seed-key prefix for parameter initialization.
    pub(crate) fn init_key(&self) -> String {
        let role = match self.role {
            Role::Encoder => "encoder",
            Role::Decoder | Role::SharedStemDecoder => "decoder",
        };
        format!("{}.{role}", self.family)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_length_arithmetic() {
        assert_eq!(CompressionRatio::QUARTER.code_len(32, 32).unwrap(), 512);
        assert_eq!("1/64".parse::<CompressionRatio>().unwrap().code_len(32, 32).unwrap(), 32);
        assert!("1/3".parse::<CompressionRatio>().unwrap().code_len(32, 32).is_err());
        assert!("0/4".parse::<CompressionRatio>().is_err());
        assert!("x".parse::<CompressionRatio>().is_err());
    }

    #[test]
    fn config_json_round_trip_and_hash() {
        let cfg = ModelConfig::encoder(Family::StNet, CompressionRatio::QUARTER, &Dims::default());
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"1/4\""));
        let back: ModelConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.config_hash(), cfg.config_hash());
        let other = ModelConfig::decoder(Family::StNet, CompressionRatio::QUARTER, &Dims::default());
        assert_ne!(other.config_hash(), cfg.config_hash());
    }

    #[test]
    fn shared_stem_requires_stnet() {
        let mut cfg = ModelConfig::shared_stem_decoder(CompressionRatio::QUARTER, &Dims::default(), 2);
        assert!(cfg.validate().is_ok());
        cfg.family = Family::CsiNet;
        assert!(cfg.validate().is_err());
    }
}
