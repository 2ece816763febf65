use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array3, Array4, ArrayView4, Axis};
use serde::{Deserialize, Serialize};

use super::transform::{AngularDelayChannel, Normalization};
use super::Dims;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &str = "CSIDS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub dims: Dims,
    pub scenario: String,
    pub seed: u64,
    pub norm: Normalization,
    pub split: Split,
}

/// Normalized angular-delay samples stored as one `count x 2 x n_delay x n_tx`
/// array.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDataset {
    pub data: Array4<f32>,
    pub meta: DatasetMeta,
}

impl ChannelDataset {
    pub fn len(&self) -> usize {
        self.data.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, i: usize) -> AngularDelayChannel {
        AngularDelayChannel {
            tensor: self.data.index_axis(Axis(0), i).to_owned(),
            norm: self.meta.norm,
        }
    }

    /// Gathers the given sample indices into one batch.
    pub fn batch(&self, indices: &[usize]) -> Array4<f32> {
        self.data.select(Axis(0), indices)
    }

    pub fn view_range(&self, start: usize, end: usize) -> ArrayView4<'_, f32> {
        self.data.slice(s![start..end, .., .., ..])
    }

    /// First `n` samples (or all of them when fewer exist).
    /// Sum of squares and count of the centred entries `x - 0.5`.
    pub fn centred_power(&self) -> (f64, usize) {
        let ss = self.data.iter().map(|&v| (v as f64 - 0.5).powi(2)).sum();
        (ss, self.data.len())
    }

    pub fn head(&self, n: usize) -> ChannelDataset {
        let n = n.min(self.len());
        ChannelDataset {
            data: self.view_range(0, n).to_owned(),
            meta: self.meta.clone(),
        }
    }

    /// Builds a dataset from already-normalized samples.
    pub fn from_samples(samples: &[AngularDelayChannel], meta: DatasetMeta) -> Result<Self> {
        let (nc, nt) = (meta.dims.n_delay, meta.dims.n_tx);
        let mut data = Array4::zeros((samples.len(), 2, nc, nt));
        for (i, s) in samples.iter().enumerate() {
            if s.tensor.dim() != (2, nc, nt) {
                return Err(Error::ShapeMismatch(format!(
                    "sample {i} has shape {:?}, expected (2, {nc}, {nt})",
                    s.tensor.dim()
                )));
            }
            if s.norm != meta.norm {
                return Err(Error::Data(format!(
                    "sample {i} uses different normalization constants"
                )));
            }
            data.index_axis_mut(Axis(0), i).assign(&s.tensor);
        }
        Ok(Self { data, meta })
    }

    pub fn samples(&self) -> impl Iterator<Item = AngularDelayChannel> + '_ {
        (0..self.len()).map(|i| self.sample(i))
    }

    /// Denormalized copy of sample `i`.
    pub fn raw_sample(&self, i: usize) -> Array3<f32> {
        self.sample(i).raw()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    count: usize,
    n_subcarriers: usize,
    n_delay: usize,
    n_tx: usize,
    scenario: String,
    seed: u64,
    norm_offset: f32,
    norm_scale: f32,
    split: Split,
}

/// Writes the dataset as a single-line JSON header followed by the
/// little-endian f32 payload.
pub fn save_dataset(ds: &ChannelDataset, path: impl AsRef<Path>) -> Result<()> {
    let m = &ds.meta;
    let header = Header {
        magic: DATASET_MAGIC.into(),
        count: ds.len(),
        n_subcarriers: m.dims.n_subcarriers,
        n_delay: m.dims.n_delay,
        n_tx: m.dims.n_tx,
        scenario: m.scenario.clone(),
        seed: m.seed,
        norm_offset: m.norm.offset,
        norm_scale: m.norm.scale,
        split: m.split,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in ds.data.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<ChannelDataset> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::CorruptHeader("header is not newline-terminated".into()));
    }
    line.pop();
    let header: Header = serde_json::from_slice(&line)
        .map_err(|e| Error::CorruptHeader(format!("unparseable header: {e}")))?;
    if header.magic != DATASET_MAGIC {
        return Err(Error::CorruptHeader(format!(
            "bad magic '{}', expected '{DATASET_MAGIC}'",
            header.magic
        )));
    }
    let dims = Dims {
        n_subcarriers: header.n_subcarriers,
        n_delay: header.n_delay,
        n_tx: header.n_tx,
    };
    dims.validate()
        .map_err(|e| Error::ShapeMismatch(format!("header dimensions: {e}")))?;
    let norm = Normalization {
        offset: header.norm_offset,
        scale: header.norm_scale,
    };
    norm.validate()?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let n_values = header.count * dims.feedback_len();
    let expected = n_values * 4;
    if payload.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let data = Array4::from_shape_vec((header.count, 2, dims.n_delay, dims.n_tx), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(ChannelDataset {
        data,
        meta: DatasetMeta {
            dims,
            scenario: header.scenario,
            seed: header.seed,
            norm,
            split: header.split,
        },
    })
}
