use ndarray::{Array4, ArrayView, Axis, Dimension, RemoveAxis};

use crate::channel_data::{ChannelDataset, Normalization};
use crate::error::{Error, Result};
use crate::models::{CodeDecoder, Encoder};

/// Floor applied to NMSE values in dB so that exact reconstructions stay finite.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Streaming mean of per-sample squared-error ratios `‖H − Ĥ‖² / ‖H‖²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NmseAccumulator {
    pub ratio_sum: f64,
    pub count: usize,
    /// Samples with `‖H‖ = 0`, which have no defined ratio.
    pub skipped: usize,
}

impl NmseAccumulator {
    pub fn push_sample(&mut self, err: f64, energy: f64) {
        if energy > 0.0 {
            self.ratio_sum += err / energy;
            self.count += 1;
        } else {
            self.skipped += 1;
        }
    }

    /// Adds every sample (leading axis) of a batch.
    pub fn push_batch<A, D>(&mut self, h: &ArrayView<'_, A, D>, h_hat: &ArrayView<'_, A, D>) -> Result<()>
    where
        A: Copy + Into<f64>,
        D: Dimension + RemoveAxis,
    {
        check_shapes(h.shape(), h_hat.shape())?;
        for (a, b) in h.axis_iter(Axis(0)).zip(h_hat.axis_iter(Axis(0))) {
            let (mut err, mut energy) = (0.0f64, 0.0f64);
            for (&x, &y) in a.iter().zip(b.iter()) {
                let (x, y): (f64, f64) = (x.into(), y.into());
                err += (x - y) * (x - y);
                energy += x * x;
            }
            self.push_sample(err, energy);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &NmseAccumulator) {
        self.ratio_sum += other.ratio_sum;
        self.count += other.count;
        self.skipped += other.skipped;
    }

    /// Mean ratio in dB, floored at [`NMSE_FLOOR_DB`].
    pub fn db(&self) -> Result<f64> {
        if self.skipped > 0 {
            log::warn!("{} zero-energy samples excluded from NMSE", self.skipped);
        }
        if self.count == 0 {
            return Err(Error::Data("NMSE undefined: no sample has nonzero energy".into()));
        }
        let mean = self.ratio_sum / self.count as f64;
        if mean <= 0.0 {
            return Ok(NMSE_FLOOR_DB);
        }
        Ok((10.0 * mean.log10()).max(NMSE_FLOOR_DB))
    }
}

fn check_shapes(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::InvalidArgument(format!("shape mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// `10·log10(mean_i ‖H_i − Ĥ_i‖² / ‖H_i‖²)` over the leading (sample) axis.
/// Samples with zero energy are excluded with a warning.
pub fn nmse_db<A, D>(h: &ArrayView<'_, A, D>, h_hat: &ArrayView<'_, A, D>) -> Result<f64>
where
    A: Copy + Into<f64>,
    D: Dimension + RemoveAxis,
{
    let mut acc = NmseAccumulator::default();
    acc.push_batch(h, h_hat)?;
    acc.db()
}

/// Maps normalized tensors back to raw angular-delay values in double precision.
pub fn denormalize_batch(x: &Array4<f32>, norm: &Normalization) -> Array4<f64> {
    let (scale, offset) = (norm.scale as f64, norm.offset as f64);
    x.mapv(|v| (v as f64 - 0.5) * scale + offset)
}

/// NMSE of an encoder/decoder route over a dataset, evaluated on denormalized
/// channels in batches of `batch_size`.
pub fn reconstruction_nmse(
    encoder: &Encoder<f32>,
    decoder: &dyn CodeDecoder,
    ds: &ChannelDataset,
    batch_size: usize,
) -> Result<NmseAccumulator> {
    if encoder.code_len() != decoder.code_len() {
        return Err(Error::Incompatible(format!(
            "encoder code length {} differs from decoder code length {}",
            encoder.code_len(),
            decoder.code_len()
        )));
    }
    let mut acc = NmseAccumulator::default();
    let batch_size = batch_size.max(1);
    let mut start = 0;
    while start < ds.len() {
        let end = (start + batch_size).min(ds.len());
        let x = ds.view_range(start, end).to_owned();
        let y = decoder.decode_codes(&encoder.encode(&x)?)?;
        let h = denormalize_batch(&x, &ds.meta.norm);
        let h_hat = denormalize_batch(&y, &ds.meta.norm);
        acc.push_batch(&h.view(), &h_hat.view())?;
        start = end;
    }
    Ok(acc)
}

pub fn reconstruction_nmse_db(
    encoder: &Encoder<f32>,
    decoder: &dyn CodeDecoder,
    ds: &ChannelDataset,
    batch_size: usize,
) -> Result<f64> {
    reconstruction_nmse(encoder, decoder, ds, batch_size)?.db()
}
