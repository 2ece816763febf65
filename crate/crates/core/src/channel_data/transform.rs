use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView3, Axis};
use num_complex::Complex32;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Raw channel matrix across all subcarriers, `n_subcarriers x n_tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialFrequencyChannel {
    matrix: Array2<Complex32>,
}

impl SpatialFrequencyChannel {
    pub fn new(matrix: Array2<Complex32>) -> Result<Self> {
        let (nc, nt) = matrix.dim();
        let pow2 = |n: usize| n >= 2 && n.is_power_of_two();
        if !pow2(nc) || !pow2(nt) {
            return invalid(format!("channel shape {nc}x{nt} must be powers of two >= 2"));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Data("channel contains non-finite entries".into()));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Array2<Complex32> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<Complex32> {
        self.matrix
    }

    pub fn n_subcarriers(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.matrix.ncols()
    }

    /// Squared Frobenius norm, accumulated in f64.
    pub fn energy(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr() as f64).sum()
    }
}

/// Affine map between raw angular-delay values and the `[0, 1]` network
/// domain: `x = (raw - offset) / scale + 0.5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: f32,
    pub scale: f32,
}

impl Normalization {
    /// Fits a map that sends every value into `[0, 1]` and zero to exactly 0.5.
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f32>) -> Self {
        let peak = values.into_iter().fold(0f32, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { 2.0 * peak } else { 1.0 };
        Self { offset: 0.0, scale }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.offset.is_finite() || !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(Error::Data(format!(
                "invalid normalization constants offset={} scale={}",
                self.offset, self.scale
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn normalize(&self, raw: f32) -> f32 {
        (raw - self.offset) / self.scale + 0.5
    }

    #[inline]
    pub fn denormalize(&self, x: f32) -> f32 {
        (x - 0.5) * self.scale + self.offset
    }
}

/// Truncated angular-delay channel as a normalized `2 x n_delay x n_tx`
/// tensor; plane 0 holds real parts and plane 1 imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDelayChannel {
    pub tensor: Array3<f32>,
    pub norm: Normalization,
}

impl AngularDelayChannel {
    pub fn n_delay(&self) -> usize {
        self.tensor.dim().1
    }

    pub fn n_tx(&self) -> usize {
        self.tensor.dim().2
    }

    /// Denormalized tensor.
    pub fn raw(&self) -> Array3<f32> {
        self.tensor.mapv(|x| self.norm.denormalize(x))
    }
}

struct Plans {
    delay_fwd: Arc<dyn Fft<f32>>,
    delay_inv: Arc<dyn Fft<f32>>,
    angle_fwd: Arc<dyn Fft<f32>>,
    angle_inv: Arc<dyn Fft<f32>>,
}

impl Plans {
    fn new(n_subcarriers: usize, n_tx: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            delay_fwd: planner.plan_fft_forward(n_subcarriers),
            delay_inv: planner.plan_fft_inverse(n_subcarriers),
            angle_fwd: planner.plan_fft_forward(n_tx),
            angle_inv: planner.plan_fft_inverse(n_tx),
        }
    }
}

/// Computes `F_d * H * F_a^H` keeping the first `n_delay` rows, without
/// normalization. Output planes: real, imaginary.
pub fn angular_delay_raw(h: &SpatialFrequencyChannel, n_delay: usize) -> Result<Array3<f32>> {
    let (nc, nt) = h.matrix.dim();
    if n_delay == 0 || n_delay > nc {
        return invalid(format!("n_delay must be in 1..={nc}, got {n_delay}"));
    }
    if h.matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Data("channel contains non-finite entries".into()));
    }
    let plans = Plans::new(nc, nt);
    let delay_scale = 1.0 / (nc as f32).sqrt();
    let angle_scale = 1.0 / (nt as f32).sqrt();

    // Delay transform on each antenna column.
    let mut truncated = Array2::<Complex32>::zeros((n_delay, nt));
    let mut column = vec![Complex32::default(); nc];
    for t in 0..nt {
        for (dst, src) in column.iter_mut().zip(h.matrix.column(t)) {
            *dst = *src;
        }
        plans.delay_fwd.process(&mut column);
        for r in 0..n_delay {
            truncated[[r, t]] = column[r] * delay_scale;
        }
    }

    // Right multiplication by F_a^H is an unnormalized inverse DFT per row.
    let mut out = Array3::<f32>::zeros((2, n_delay, nt));
    let mut row = vec![Complex32::default(); nt];
    for r in 0..n_delay {
        for (dst, src) in row.iter_mut().zip(truncated.row(r)) {
            *dst = *src;
        }
        plans.angle_inv.process(&mut row);
        for (k, z) in row.iter().enumerate() {
            out[[0, r, k]] = z.re * angle_scale;
            out[[1, r, k]] = z.im * angle_scale;
        }
    }
    Ok(out)
}

/// Forward transform: 2-D DFT, truncation to `n_delay` rows, real/imaginary
/// split and normalization with the dataset-level constants `norm`.
pub fn to_angular_delay(
    h: &SpatialFrequencyChannel,
    n_delay: usize,
    norm: Normalization,
) -> Result<AngularDelayChannel> {
    norm.validate()?;
    let raw = angular_delay_raw(h, n_delay)?;
    Ok(AngularDelayChannel {
        tensor: raw.mapv(|v| norm.normalize(v)),
        norm,
    })
}

/// Inverse transform: denormalize, zero-pad the discarded delay rows and
/// apply `F_d^H * (.) * F_a`.
pub fn from_angular_delay(
    h: &AngularDelayChannel,
    n_subcarriers: usize,
) -> Result<SpatialFrequencyChannel> {
    h.norm.validate()?;
    from_raw_planes(h.raw().view(), n_subcarriers)
}

/// Inverse transform of an already denormalized `2 x n_delay x n_tx` tensor.
pub fn from_raw_planes(
    raw: ArrayView3<f32>,
    n_subcarriers: usize,
) -> Result<SpatialFrequencyChannel> {
    let (planes, n_delay, nt) = raw.dim();
    if planes != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected 2 planes, got {planes}"
        )));
    }
    if !n_subcarriers.is_power_of_two() || n_subcarriers < n_delay.max(2) {
        return invalid(format!(
            "n_subcarriers must be a power of two >= n_delay ({n_delay}), got {n_subcarriers}"
        ));
    }
    let plans = Plans::new(n_subcarriers, nt);
    let delay_scale = 1.0 / (n_subcarriers as f32).sqrt();
    let angle_scale = 1.0 / (nt as f32).sqrt();

    let mut padded = Array2::<Complex32>::zeros((n_subcarriers, nt));
    let mut row = vec![Complex32::default(); nt];
    for r in 0..n_delay {
        for (k, dst) in row.iter_mut().enumerate() {
            *dst = Complex32::new(raw[[0, r, k]], raw[[1, r, k]]);
        }
        plans.angle_fwd.process(&mut row);
        for (k, z) in row.iter().enumerate() {
            padded[[r, k]] = z * angle_scale;
        }
    }
    let mut column = vec![Complex32::default(); n_subcarriers];
    for mut col in padded.axis_iter_mut(Axis(1)) {
        for (dst, src) in column.iter_mut().zip(col.iter()) {
            *dst = *src;
        }
        plans.delay_inv.process(&mut column);
        for (dst, src) in col.iter_mut().zip(&column) {
            *dst = src * delay_scale;
        }
    }
    SpatialFrequencyChannel::new(padded)
}
