//! Channel datasets in the spatial-frequency and angular-delay domains.
//!
//! A raw channel is an `n_subcarriers x n_tx` complex matrix. The network
//! input is its 2-D DFT (delay x angle), truncated to the first `n_delay`
//! delay rows, split into a real plane and an imaginary plane and mapped
//! affinely into `[0, 1]`.

mod dataset;
mod dft;
mod generator;
mod transform;

pub use dataset::{load_dataset, save_dataset, ChannelDataset, DatasetMeta, Split, DATASET_MAGIC};
pub use dft::dft_matrix;
pub use generator::{
    effective_sparsity, generate_channel, generate_dataset, generate_splits, ScenarioConfig,
};
pub use transform::{
    angular_delay_raw, from_angular_delay, from_raw_planes, to_angular_delay, AngularDelayChannel, Normalization,
    SpatialFrequencyChannel,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Channel dimensions shared by every sample of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    /// Number of OFDM subcarriers before truncation.
    pub n_subcarriers: usize,
    /// Number of delay rows kept after truncation.
    pub n_delay: usize,
    /// Number of base-station antennas.
    pub n_tx: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            n_subcarriers: 1024,
            n_delay: 32,
            n_tx: 32,
        }
    }
}

impl Dims {
    pub fn new(n_subcarriers: usize, n_delay: usize, n_tx: usize) -> Result<Self> {
        let dims = Self {
            n_subcarriers,
            n_delay,
            n_tx,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = |n: usize| n >= 2 && n.is_power_of_two();
        if !pow2(self.n_subcarriers) || !pow2(self.n_tx) {
            return invalid(format!(
                "subcarrier and antenna counts must be powers of two >= 2, got {}x{}",
                self.n_subcarriers, self.n_tx
            ));
        }
        if self.n_delay == 0 || self.n_delay > self.n_subcarriers {
            return invalid(format!(
                "n_delay must be in 1..={}, got {}",
                self.n_subcarriers, self.n_delay
            ));
        }
        Ok(())
    }

    /// Number of real values in one truncated sample, `2 * n_delay * n_tx`.
    pub fn feedback_len(&self) -> usize {
        2 * self.n_delay * self.n_tx
    }
}
