//! Training and evaluation harness for multi-user massive-MIMO CSI-feedback
//! autoencoders.
//!
//! The crate covers the full pipeline:
//!
//! * [`channel_data`]: synthetic multipath channels, the angular-delay
//!   transform with truncation and normalization, and the binary dataset
//!   format.
//! * [`nn`] and [`models`]: small hand-differentiated layers and the
//!   CSINet-style, STNet-style and shared-stem decoder networks built on them.
//! * [`training`]: independent training, joint training with the
//!   autoregressive multi-task loss, and hard parameter sharing.
//! * [`evaluation`]: NMSE, encoder/decoder cross-pairing, zero-forcing sum
//!   spectral efficiency and parameter accounting reports.

pub mod channel_data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
