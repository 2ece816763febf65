//! Reconstruction quality, cross-pairing, zero-forcing spectral efficiency and
//! regime comparison reports.

mod cross;
mod nmse;
mod report;
mod zf;

pub use cross::{
    cross_pair_matrix, scenario_mismatch_matrix, CrossPairMatrix, DecoderUnderTest, EncoderUnderTest, PairUnderTest,
};
pub use nmse::{
    denormalize_batch, nmse_db, reconstruction_nmse, reconstruction_nmse_db, NmseAccumulator, NMSE_FLOOR_DB,
};
pub use report::{
    compare_regimes, reconstruct_channels, reference_values, system_parameter_count, EvaluationReport, NmseEntry,
    ReferenceValue, ReportOptions,
};
pub use zf::{
    se_curve, sum_rate_from_gains, zf_gains, zf_precoder, zf_sum_spectral_efficiency, GainMatrix,
    SpectralEfficiencyCurve, UserGroup, DEFAULT_SNR_GRID, ZF_RIDGE,
};
