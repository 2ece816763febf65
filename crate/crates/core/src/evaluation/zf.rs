use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel_data::SpatialFrequencyChannel;
use crate::error::{invalid, Result};

/// Ridge added to the Gram matrix when it cannot be factorized.
pub const ZF_RIDGE: f64 = 1e-9;

/// Default SNR grid in dB.
pub const DEFAULT_SNR_GRID: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];

/// Effective channel powers `|h_k w_j|^2` of one subcarrier: entry `(k, j)`
/// is the power user `k` receives from the beam of user `j`.
pub type GainMatrix = DMatrix<f64>;

fn check_users(true_channels: &[SpatialFrequencyChannel], recon: &[SpatialFrequencyChannel]) -> Result<(usize, usize)> {
    let k = true_channels.len();
    if k == 0 || recon.len() != k {
        return invalid(format!(
            "need the same nonzero number of true and reconstructed channels, got {k} and {}",
            recon.len()
        ));
    }
    let (nc, nt) = true_channels[0].matrix().dim();
    if k > nt {
        return invalid(format!("zero-forcing serves at most {nt} users, got {k}"));
    }
    for h in true_channels.iter().chain(recon) {
        if h.matrix().dim() != (nc, nt) {
            return invalid("all channels must share one subcarrier/antenna shape");
        }
    }
    Ok((nc, nt))
}

/// Zero-forcing beams for the stacked channel rows `h_hat` (`K x N_t`):
/// `W = H^H (H H^H)^{-1}` with every column scaled to unit norm. Columns
/// of users with a vanishing beam stay zero.
pub fn zf_precoder(h_hat: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let k = h_hat.nrows();
    let h_adj = h_hat.adjoint();
    let gram = h_hat * &h_adj;
    let x = match gram.clone().cholesky() {
        Some(chol) => chol.solve(h_hat),
        None => {
            log::warn!("rank-deficient channel estimate; regularizing zero-forcing with ridge {ZF_RIDGE:e}");
            let ridged = gram + DMatrix::<Complex64>::identity(k, k) * Complex64::new(ZF_RIDGE, 0.0);
            match ridged.clone().cholesky() {
                Some(chol) => chol.solve(h_hat),
                None => ridged.lu().solve(h_hat).unwrap_or_else(|| DMatrix::zeros(k, h_hat.ncols())),
            }
        }
    };
    let mut w = x.adjoint();
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 && norm.is_finite() {
            col /= Complex64::new(norm, 0.0);
        } else {
            col.fill(Complex64::new(0.0, 0.0));
        }
    }
    w
}

fn subcarrier_rows(channels: &[SpatialFrequencyChannel], n: usize, nt: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(channels.len(), nt, |k, a| {
        let z = channels[k].matrix()[[n, a]];
        Complex64::new(z.re as f64, z.im as f64)
    })
}

/// Per-subcarrier gain matrices of ZF beams designed on `recon` and applied
/// to `true_channels` (one channel per user).
pub fn zf_gains(true_channels: &[SpatialFrequencyChannel], recon: &[SpatialFrequencyChannel]) -> Result<Vec<GainMatrix>> {
    let (nc, nt) = check_users(true_channels, recon)?;
    Ok((0..nc)
        .map(|n| {
            let w = zf_precoder(&subcarrier_rows(recon, n, nt));
            let h = subcarrier_rows(true_channels, n, nt);
            (h * w).map(|z| z.norm_sqr())
        })
        .collect())
}

/// Sum over users of `log2(1 + SINR_k)` with equal power `rho / K` per user,
/// averaged over subcarriers.
pub fn sum_rate_from_gains(gains: &[GainMatrix], snr_db: f64) -> f64 {
    let rho = 10f64.powf(snr_db / 10.0);
    let total: f64 = gains
        .iter()
        .map(|g| {
            let k = g.nrows();
            let p = rho / k as f64;
            (0..k)
                .map(|u| {
                    let signal = p * g[(u, u)];
                    let interference: f64 = (0..k).filter(|&j| j != u).map(|j| p * g[(u, j)]).sum();
                    (1.0 + signal / (interference + 1.0)).log2()
                })
                .sum::<f64>()
        })
        .sum();
    total / gains.len() as f64
}

/// Zero-forcing sum spectral efficiency (bits/s/Hz) at one SNR.
pub fn zf_sum_spectral_efficiency(
    true_channels: &[SpatialFrequencyChannel],
    recon: &[SpatialFrequencyChannel],
    snr_db: f64,
) -> Result<f64> {
    Ok(sum_rate_from_gains(&zf_gains(true_channels, recon)?, snr_db))
}

/// Sum spectral efficiency against SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEfficiencyCurve {
    pub label: String,
    pub snr_db: Vec<f64>,
    pub se_bps_hz: Vec<f64>,
}

/// One group of simultaneously served users: true channels and the
/// reconstructions the transmitter designs its beams on.
pub struct UserGroup {
    pub true_channels: Vec<SpatialFrequencyChannel>,
    pub recon: Vec<SpatialFrequencyChannel>,
}

/// Mean sum spectral efficiency over user groups at every SNR of the grid.
pub fn se_curve(label: &str, groups: &[UserGroup], snr_grid: &[f64]) -> Result<SpectralEfficiencyCurve> {
    if groups.is_empty() {
        return invalid("spectral efficiency needs at least one user group");
    }
    let mut se = vec![0.0; snr_grid.len()];
    for group in groups {
        let gains = zf_gains(&group.true_channels, &group.recon)?;
        for (acc, &snr) in se.iter_mut().zip(snr_grid) {
            *acc += sum_rate_from_gains(&gains, snr);
        }
    }
    se.iter_mut().for_each(|v| *v /= groups.len() as f64);
    Ok(SpectralEfficiencyCurve {
        label: label.to_string(),
        snr_db: snr_grid.to_vec(),
        se_bps_hz: se,
    })
}
