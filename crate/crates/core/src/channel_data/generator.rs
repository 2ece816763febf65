use std::f64::consts::PI;

use ndarray::{Array2, Array3, Array4, Axis};
use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::{ChannelDataset, DatasetMeta, Split};
use super::transform::{angular_delay_raw, Normalization, SpatialFrequencyChannel};
use super::Dims;
use crate::error::{invalid, Result};

/// Parameters of the synthetic tapped-delay multipath generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Number of propagation paths per channel.
    pub n_paths: usize,
    /// Path delays are drawn from `0..max_delay_taps` (integer taps).
    pub max_delay_taps: usize,
    /// Width of the angular cluster around a random centre, in radians.
    pub angle_spread: f64,
    /// Path power decays as `exp(-tau / delay_decay)`.
    pub delay_decay: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Few paths, short delay spread, narrow angular cluster.
    pub fn indoor(seed: u64) -> Self {
        Self {
            name: "indoor".into(),
            n_paths: 4,
            max_delay_taps: 8,
            angle_spread: PI / 6.0,
            delay_decay: 3.0,
            seed,
        }
    }

    /// Many paths spread over the whole retained delay window.
    pub fn outdoor(seed: u64) -> Self {
        Self {
            name: "outdoor".into(),
            n_paths: 12,
            max_delay_taps: 32,
            angle_spread: PI / 2.0,
            delay_decay: 16.0,
            seed,
        }
    }

    /// Named preset with the delay window clipped to `n_delay` rows.
    pub fn preset(name: &str, seed: u64, n_delay: usize) -> Result<Self> {
        let mut cfg = match name {
            "indoor" => Self::indoor(seed),
            "outdoor" => Self::outdoor(seed),
            other => return invalid(format!("unknown scenario preset '{other}'")),
        };
        cfg.max_delay_taps = cfg.max_delay_taps.min(n_delay);
        Ok(cfg)
    }

    pub fn validate(&self, dims: &Dims) -> Result<()> {
        if self.n_paths == 0 {
            return invalid("scenario needs at least one path");
        }
        if self.max_delay_taps == 0 || self.max_delay_taps > dims.n_delay {
            return invalid(format!(
                "max_delay_taps must be in 1..={}, got {}",
                dims.n_delay, self.max_delay_taps
            ));
        }
        if !(self.angle_spread > 0.0 && self.angle_spread <= PI) {
            return invalid("angle_spread must lie in (0, pi]");
        }
        if !(self.delay_decay > 0.0) {
            return invalid("delay_decay must be positive");
        }
        Ok(())
    }
}

fn stream_id(split: Split, index: u64) -> u64 {
    ((split as u64) << 48) | index
}

/// One raw channel. The randomness depends only on `(cfg.seed, stream)`.
pub fn generate_channel(
    cfg: &ScenarioConfig,
    dims: &Dims,
    stream: u64,
) -> Result<SpatialFrequencyChannel> {
    cfg.validate(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let centre: f64 = rng.random_range(-PI / 2.0..PI / 2.0);
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for _ in 0..cfg.n_paths {
        let theta = centre + rng.random_range(-0.5..0.5) * cfg.angle_spread;
        let tau = rng.random_range(0..cfg.max_delay_taps);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let amp = (-(tau as f64) / cfg.delay_decay).exp().sqrt();
        let gain = Complex64::new(re, im) * (amp / 2f64.sqrt());
        paths.push((gain, tau, theta));
    }
    let power: f64 = paths.iter().map(|(g, _, _)| g.norm_sqr()).sum();
    let gain_scale = if power > 0.0 { 1.0 / power.sqrt() } else { 1.0 };

    let (nc, nt) = (dims.n_subcarriers, dims.n_tx);
    let mut m = Array2::<Complex64>::zeros((nc, nt));
    for &(gain, tau, theta) in &paths {
        let gain = gain * gain_scale;
        // Half-wavelength array response and integer-tap frequency response.
        let steer: Vec<Complex64> = (0..nt)
            .map(|t| Complex64::from_polar(1.0, -PI * t as f64 * theta.sin()))
            .collect();
        for n in 0..nc {
            let freq = Complex64::from_polar(1.0, 2.0 * PI * ((n * tau) % nc) as f64 / nc as f64);
            let row_gain = gain * freq;
            for (t, s) in steer.iter().enumerate() {
                m[[n, t]] += row_gain * s;
            }
        }
    }
    SpatialFrequencyChannel::new(m.mapv(|z| Complex32::new(z.re as f32, z.im as f32)))
}

fn raw_samples(
    cfg: &ScenarioConfig,
    count: usize,
    dims: &Dims,
    split: Split,
) -> Result<Vec<Array3<f32>>> {
    if count < 1 {
        return invalid("sample count must be at least 1");
    }
    dims.validate()?;
    cfg.validate(dims)?;
    (0..count as u64)
        .map(|i| {
            let h = generate_channel(cfg, dims, stream_id(split, i))?;
            angular_delay_raw(&h, dims.n_delay)
        })
        .collect()
}

fn assemble(
    raw: Vec<Array3<f32>>,
    cfg: &ScenarioConfig,
    dims: &Dims,
    split: Split,
    norm: Normalization,
) -> ChannelDataset {
    let mut data = Array4::<f32>::zeros((raw.len(), 2, dims.n_delay, dims.n_tx));
    for (mut dst, src) in data.axis_iter_mut(Axis(0)).zip(&raw) {
        dst.zip_mut_with(src, |d, &s| *d = norm.normalize(s));
    }
    ChannelDataset {
        data,
        meta: DatasetMeta {
            dims: *dims,
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            norm,
            split,
        },
    }
}

/// Generates `count` samples of one split and normalizes them with constants
/// fitted on that split.
pub fn generate_dataset(
    cfg: &ScenarioConfig,
    count: usize,
    dims: &Dims,
    split: Split,
) -> Result<ChannelDataset> {
    let raw = raw_samples(cfg, count, dims, split)?;
    let norm = Normalization::fit(raw.iter().flat_map(|a| a.iter()));
    Ok(assemble(raw, cfg, dims, split, norm))
}

/// Generates train/val/test splits sharing one set of normalization
/// constants fitted over all three.
pub fn generate_splits(
    cfg: &ScenarioConfig,
    counts: [usize; 3],
    dims: &Dims,
) -> Result<[ChannelDataset; 3]> {
    let splits = [Split::Train, Split::Val, Split::Test];
    let raws = splits
        .iter()
        .zip(counts)
        .map(|(&s, n)| raw_samples(cfg, n, dims, s))
        .collect::<Result<Vec<_>>>()?;
    let norm = Normalization::fit(raws.iter().flatten().flat_map(|a| a.iter()));
    let mut it = raws
        .into_iter()
        .zip(splits)
        .map(|(raw, s)| assemble(raw, cfg, dims, s, norm));
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

/// Mean over samples of the fraction of angular-delay entries whose
/// magnitude exceeds 1% of that sample's largest magnitude.
pub fn effective_sparsity(ds: &ChannelDataset) -> f64 {
    let norm = ds.meta.norm;
    let mut total = 0.0;
    for sample in ds.data.axis_iter(Axis(0)) {
        let re = sample.index_axis(Axis(0), 0);
        let im = sample.index_axis(Axis(0), 1);
        let mags: Vec<f32> = re
            .iter()
            .zip(im.iter())
            .map(|(&a, &b)| norm.denormalize(a).hypot(norm.denormalize(b)))
            .collect();
        let peak = mags.iter().cloned().fold(0f32, f32::max);
        let above = mags.iter().filter(|&&m| m > 0.01 * peak).count();
        total += above as f64 / mags.len() as f64;
    }
    total / ds.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_data::{dft_matrix, from_angular_delay};
    use nalgebra::DMatrix;

    fn small_dims() -> Dims {
        Dims::new(64, 16, 8).unwrap()
    }

    #[test]
    fn single_path_channel_has_rank_one() {
        let mut cfg = ScenarioConfig::indoor(5);
        cfg.n_paths = 1;
        let dims = small_dims();
        for i in 0..5 {
            let h = generate_channel(&cfg, &dims, i).unwrap();
            let m = DMatrix::from_fn(dims.n_subcarriers, dims.n_tx, |r, c| {
                let z = h.matrix()[[r, c]];
                nalgebra::Complex::new(z.re as f64, z.im as f64)
            });
            let sv = m.singular_values();
            assert!(sv[0] > 1.0);
            // Stored in f32, so "zero" singular values sit at f32 rounding level.
            for s in sv.iter().skip(1) {
                assert!(s / sv[0] < 1e-6, "{s}");
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig::outdoor(9);
        let dims = Dims::new(64, 32, 8).unwrap();
        let a = generate_dataset(&cfg, 6, &dims, Split::Train).unwrap();
        let b = generate_dataset(&cfg, 6, &dims, Split::Train).unwrap();
        assert_eq!(a.data, b.data);
        let c = generate_dataset(&cfg, 6, &dims, Split::Test).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn zero_count_is_rejected() {
        let cfg = ScenarioConfig::indoor(1);
        assert!(generate_dataset(&cfg, 0, &small_dims(), Split::Train).is_err());
    }

    #[test]
    fn truncation_keeps_all_energy_of_generated_channels() {
        // Oracle: energy of the full (untruncated) dense transform.
        let dims = Dims::new(64, 8, 8).unwrap();
        let mut cfg = ScenarioConfig::outdoor(3);
        cfg.max_delay_taps = dims.n_delay;
        let fd = dft_matrix(64).unwrap();
        let fa_h = dft_matrix(8).unwrap().t().mapv(|z| z.conj());
        for i in 0..4 {
            let h = generate_channel(&cfg, &dims, i).unwrap();
            let h64 = h
                .matrix()
                .mapv(|z| Complex64::new(z.re as f64, z.im as f64));
            let full = fd.dot(&h64).dot(&fa_h);
            let total: f64 = full.iter().map(|z| z.norm_sqr()).sum();
            let kept: f64 = full
                .rows()
                .into_iter()
                .take(dims.n_delay)
                .flat_map(|r| r.to_vec())
                .map(|z| z.norm_sqr())
                .sum();
            assert!(kept / total >= 0.999, "{}", kept / total);
        }
    }

    #[test]
    fn indoor_is_sparser_than_outdoor() {
        let dims = Dims::new(128, 32, 16).unwrap();
        let indoor = generate_dataset(&ScenarioConfig::indoor(1), 40, &dims, Split::Train).unwrap();
        let outdoor =
            generate_dataset(&ScenarioConfig::outdoor(1), 40, &dims, Split::Train).unwrap();
        assert!(effective_sparsity(&indoor) < effective_sparsity(&outdoor));
    }

    #[test]
    fn splits_share_normalization_and_round_trip() {
        let dims = small_dims();
        let cfg = ScenarioConfig::preset("outdoor", 4, dims.n_delay).unwrap();
        let [train, val, test] = generate_splits(&cfg, [5, 3, 2], &dims).unwrap();
        assert_eq!(train.meta.norm, val.meta.norm);
        assert_eq!(train.meta.norm, test.meta.norm);
        assert!(train.data.iter().all(|x| (0.0..=1.0).contains(x)));
        let h = generate_channel(&cfg, &dims, stream_id(Split::Test, 1)).unwrap();
        let back = from_angular_delay(&test.sample(1), dims.n_subcarriers).unwrap();
        let err: f64 = back
            .matrix()
            .iter()
            .zip(h.matrix())
            .map(|(a, b)| (a - b).norm_sqr() as f64)
            .sum();
        assert!((err / h.energy()).sqrt() < 1e-5);
    }
}
