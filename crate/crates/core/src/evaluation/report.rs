use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::cross::{cross_pair_matrix, CrossPairMatrix, DecoderUnderTest, EncoderUnderTest};
use super::nmse::{denormalize_batch, reconstruction_nmse_db};
use super::zf::{se_curve, SpectralEfficiencyCurve, UserGroup, DEFAULT_SNR_GRID};
use crate::channel_data::{from_raw_planes, ChannelDataset, SpatialFrequencyChannel};
use crate::error::{invalid, Result};
use crate::models::{count_parameters, CodeDecoder, Encoder, Model, ParameterCount};
use crate::training::{DecoderSet, Regime, TrainedSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub snr_grid: Vec<f64>,
    /// Number of user groups (test samples per task) used for spectral
    /// efficiency.
    pub se_samples: usize,
    pub batch_size: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            snr_grid: DEFAULT_SNR_GRID.to_vec(),
            se_samples: 1000,
            batch_size: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseEntry {
    pub regime: Regime,
    pub task: usize,
    pub label: String,
    pub nmse_db: f64,
}

/// A published figure quoted alongside the measured results for context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub quantity: String,
    pub value: f64,
    pub unit: String,
    pub note: String,
}

/// Reference figures from full-scale training on measured-style channel
/// data; desk-scale synthetic runs are not expected to match them.
pub fn reference_values() -> Vec<ReferenceValue> {
    let r = |q: &str, v: f64, u: &str, n: &str| ReferenceValue {
        quantity: q.into(),
        value: v,
        unit: u.into(),
        note: n.into(),
    };
    vec![
        r("csinet_indoor_1/4_matched_nmse", -17.36, "dB", "matched encoder/decoder pair"),
        r("csinet_indoor_1/32_independent_nmse", -6.24, "dB", "independent training"),
        r("csinet_indoor_1/32_joint_nmse", -8.68, "dB", "joint training; a 39% improvement in dB"),
        r("joint_parameter_reduction", 25.0, "%", "joint training versus independent pairs"),
        r("joint_sum_se_gain", 0.07, "bit/s/Hz", "combined spectral efficiency gain of joint training"),
    ]
}

/// Everything `compare_regimes` measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub tasks: Vec<String>,
    pub nmse: Vec<NmseEntry>,
    pub cross_pair: Option<CrossPairMatrix>,
    pub se_curves: Vec<SpectralEfficiencyCurve>,
    pub parameter_counts: BTreeMap<String, ParameterCount>,
    /// Parts of the report that could not be produced.
    pub gaps: Vec<String>,
    pub reference_values: Vec<ReferenceValue>,
}

/// Denormalized true channels and reconstructions of the first `count`
/// samples of `ds`, in the spatial-frequency domain.
pub fn reconstruct_channels(
    encoder: &Encoder<f32>,
    decoder: &dyn CodeDecoder,
    ds: &ChannelDataset,
    count: usize,
) -> Result<(Vec<SpatialFrequencyChannel>, Vec<SpatialFrequencyChannel>)> {
    let count = count.min(ds.len());
    let x = ds.view_range(0, count).to_owned();
    let y = decoder.decode_codes(&encoder.encode(&x)?)?;
    let nc = ds.meta.dims.n_subcarriers;
    let to_sf = |a: &ndarray::Array4<f64>| -> Result<Vec<SpatialFrequencyChannel>> {
        a.axis_iter(Axis(0))
            .map(|s| from_raw_planes(s.mapv(|v| v as f32).view(), nc))
            .collect()
    };
    Ok((
        to_sf(&denormalize_batch(&x, &ds.meta.norm))?,
        to_sf(&denormalize_batch(&y, &ds.meta.norm))?,
    ))
}

fn system_models(system: &TrainedSystem) -> Vec<(String, Model<f32>)> {
    let mut v: Vec<(String, Model<f32>)> = system
        .encoders
        .iter()
        .enumerate()
        .map(|(t, e)| (format!("encoder{t}"), Model::Encoder(e.clone())))
        .collect();
    match &system.decoders {
        DecoderSet::PerTask(ds) => {
            v.extend(ds.iter().enumerate().map(|(t, d)| (format!("decoder{t}"), Model::Decoder(d.clone()))))
        }
        DecoderSet::Joint(d) => v.push(("decoder".into(), Model::Decoder(d.clone()))),
        DecoderSet::Shared(d) => v.push(("decoder".into(), Model::SharedStemDecoder(d.clone()))),
    }
    v
}

/// Parameter count of every model in a trained system.
pub fn system_parameter_count(system: &TrainedSystem) -> ParameterCount {
    let models = system_models(system);
    let refs: Vec<(&str, &Model<f32>)> = models.iter().map(|(n, m)| (n.as_str(), m)).collect();
    count_parameters(&refs)
}

/// Evaluates the available regime artifacts on the per-task test sets. A
/// regime given as `None` is recorded as a gap.
pub fn compare_regimes(
    systems: &[(Regime, Option<&TrainedSystem>)],
    test_sets: &[ChannelDataset],
    opts: &ReportOptions,
) -> Result<EvaluationReport> {
    let mut report = EvaluationReport {
        tasks: Vec::new(),
        nmse: Vec::new(),
        cross_pair: None,
        se_curves: Vec::new(),
        parameter_counts: BTreeMap::new(),
        gaps: Vec::new(),
        reference_values: reference_values(),
    };
    for (regime, system) in systems {
        let Some(system) = system else {
            report.gaps.push(format!("no trained artifacts for the {regime} regime"));
            continue;
        };
        if system.n_tasks() != test_sets.len() {
            return invalid(format!(
                "{regime} system has {} tasks but {} test sets were given",
                system.n_tasks(),
                test_sets.len()
            ));
        }
        if report.tasks.is_empty() {
            report.tasks = system.tasks.iter().map(|t| t.label()).collect();
        }
        for (t, (info, ds)) in system.tasks.iter().zip(test_sets).enumerate() {
            if info.scenario != ds.meta.scenario {
                log::warn!(
                    "task {t} was trained on '{}' but is tested on '{}'",
                    info.scenario,
                    ds.meta.scenario
                );
            }
            let route = system.route(t)?;
            report.nmse.push(NmseEntry {
                regime: *regime,
                task: t,
                label: info.label(),
                nmse_db: reconstruction_nmse_db(&system.encoders[t], route.as_ref(), ds, opts.batch_size)?,
            });
        }
        report
            .parameter_counts
            .insert(regime.to_string(), system_parameter_count(system));

        let samples = opts.se_samples.min(test_sets.iter().map(ChannelDataset::len).min().unwrap_or(0));
        if samples == 0 || opts.snr_grid.is_empty() {
            report.gaps.push(format!("no spectral efficiency samples for the {regime} regime"));
        } else {
            let mut per_task = Vec::new();
            for (t, ds) in test_sets.iter().enumerate() {
                let route = system.route(t)?;
                per_task.push(reconstruct_channels(&system.encoders[t], route.as_ref(), ds, samples)?);
            }
            let groups = |perfect: bool| -> Vec<UserGroup> {
                (0..samples)
                    .map(|s| UserGroup {
                        true_channels: per_task.iter().map(|(h, _)| h[s].clone()).collect(),
                        recon: per_task
                            .iter()
                            .map(|(h, r)| if perfect { h[s].clone() } else { r[s].clone() })
                            .collect(),
                    })
                    .collect()
            };
            if !report.se_curves.iter().any(|c| c.label == "perfect_csi") {
                report.se_curves.push(se_curve("perfect_csi", &groups(true), &opts.snr_grid)?);
            }
            report.se_curves.push(se_curve(&regime.to_string(), &groups(false), &opts.snr_grid)?);
        }

        if *regime == Regime::Independent && report.cross_pair.is_none() {
            if let DecoderSet::PerTask(decoders) = &system.decoders {
                let labels: Vec<String> = system.tasks.iter().map(|t| t.label()).collect();
                let encs: Vec<EncoderUnderTest<'_>> = system
                    .encoders
                    .iter()
                    .zip(test_sets)
                    .zip(&labels)
                    .map(|((e, ds), l)| EncoderUnderTest {
                        label: l.clone(),
                        encoder: e,
                        test: ds,
                    })
                    .collect();
                let decs: Vec<DecoderUnderTest<'_>> = decoders
                    .iter()
                    .zip(&labels)
                    .map(|(d, l)| DecoderUnderTest {
                        label: l.clone(),
                        decoder: d as &dyn CodeDecoder,
                    })
                    .collect();
                report.cross_pair = Some(cross_pair_matrix(&encs, &decs, opts.batch_size)?);
            }
        }
    }
    if report.cross_pair.is_none() {
        report.gaps.push("cross-pair matrix needs independently trained pairs".into());
    }
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

impl EvaluationReport {
    /// Writes `nmse.csv`, `cross_pair.csv` (when available),
    /// `se_curves.csv`, `parameter_counts.json`, `reference_values.json` and
    /// the complete `report.json` into `dir`. Output bytes depend only on the
    /// report contents.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut csv = csv::Writer::from_path(dir.join("nmse.csv"))?;
        csv.write_record(["regime", "task", "label", "nmse_db"])?;
        for e in &self.nmse {
            csv.write_record([
                e.regime.to_string(),
                e.task.to_string(),
                e.label.clone(),
                format!("{:.4}", e.nmse_db),
            ])?;
        }
        csv.flush()?;
        if let Some(m) = &self.cross_pair {
            m.write_csv(File::create(dir.join("cross_pair.csv"))?)?;
        }
        let mut csv = csv::Writer::from_path(dir.join("se_curves.csv"))?;
        csv.write_record(["snr_db", "se_bps_hz", "regime"])?;
        for c in &self.se_curves {
            for (snr, se) in c.snr_db.iter().zip(&c.se_bps_hz) {
                csv.write_record([format!("{snr}"), format!("{se:.6}"), c.label.clone()])?;
            }
        }
        csv.flush()?;
        write_json(&dir.join("parameter_counts.json"), &self.parameter_counts)?;
        write_json(&dir.join("reference_values.json"), &self.reference_values)?;
        write_json(&dir.join("report.json"), self)?;
        Ok(())
    }
}
