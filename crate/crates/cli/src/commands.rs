//! The four subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, ValueEnum};
use csi_mtl::channel_data::{effective_sparsity, generate_splits, save_dataset, ChannelDataset, Dims, ScenarioConfig};
use csi_mtl::evaluation::{
    compare_regimes, cross_pair_matrix, reconstruct_channels, reconstruction_nmse_db, se_curve,
    system_parameter_count, DecoderUnderTest, EncoderUnderTest, ReportOptions, UserGroup, DEFAULT_SNR_GRID,
};
use csi_mtl::models::{regime_parameter_counts, CodeDecoder};
use csi_mtl::training::{Regime, TrainedSystem, Trainer};
use serde::{Deserialize, Serialize};

use crate::config::{label_of, read_json, read_run_config, GenerateConfig, RunConfig, TaskEntry};
use crate::error::{CliError, CliResult};
use crate::GlobalArgs;

const STATE_FILE: &str = "state.ck";
const MANIFEST_FILE: &str = "manifest.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario preset: indoor or outdoor.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Number of training samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Validation samples (default: a tenth of --samples).
    #[arg(long)]
    pub val_samples: Option<usize>,
    /// Test samples (default: a tenth of --samples).
    #[arg(long)]
    pub test_samples: Option<usize>,
    #[arg(long)]
    pub n_subcarriers: Option<usize>,
    #[arg(long)]
    pub n_delay: Option<usize>,
    #[arg(long)]
    pub n_tx: Option<usize>,
}

#[derive(Debug, Serialize)]
struct GenerateSummary<'a> {
    config: &'a GenerateConfig,
    scenario: &'a ScenarioConfig,
    counts: [usize; 3],
    norm_offset: f32,
    norm_scale: f32,
    train_effective_sparsity: f64,
}

pub fn generate(g: &GlobalArgs, a: &GenerateArgs) -> CliResult<()> {
    let mut cfg: GenerateConfig = match &g.config {
        Some(p) => read_json(p)?,
        None => GenerateConfig::default(),
    };
    if let Some(s) = &a.scenario {
        cfg.scenario = s.clone();
    }
    if let Some(n) = a.samples {
        cfg.samples = n;
    }
    cfg.val_samples = a.val_samples.or(cfg.val_samples);
    cfg.test_samples = a.test_samples.or(cfg.test_samples);
    cfg.dims = Dims {
        n_subcarriers: a.n_subcarriers.unwrap_or(cfg.dims.n_subcarriers),
        n_delay: a.n_delay.unwrap_or(cfg.dims.n_delay),
        n_tx: a.n_tx.unwrap_or(cfg.dims.n_tx),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let counts = cfg.counts();
    if counts.contains(&0) {
        return Err(CliError::Config(format!(
            "sample counts must be at least 1, got train/val/test = {counts:?}\n\
             usage: csi-mtl generate --scenario <indoor|outdoor> --samples <N >= 1> [--val-samples N] [--test-samples N]"
        )));
    }
    let dims = Dims::new(cfg.dims.n_subcarriers, cfg.dims.n_delay, cfg.dims.n_tx)?;
    let scenario = ScenarioConfig::preset(&cfg.scenario, cfg.seed, dims.n_delay)?;
    let splits = generate_splits(&scenario, counts, &dims)?;

    let out = g.out_or(&format!("data/{}", cfg.scenario));
    create_dir(&out)?;
    for ds in &splits {
        save_dataset(ds, out.join(format!("{}.csi", ds.meta.split)))?;
    }
    let norm = splits[0].meta.norm;
    let summary = GenerateSummary {
        config: &cfg,
        scenario: &scenario,
        counts,
        norm_offset: norm.offset,
        norm_scale: norm.scale,
        train_effective_sparsity: effective_sparsity(&splits[0]),
    };
    write_json(&out.join("generate.json"), &summary)?;
    if !g.quiet {
        println!(
            "generated {} scenario: train {} / val {} / test {} samples of {}x{} (from {} subcarriers), \
             effective sparsity {:.4}, written to {}",
            cfg.scenario,
            counts[0],
            counts[1],
            counts[2],
            dims.n_delay,
            dims.n_tx,
            dims.n_subcarriers,
            summary.train_effective_sparsity,
            out.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// independent, joint or hard_sharing.
    #[arg(long)]
    pub regime: Option<Regime>,
    /// Task shorthand `family:ratio:data_dir` (repeatable); replaces the tasks
    /// of the configuration file.
    #[arg(long = "task", value_name = "FAMILY:RATIO:DIR")]
    pub tasks: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Weight of the previous step's loss in the joint objective.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Continue the run saved in the output directory.
    #[arg(long)]
    pub resume: bool,
}

/// Everything a later `eval` or `report` needs to know about a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub regime: Regime,
    pub distribution_label: String,
    pub seed: u64,
    pub dims: Dims,
    pub run: RunConfig,
    pub epochs_done: usize,
    pub global_step: u64,
    pub best_epochs: Vec<Option<usize>>,
    pub final_val_nmse_db: Vec<f64>,
    /// Wall-clock creation time; the only field that differs between
    /// otherwise identical runs.
    pub created_unix: u64,
}

fn resolve_run_config(g: &GlobalArgs, a: &TrainArgs) -> CliResult<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => read_run_config(p)?,
        None => {
            let Some(regime) = a.regime else {
                return Err(CliError::Config("train needs --regime or a --config file".into()));
            };
            RunConfig {
                regime,
                ..RunConfig::default()
            }
        }
    };
    if let Some(r) = a.regime {
        cfg.regime = r;
    }
    if !a.tasks.is_empty() {
        cfg.tasks = a.tasks.iter().map(|s| TaskEntry::parse_shorthand(s)).collect::<CliResult<_>>()?;
    }
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
    t.alpha = a.alpha.unwrap_or(t.alpha);
    t.seed = g.seed.unwrap_or(t.seed);
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(g: &GlobalArgs, a: &TrainArgs) -> CliResult<()> {
    let cfg = resolve_run_config(g, a)?;
    let tasks = cfg.load_tasks()?;
    let label = label_of(&tasks);
    let out = g.out_or(&format!("runs/{}", cfg.regime));
    create_dir(&out)?;
    let state_path = out.join(STATE_FILE);
    let trainer = if a.resume {
        if !state_path.exists() {
            return Err(CliError::Missing(format!("no run state to resume at {}", state_path.display())));
        }
        Trainer::resume(&state_path, cfg.regime, &tasks, &cfg.train)?
    } else {
        Trainer::new(cfg.regime, &tasks, &cfg.train)?
    };
    log::info!(
        "training {} tasks ({label}) under the {} regime for {} epochs (starting at epoch {})",
        tasks.len(),
        cfg.regime,
        cfg.train.epochs,
        trainer.epochs_done()
    );
    let mut trainer = trainer;
    let mut final_val = Vec::new();
    while trainer.epochs_done() < cfg.train.epochs {
        final_val = trainer.run_epoch()?;
        trainer.save_state(&state_path)?;
    }
    if final_val.is_empty() {
        final_val = trainer.validate()?;
    }
    let epochs_done = trainer.epochs_done();
    let outcome = trainer.finish();
    let step = outcome.trace.global_step();
    outcome.best.save(out.join("best.ck"), step)?;
    outcome.last.save(out.join("last.ck"), step)?;
    outcome.trace.write_jsonl(File::create(out.join("trace.jsonl"))?)?;
    outcome.trace.write_epoch_csv(File::create(out.join("epochs.csv"))?)?;
    let manifest = RunManifest {
        regime: cfg.regime,
        distribution_label: label.to_string(),
        seed: cfg.train.seed,
        dims: tasks[0].train.meta.dims,
        run: cfg.clone(),
        epochs_done,
        global_step: step,
        best_epochs: outcome.best_epochs.clone(),
        final_val_nmse_db: final_val.clone(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    if !g.quiet {
        println!(
            "trained {} ({label}) for {epochs_done} epochs / {step} steps; final val NMSE {} dB; written to {}",
            cfg.regime,
            final_val.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", "),
            out.display()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Snapshot {
    /// Models with the best validation NMSE.
    Best,
    /// Models after the last epoch.
    Last,
}

impl Snapshot {
    fn file(self) -> &'static str {
        match self {
            Snapshot::Best => "best.ck",
            Snapshot::Last => "last.ck",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train` (default: $CSI_MTL_HOME/runs/independent).
    #[arg(long)]
    pub run: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Snapshot::Best)]
    pub checkpoint: Snapshot,
    /// Write the encoder x decoder NMSE matrix.
    #[arg(long)]
    pub matrix: bool,
    /// Write zero-forcing sum spectral efficiency curves.
    #[arg(long)]
    pub se: bool,
    /// Write parameter counts.
    #[arg(long)]
    pub params: bool,
    /// SNR grid in dB as `start:stop:step` or a comma-separated list.
    #[arg(long)]
    pub snr: Option<String>,
    /// Test samples (user groups) used for spectral efficiency.
    #[arg(long, default_value_t = 1000)]
    pub se_samples: usize,
    #[arg(long, default_value_t = 250)]
    pub batch_size: usize,
}

/// Parses `start:stop:step` (inclusive) or `a,b,c`.
pub fn parse_snr_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Config(format!("bad SNR grid '{s}'; expected start:stop:step or a,b,c"));
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
    if s.contains(':') {
        let parts: Vec<f64> = s.split(':').map(num).collect::<CliResult<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + i as f64 * step).collect())
    } else {
        s.split(',').map(num).collect()
    }
}

fn load_manifest(run: &Path) -> CliResult<RunManifest> {
    let path = run.join(MANIFEST_FILE);
    if !path.exists() {
        return Err(CliError::Missing(format!("no run manifest at {}", path.display())));
    }
    read_json(&path)
}

fn load_system(run: &Path, snapshot: Snapshot) -> CliResult<TrainedSystem> {
    Ok(TrainedSystem::load(run.join(snapshot.file()))?)
}

pub fn eval(g: &GlobalArgs, a: &EvalArgs) -> CliResult<()> {
    let run = a.run.clone().unwrap_or_else(|| g.home.join("runs/independent"));
    let manifest = load_manifest(&run)?;
    let system = load_system(&run, a.checkpoint)?;
    let tests = manifest.run.load_test_sets()?;
    if tests.len() != system.n_tasks() {
        return Err(CliError::Shape(format!(
            "run has {} tasks but its manifest lists {} test sets",
            system.n_tasks(),
            tests.len()
        )));
    }
    let everything = !(a.matrix || a.se || a.params);
    let out = g.out.clone().unwrap_or_else(|| run.join("eval"));
    create_dir(&out)?;
    let labels: Vec<String> = system.tasks.iter().map(|t| t.label()).collect();

    let mut csv = String::from("task,label,nmse_db\n");
    for (t, ds) in tests.iter().enumerate() {
        let route = system.route(t)?;
        let v = reconstruction_nmse_db(&system.encoders[t], route.as_ref(), ds, a.batch_size)?;
        csv.push_str(&format!("{t},{},{v:.4}\n", labels[t]));
        if !g.quiet {
            println!("{}: NMSE {v:.2} dB", labels[t]);
        }
    }
    fs::write(out.join("nmse.csv"), csv)?;

    if a.matrix || everything {
        let routes: Vec<Box<dyn CodeDecoder + '_>> =
            (0..system.n_tasks()).map(|t| system.route(t)).collect::<Result<_, _>>()?;
        let encs: Vec<EncoderUnderTest<'_>> = system
            .encoders
            .iter()
            .zip(&tests)
            .zip(&labels)
            .map(|((e, ds), l)| EncoderUnderTest {
                label: l.clone(),
                encoder: e,
                test: ds,
            })
            .collect();
        let decs: Vec<DecoderUnderTest<'_>> = routes
            .iter()
            .zip(&labels)
            .map(|(r, l)| DecoderUnderTest {
                label: l.clone(),
                decoder: r.as_ref(),
            })
            .collect();
        let m = cross_pair_matrix(&encs, &decs, a.batch_size)?;
        m.write_csv(File::create(out.join("cross_pair.csv"))?)?;
        if !g.quiet {
            println!("cross-pair NMSE (dB), rows = encoders, columns = decoders:");
            for (r, row) in m.rows.iter().zip(&m.entries) {
                let cells: Vec<String> = row
                    .iter()
                    .map(|v| v.map_or("incompatible".into(), |v| format!("{v:8.2}")))
                    .collect();
                println!("  {r:>16} {}", cells.join(" "));
            }
        }
    }

    if a.se || everything {
        let grid = match &a.snr {
            Some(s) => parse_snr_grid(s)?,
            None => DEFAULT_SNR_GRID.to_vec(),
        };
        let samples = a.se_samples.min(tests.iter().map(ChannelDataset::len).min().unwrap_or(0));
        if samples == 0 {
            return Err(CliError::Config("spectral efficiency needs at least one test sample".into()));
        }
        let mut per_task = Vec::new();
        for (t, ds) in tests.iter().enumerate() {
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
        let curves = [
            se_curve("perfect_csi", &groups(true), &grid)?,
            se_curve(&manifest.regime.to_string(), &groups(false), &grid)?,
        ];
        let mut csv = String::from("snr_db,se_bps_hz,regime\n");
        for c in &curves {
            for (snr, se) in c.snr_db.iter().zip(&c.se_bps_hz) {
                csv.push_str(&format!("{snr},{se:.6},{}\n", c.label));
            }
        }
        fs::write(out.join("se_curves.csv"), csv)?;
    }

    if a.params || everything {
        let run_count = system_parameter_count(&system);
        let ratio = manifest.run.tasks[0].compression_ratio;
        let families: Vec<_> = manifest.run.tasks.iter().map(|t| t.family).collect();
        let regimes = if manifest.run.tasks.iter().all(|t| t.compression_ratio == ratio) {
            Some(regime_parameter_counts(&families, ratio, &manifest.dims)?)
        } else {
            None
        };
        let json = serde_json::json!({
            "run": run_count,
            "regimes": regimes.as_ref().map(|r| serde_json::json!({
                "independent": r.independent.total,
                "joint": r.joint.total,
                "hard_sharing": r.hard_sharing.total,
                "joint_reduction": r.reduction(&r.joint),
                "hard_sharing_reduction": r.reduction(&r.hard_sharing),
            })),
        });
        write_json(&out.join("parameter_counts.json"), &json)?;
        if !g.quiet {
            println!("parameters of this run: {}", run_count.total);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- report

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories to compare (repeatable), typically one per regime.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Snapshot::Best)]
    pub checkpoint: Snapshot,
    /// SNR grid in dB as `start:stop:step` or a comma-separated list.
    #[arg(long)]
    pub snr: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub se_samples: usize,
    #[arg(long, default_value_t = 250)]
    pub batch_size: usize,
}

pub fn report(g: &GlobalArgs, a: &ReportArgs) -> CliResult<()> {
    let mut runs = Vec::new();
    for dir in &a.runs {
        let m = load_manifest(dir)?;
        let s = load_system(dir, a.checkpoint)?;
        runs.push((m, s));
    }
    let (first, _) = &runs[0];
    let test_paths: Vec<PathBuf> = first.run.tasks.iter().map(|t| t.test_path()).collect::<CliResult<_>>()?;
    for (m, _) in &runs[1..] {
        let paths: Vec<PathBuf> = m.run.tasks.iter().map(|t| t.test_path()).collect::<CliResult<_>>()?;
        if paths != test_paths {
            return Err(CliError::Config("runs to compare must be evaluated on the same test sets".into()));
        }
    }
    let tests = first.run.load_test_sets()?;
    let mut systems: Vec<(Regime, Option<&TrainedSystem>)> = Vec::new();
    for regime in Regime::ALL {
        let found: Vec<&TrainedSystem> = runs.iter().filter(|(m, _)| m.regime == regime).map(|(_, s)| s).collect();
        if found.len() > 1 {
            return Err(CliError::Config(format!("more than one {regime} run given")));
        }
        systems.push((regime, found.first().copied()));
    }
    let opts = ReportOptions {
        snr_grid: match &a.snr {
            Some(s) => parse_snr_grid(s)?,
            None => DEFAULT_SNR_GRID.to_vec(),
        },
        se_samples: a.se_samples,
        batch_size: a.batch_size,
    };
    let report = compare_regimes(&systems, &tests, &opts)?;
    let out = g.out_or("report");
    report.write(&out)?;
    if !g.quiet {
        for e in &report.nmse {
            println!("{:>12} {:>16}: NMSE {:.2} dB", e.regime.to_string(), e.label, e.nmse_db);
        }
        for gap in &report.gaps {
            println!("gap: {gap}");
        }
        println!("report written to {}", out.display());
    }
    Ok(())
}
