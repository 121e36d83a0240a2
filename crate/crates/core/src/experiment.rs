//! End-to-end runs: a manifest fixes every input, and a run directory holds
//! the manifest next to everything derived from it.
//!
//! Run directory layout:
//!
//! ```text
//! manifest.json      the resolved manifest
//! config.json        the model configuration after rescaling
//! rescale.json       the scale transform
//! spikes.tsv | .bin  spike record
//! stats.json         statistics report
//! stats.csv          the same, one row per population
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{canonical_config, load_config, InputMode, ModelConfig, NUM_POPULATIONS, POPULATION_LABELS};
use crate::engine::{run, RunParams, SpikeRecord};
use crate::error::{Error, Result};
use crate::io::{read_spikes, write_spikes, RecordMeta, SpikeFormat};
use crate::network::{build, write_adjacency_dump};
use crate::scale::{apply_transform, ScaleFactor, ScaleTransform};
use crate::stats::{report, SamplingPlan, SamplingStrategy, StatsOptions, StatsReport, DEFAULT_BIN_MS};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Below this scale the DC-driven network is expected to stay silent.
pub const DC_SILENCE_BELOW: ScaleFactor = ScaleFactor::TENTH;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// Model configuration file; the built-in canonical model when absent.
    pub config_path: Option<PathBuf>,
    pub scale: ScaleFactor,
    pub input_mode: InputMode,
    pub duration_ms: f64,
    pub dt_ms: f64,
    pub transient_ms: f64,
    pub seed: u64,
    pub sampling: SamplingPlan,
    pub bin_ms: f64,
    pub sync_window_ms: Option<f64>,
    pub min_spikes_for_cv: usize,
    pub spike_format: SpikeFormat,
    pub output_dir: PathBuf,
    pub dump_network: Option<PathBuf>,
    /// Crate version that wrote the manifest.
    #[serde(default)]
    pub version: String,
}

impl ExperimentManifest {
    /// Defaults taken from the configuration's experiment block.
    pub fn new(config: &ModelConfig, output_dir: impl Into<PathBuf>) -> Self {
        let ex = &config.experiment;
        ExperimentManifest {
            config_path: None,
            scale: ScaleFactor::ONE,
            input_mode: config.external.mode,
            duration_ms: ex.duration_ms,
            dt_ms: ex.dt_ms,
            transient_ms: ex.transient_ms,
            seed: ex.seed,
            sampling: SamplingPlan::new(SamplingStrategy::All, ex.seed),
            bin_ms: DEFAULT_BIN_MS,
            sync_window_ms: None,
            min_spikes_for_cv: 2,
            spike_format: SpikeFormat::Text,
            output_dir: output_dir.into(),
            dump_network: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("manifest: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_ms > 0.0) {
            return Err(Error::invalid("dt_ms", "must be > 0"));
        }
        if !(self.transient_ms >= 0.0 && self.duration_ms > self.transient_ms) {
            return Err(Error::invalid("duration_ms", "must exceed transient_ms"));
        }
        Ok(())
    }

    /// Base model with the manifest's mode and run settings applied.
    pub fn model(&self) -> Result<ModelConfig> {
        let mut config = match &self.config_path {
            Some(p) => load_config(p)?,
            None => canonical_config(),
        };
        config.external.mode = self.input_mode;
        config.experiment.dt_ms = self.dt_ms;
        config.experiment.duration_ms = self.duration_ms;
        config.experiment.transient_ms = self.transient_ms;
        config.experiment.seed = self.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn run_params(&self, workers: usize) -> RunParams {
        RunParams {
            dt_ms: self.dt_ms,
            duration_ms: self.duration_ms,
            transient_ms: self.transient_ms,
            seed: self.seed,
            workers,
        }
    }

    pub fn stats_options(&self, workers: usize) -> StatsOptions {
        StatsOptions {
            bin_ms: self.bin_ms,
            sync_window_ms: self.sync_window_ms,
            min_spikes_for_cv: self.min_spikes_for_cv,
            workers,
        }
    }

    pub fn spike_path(&self) -> PathBuf {
        self.output_dir.join(format!("spikes.{}", self.spike_format.extension()))
    }

    /// True where the DC-driven network is expected to fall silent.
    pub fn expects_silence(&self) -> bool {
        self.input_mode == InputMode::DcBalanced && self.scale < DC_SILENCE_BELOW
    }
}

pub struct RunOutcome {
    pub transform: ScaleTransform,
    pub record: SpikeRecord,
    pub report: StatsReport,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Builds, simulates and analyses one manifest, writing the run directory.
pub fn run_experiment(manifest: &ExperimentManifest, workers: usize) -> Result<RunOutcome> {
    manifest.validate()?;
    let base = manifest.model()?;
    let dir = &manifest.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut stored = manifest.clone();
    stored.version = env!("CARGO_PKG_VERSION").to_string();
    write(&dir.join(MANIFEST_FILE), &stored.to_json())?;

    let (config, transform) = apply_transform(&base, manifest.scale)?;
    write(&dir.join("config.json"), &config.to_json())?;
    write(&dir.join("rescale.json"), &transform.to_json())?;
    if manifest.expects_silence() {
        log::warn!(
            "k = {} with DC input is below {}; the network is expected to be silent",
            manifest.scale,
            DC_SILENCE_BELOW
        );
    }

    log::info!("building {} neurons, {} synapses", transform.total_neurons(), transform.total_synapses());
    let net = build(&config, &transform, manifest.seed)?;
    if let Some(p) = &manifest.dump_network {
        let f = fs::File::create(p).map_err(|e| Error::io(p, e))?;
        write_adjacency_dump(&net, std::io::BufWriter::new(f))?;
    }

    log::info!("simulating {} ms", manifest.duration_ms);
    let record = run(&net, &manifest.run_params(workers))?;
    drop(net);
    write_spikes(&record, &manifest.spike_path(), manifest.spike_format)?;

    let report = report(&record, &manifest.sampling, &manifest.stats_options(workers))?;
    write(&dir.join("stats.json"), &report.to_json())?;
    write(&dir.join("stats.csv"), &report.to_csv())?;
    Ok(RunOutcome { transform, record, report })
}

/// Loads the spike record of a finished run directory.
pub fn load_run(dir: &Path) -> Result<(ExperimentManifest, SpikeRecord)> {
    let manifest = ExperimentManifest::load(&dir.join(MANIFEST_FILE))?;
    let transform: ScaleTransform = {
        let p = dir.join("rescale.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("rescale report: {e}")))?
    };
    let meta = RecordMeta {
        dt_ms: manifest.dt_ms,
        duration_ms: manifest.duration_ms,
        transient_ms: manifest.transient_ms,
        sizes: transform.scaled_sizes,
    };
    let spikes = dir.join(format!("spikes.{}", manifest.spike_format.extension()));
    let record = read_spikes(&spikes, Some(&meta))?;
    Ok((manifest, record))
}

/// One statistic of one sweep point, with deviations from the reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub input_mode: InputMode,
    pub scale: ScaleFactor,
    pub statistic: String,
    pub values: [Option<f64>; NUM_POPULATIONS],
    pub deviations: [Option<f64>; NUM_POPULATIONS],
    pub expected_silence: bool,
}

/// `|x − reference| / reference`; undefined for a zero or absent reference.
pub fn relative_deviation(x: Option<f64>, reference: Option<f64>) -> Option<f64> {
    match (x, reference) {
        (Some(x), Some(r)) if r != 0.0 => Some((x - r).abs() / r.abs()),
        _ => None,
    }
}

const STATISTICS: [&str; 3] = ["rate_hz", "irregularity", "synchrony"];

fn values_of(report: &StatsReport, stat: usize) -> [Option<f64>; NUM_POPULATIONS] {
    std::array::from_fn(|p| {
        let s = &report.populations[p];
        match stat {
            0 => Some(s.mean_rate_hz),
            1 => s.irregularity,
            _ => s.synchrony,
        }
    })
}

/// Runs every `(mode, k)` point under `base` and tabulates the statistics.
/// Deviations are taken against the `k = 1` run of the same mode when it is
/// part of the sweep; otherwise rates are compared with the configuration's
/// full-scale reference rates and the other statistics have none.
pub fn sweep(
    base: &ExperimentManifest,
    scales: &[ScaleFactor],
    modes: &[InputMode],
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if scales.is_empty() {
        return Err(Error::invalid("scales", "sweep needs at least one scale factor"));
    }
    if modes.is_empty() {
        return Err(Error::invalid("modes", "sweep needs at least one input mode"));
    }
    let full_rates = base.model()?.full_scale_rates();
    let mut rows = Vec::new();
    for &mode in modes {
        let mut reports = Vec::new();
        for &k in scales {
            let mut m = base.clone();
            m.scale = k;
            m.input_mode = mode;
            m.output_dir = base.output_dir.join(mode.as_str()).join(format!("k{k}"));
            if let Some(p) = &base.dump_network {
                m.dump_network = None;
                log::debug!("network dump {} skipped inside a sweep", p.display());
            }
            log::info!("sweep point {mode} k = {k}");
            reports.push((k, m.expects_silence(), run_experiment(&m, workers)?.report));
        }
        let reference = reports.iter().find(|(k, _, _)| k.is_one()).map(|(_, _, r)| r.clone());
        for (k, silent, rep) in &reports {
            for (si, name) in STATISTICS.iter().enumerate() {
                let values = values_of(rep, si);
                let refs: [Option<f64>; NUM_POPULATIONS] = match &reference {
                    Some(r) => values_of(r, si),
                    None if si == 0 => full_rates.map(Some),
                    None => [None; NUM_POPULATIONS],
                };
                rows.push(SweepRow {
                    input_mode: mode,
                    scale: *k,
                    statistic: name.to_string(),
                    values,
                    deviations: std::array::from_fn(|p| relative_deviation(values[p], refs[p])),
                    expected_silence: *silent,
                });
            }
        }
    }
    Ok(rows)
}

/// Sweep table: one row per mode, scale and statistic; each population has
/// a value column and a relative-deviation column.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["input_mode".to_string(), "scale_percent".into(), "statistic".into()];
    for l in POPULATION_LABELS {
        header.push(l.to_string());
        header.push(format!("{l}_rel_dev"));
    }
    header.push("expected_silence".into());
    w.write_record(&header).expect("in-memory csv write");
    let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.input_mode.as_str().to_string(),
            format!("{}", r.scale.percent()),
            r.statistic.clone(),
        ];
        for p in 0..NUM_POPULATIONS {
            rec.push(cell(r.values[p]));
            rec.push(cell(r.deviations[p]));
        }
        rec.push(r.expected_silence.to_string());
        w.write_record(&rec).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// Recomputes statistics of a finished run under another plan.
pub fn restat(dir: &Path, plan: Option<SamplingPlan>, options: Option<StatsOptions>) -> Result<StatsReport> {
    let (manifest, record) = load_run(dir)?;
    let plan = plan.unwrap_or(manifest.sampling);
    let options = options.unwrap_or_else(|| manifest.stats_options(0));
    report(&record, &plan, &options)
}
