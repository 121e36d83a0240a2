use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use microcircuit::experiment::{load_run, restat, run_experiment, sweep, sweep_csv, ExperimentManifest, MANIFEST_FILE};
use microcircuit::io::{write_raster, SpikeFormat};
use microcircuit::scale::mean_input;
use microcircuit::stats::resolve_sampling;
use microcircuit::{
    apply_transform, canonical_config, load_config, InputMode, ModelConfig, SamplingPlan, SamplingStrategy,
    ScaleFactor, StatsOptions, POPULATION_LABELS,
};

#[derive(Parser)]
#[command(name = "microcircuit", version, about = "Layered cortical microcircuit simulator")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "MICROCIRCUIT_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, simulate and analyse one network.
    Run(RunArgs),
    /// Run a grid of scale factors and input modes and tabulate the statistics.
    Sweep(SweepArgs),
    /// Print the rescaling of a configuration as JSON.
    RescaleReport(RescaleArgs),
    /// Recompute statistics from a finished run directory.
    Stats(StatsArgs),
    /// Export sampled spikes of a finished run for plotting.
    Raster(RasterArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model configuration JSON; the built-in canonical model by default.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_name = "MODE")]
    input_mode: Option<InputMode>,
}

impl ModelArgs {
    fn load(&self) -> Result<ModelConfig> {
        let mut config = match &self.config {
            Some(p) => load_config(p).with_context(|| format!("loading {}", p.display()))?,
            None => canonical_config(),
        };
        if let Some(m) = self.input_mode {
            config.external.mode = m;
        }
        Ok(config)
    }
}

#[derive(Args, Clone)]
struct SimArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Simulated time in ms.
    #[arg(long)]
    duration: Option<f64>,
    /// Time step in ms.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Initial period left out of all statistics, in ms.
    #[arg(long)]
    transient: Option<f64>,
    /// Synchrony window after the transient, in ms; the whole run by default.
    #[arg(long)]
    sync_window: Option<f64>,
    /// Synchrony bin width in ms.
    #[arg(long, default_value_t = 3.0)]
    bin: f64,
    /// all, total:N, per-pop:N or at-most:N.
    #[arg(long, default_value = "all")]
    sample: SamplingStrategy,
    /// Seed of the neuron sample; the run seed by default.
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    min_spikes_for_cv: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

impl SimArgs {
    fn manifest(&self, scale: ScaleFactor) -> Result<ExperimentManifest> {
        let config = self.model.load()?;
        let mut m = ExperimentManifest::new(&config, &self.out);
        m.config_path = self.model.config.clone();
        m.scale = scale;
        if let Some(x) = self.duration {
            m.duration_ms = x;
        }
        if let Some(x) = self.dt {
            m.dt_ms = x;
        }
        if let Some(x) = self.seed {
            m.seed = x;
        }
        if let Some(x) = self.transient {
            m.transient_ms = x;
        }
        m.sync_window_ms = self.sync_window;
        m.bin_ms = self.bin;
        m.sampling = SamplingPlan::new(self.sample, self.sample_seed.unwrap_or(m.seed));
        m.min_spikes_for_cv = self.min_spikes_for_cv;
        m.spike_format = match self.format {
            Format::Text => SpikeFormat::Text,
            Format::Binary => SpikeFormat::Binary,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Scale factor k in (0, 1].
    #[arg(long, default_value = "1")]
    scale: ScaleFactor,
    /// Write the built network's adjacency to this file.
    #[arg(long, value_name = "PATH")]
    dump_network: Option<PathBuf>,
    /// Rerun a saved manifest; other run options are ignored except --out.
    #[arg(long, value_name = "PATH", conflicts_with = "dump_network")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated scale factors.
    #[arg(long, value_delimiter = ',', default_value = "1,0.8,0.6,0.5,0.4,0.3,0.2,0.1,0.05,0.02,0.01")]
    scales: Vec<ScaleFactor>,
    /// Comma-separated input modes.
    #[arg(long, value_delimiter = ',', default_value = "poisson-balanced")]
    modes: Vec<InputMode>,
}

#[derive(Args)]
struct RescaleArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "1")]
    scale: ScaleFactor,
    /// Write to a file instead of standard output.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Run directory written by `run`.
    run: PathBuf,
    /// Override the run's sampling strategy.
    #[arg(long)]
    sample: Option<SamplingStrategy>,
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long)]
    sync_window: Option<f64>,
    #[arg(long)]
    bin: Option<f64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct RasterArgs {
    /// Run directory written by `run`.
    run: PathBuf,
    /// Neurons to export: all, total:N, per-pop:N or at-most:N.
    #[arg(long)]
    sample: SamplingStrategy,
    #[arg(long, default_value_t = 0)]
    sample_seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_run(args: &RunArgs, workers: usize) -> Result<()> {
    let manifest = match &args.manifest {
        Some(p) => {
            let mut m = ExperimentManifest::load(p)?;
            m.output_dir = args.sim.out.clone();
            m
        }
        None => {
            let mut m = args.sim.manifest(args.scale)?;
            m.dump_network = args.dump_network.clone();
            m
        }
    };
    let out = run_experiment(&manifest, workers)?;
    eprintln!(
        "{} neurons, {} spikes; results in {}",
        out.transform.total_neurons(),
        out.record.len(),
        manifest.output_dir.display()
    );
    for p in &out.report.populations {
        eprintln!(
            "{:4}  rate {:7.3} Hz  cv {}  sync {}",
            p.population,
            p.mean_rate_hz,
            p.irregularity.map_or("-".into(), |x| format!("{x:.3}")),
            p.synchrony.map_or("-".into(), |x| format!("{x:.3}")),
        );
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, workers: usize) -> Result<()> {
    if args.scales.is_empty() {
        bail!("--scales is empty");
    }
    let base = args.sim.manifest(ScaleFactor::ONE)?;
    let rows = sweep(&base, &args.scales, &args.modes, workers)?;
    let path = args.sim.out.join("sweep.csv");
    fs::write(&path, sweep_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("{} rows written to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_rescale(args: &RescaleArgs) -> Result<()> {
    let config = args.model.load()?;
    let (_, transform) = apply_transform(&config, args.scale)?;
    let inputs = mean_input(&config, args.scale)?;
    let mut doc = serde_json::to_value(&transform)?;
    doc["input_mode"] = serde_json::to_value(config.external.mode)?;
    doc["total_neurons"] = transform.total_neurons().into();
    doc["total_synapses"] = transform.total_synapses().into();
    doc["mean_input_pa"] = POPULATION_LABELS
        .iter()
        .zip(inputs.iter())
        .map(|(l, m)| (l.to_string(), serde_json::to_value(m).expect("mean input serializes")))
        .collect::<serde_json::Map<_, _>>()
        .into();
    emit(args.out.as_deref(), &(serde_json::to_string_pretty(&doc)? + "\n"))
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let manifest = ExperimentManifest::load(&args.run.join(MANIFEST_FILE))?;
    let plan = SamplingPlan::new(
        args.sample.unwrap_or(manifest.sampling.strategy),
        args.sample_seed.unwrap_or(manifest.sampling.seed),
    );
    let options = StatsOptions {
        bin_ms: args.bin.unwrap_or(manifest.bin_ms),
        sync_window_ms: args.sync_window.or(manifest.sync_window_ms),
        min_spikes_for_cv: manifest.min_spikes_for_cv,
        workers: 0,
    };
    let report = restat(&args.run, Some(plan), Some(options))?;
    let text = match args.format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => report.to_csv(),
    };
    emit(args.out.as_deref(), &text)
}

fn cmd_raster(args: &RasterArgs) -> Result<()> {
    let (_, record) = load_run(&args.run)?;
    let ids = resolve_sampling(&SamplingPlan::new(args.sample, args.sample_seed), &record.population_ranges)?;
    match &args.out {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_raster(&record, &ids, std::io::BufWriter::new(f))?;
        }
        None => write_raster(&record, &ids, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(a) => cmd_run(a, cli.workers),
        Command::Sweep(a) => cmd_sweep(a, cli.workers),
        Command::RescaleReport(a) => cmd_rescale(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Raster(a) => cmd_raster(a),
    }
}
