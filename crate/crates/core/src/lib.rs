//! Clock-driven simulator of the eight-population layered cortical
//! microcircuit, with a single-parameter rescaling that preserves mean input
//! and the layer-specific spike statistics.
//!
//! The pipeline is `config` → `scale` → `network` → `engine` → `stats`:
//!
//! ```no_run
//! use microcircuit::{canonical_config, apply_transform, build, run, RunParams, ScaleFactor};
//!
//! let config = canonical_config();
//! let k: ScaleFactor = "0.1".parse().unwrap();
//! let (scaled, transform) = apply_transform(&config, k).unwrap();
//! let net = build(&scaled, &transform, 55).unwrap();
//! let record = run(&net, &RunParams::from_experiment(&scaled.experiment)).unwrap();
//! println!("{} spikes", record.len());
//! ```

// `!(x > 0.0)` checks are how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod engine;
mod error;
pub mod experiment;
pub mod io;
pub mod network;
mod parallel;
pub mod rng;
pub mod scale;
pub mod stats;

pub use config::{canonical_config, load_config, InputMode, ModelConfig, NUM_POPULATIONS, POPULATION_LABELS};
pub use engine::{run, run_into, RunParams, SpikeRecord, SpikeSink};
pub use error::{Error, Result};
pub use network::{build, NetworkInstance};
pub use scale::{apply_transform, ScaleFactor, ScaleTransform};
pub use stats::{report, SamplingPlan, SamplingStrategy, StatsOptions, StatsReport};
