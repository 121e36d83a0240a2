//! Statistics-preserving network rescaling.
//!
//! A single factor `k` maps the full-scale model to a resized one:
//!
//! | quantity                       | full scale | resized            |
//! |--------------------------------|------------|--------------------|
//! | neurons per population         | `N`        | `⌊kN⌋`             |
//! | external inputs per neuron     | `I`        | `⌊kI⌋`             |
//! | connection probability         | `p`        | `p`                |
//! | synapses between populations   | `C`        | `⌊k²C⌋`            |
//! | PSC amplitude                  | `W`        | `W/√k`             |
//!
//! Recurrent and external mean input both shrink by `√k`; the missing
//! `(1−√k)` share is injected as a constant current per population.
//!
//! `k` is held as an exact decimal fraction so that the floors above are
//! integer arithmetic, not subject to binary rounding of values like 0.3.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, NUM_POPULATIONS, POPULATION_LABELS};
use crate::error::{Error, Result};
use crate::network::full_scale_pair_counts;

const MAX_DECIMALS: u32 = 12;

/// Scale factor as a reduced fraction `num/den` with a power-of-ten
/// denominator before reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScaleFactor {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl ScaleFactor {
    pub const ONE: ScaleFactor = ScaleFactor { num: 1, den: 1 };
    pub const TENTH: ScaleFactor = ScaleFactor { num: 1, den: 10 };

    pub fn from_ratio(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::ScaleOutOfRange(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(ScaleFactor { num: num / g, den: den / g })
    }

    /// Converts through the shortest decimal representation of `x`, so
    /// `0.3_f64` becomes exactly 3/10.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() || x <= 0.0 {
            return Err(Error::ScaleOutOfRange(x.to_string()));
        }
        format!("{x}").parse()
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn sqrt(self) -> f64 {
        self.as_f64().sqrt()
    }

    pub fn ratio(self) -> (u64, u64) {
        (self.num, self.den)
    }

    pub fn is_one(self) -> bool {
        self.num == self.den
    }

    /// `100·k`, e.g. `30` for 0.3.
    pub fn percent(self) -> f64 {
        (100 * self.num) as f64 / self.den as f64
    }

    /// `⌊k·n⌋`, exact.
    pub fn floor_mul(self, n: u64) -> u64 {
        (n as u128 * self.num as u128 / self.den as u128) as u64
    }

    /// `⌊k²·n⌋`, exact.
    pub fn floor_mul_squared(self, n: u64) -> u64 {
        let num = self.num as u128 * self.num as u128;
        let den = self.den as u128 * self.den as u128;
        (n as u128 * num / den) as u64
    }
}

impl PartialOrd for ScaleFactor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ScaleFactor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl FromStr for ScaleFactor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ScaleOutOfRange(s.to_string());
        let t = s.trim();
        let (int_part, frac_part) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        let frac_part = frac_part.trim_end_matches('0');
        if (int_part.is_empty() && frac_part.is_empty())
            || !int_part.bytes().all(|b| b.is_ascii_digit())
            || !frac_part.bytes().all(|b| b.is_ascii_digit())
            || frac_part.len() as u32 > MAX_DECIMALS
        {
            return Err(bad());
        }
        let den = 10u64.pow(frac_part.len() as u32);
        let int: u64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| bad())? };
        let frac: u64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| bad())? };
        let num = int.checked_mul(den).and_then(|v| v.checked_add(frac)).ok_or_else(bad)?;
        if num > 1_000 * den {
            return Err(bad());
        }
        ScaleFactor::from_ratio(num, den).map_err(|_| bad())
    }
}

impl fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for ScaleFactor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for ScaleFactor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        ScaleFactor::from_f64(x).map_err(serde::de::Error::custom)
    }
}

pub type PairCounts = [[u64; NUM_POPULATIONS]; NUM_POPULATIONS];

/// Everything the rescaling derives from `(config, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleTransform {
    pub k: ScaleFactor,
    pub full_sizes: [u64; NUM_POPULATIONS],
    pub scaled_sizes: [u64; NUM_POPULATIONS],
    pub full_ext_indegrees: [u64; NUM_POPULATIONS],
    pub scaled_ext_indegrees: [u64; NUM_POPULATIONS],
    /// Full-scale synapse totals, indexed `[post][pre]`.
    pub full_pair_synapses: PairCounts,
    /// Synapse totals to realize, indexed `[post][pre]`.
    pub scaled_pair_synapses: PairCounts,
    pub weight_factor: f64,
    pub dc_compensation_pa: [f64; NUM_POPULATIONS],
}

impl ScaleTransform {
    pub fn total_neurons(&self) -> u64 {
        self.scaled_sizes.iter().sum()
    }

    pub fn total_synapses(&self) -> u64 {
        self.scaled_pair_synapses.iter().flatten().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transform serializes")
    }
}

pub fn scale_population_sizes(sizes: &[u64; NUM_POPULATIONS], k: ScaleFactor) -> [u64; NUM_POPULATIONS] {
    let scaled = sizes.map(|n| k.floor_mul(n));
    for (i, &n) in scaled.iter().enumerate() {
        if n == 0 {
            log::warn!(
                "population {} is empty at k = {k}; its statistics are undefined",
                POPULATION_LABELS[i]
            );
        }
    }
    scaled
}

pub fn scale_external_indegrees(indegrees: &[u64; NUM_POPULATIONS], k: ScaleFactor) -> [u64; NUM_POPULATIONS] {
    indegrees.map(|n| k.floor_mul(n))
}

pub fn scale_pair_synapse_counts(counts: &PairCounts, k: ScaleFactor) -> PairCounts {
    counts.map(|row| row.map(|c| k.floor_mul_squared(c)))
}

pub fn scale_weights(weight_pa: f64, k: ScaleFactor) -> f64 {
    if k.is_one() {
        weight_pa
    } else {
        weight_pa / k.sqrt()
    }
}

/// Full-scale mean input current per population, split into its recurrent
/// and external parts (pA). Each presynaptic spike delivers charge `W·τ_syn`.
pub fn full_scale_mean_input(config: &ModelConfig) -> Result<[(f64, f64); NUM_POPULATIONS]> {
    let rates = config.full_scale_rates();
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("full_scale_rate_hz", "missing or non-finite rate"));
    }
    let sizes = config.sizes();
    let counts = full_scale_pair_counts(config)?;
    let ext = config.ext_indegrees();
    let rules = config.rule_matrix();
    // ms · Hz = 1e-3
    let tau = config.neuron.tau_syn_ms * 1e-3;
    Ok(std::array::from_fn(|post| {
        let recurrent: f64 = (0..NUM_POPULATIONS)
            .map(|pre| {
                let indegree = counts[post][pre] as f64 / sizes[post] as f64;
                indegree * rules[post][pre].weight_mean_pa * rates[pre]
            })
            .sum::<f64>()
            * tau;
        let external =
            ext[post] as f64 * config.external.weight_pa * config.external.rate_per_input_hz * tau;
        (recurrent, external)
    }))
}

/// Constant current that restores the mean input lost to downscaling.
/// `config` must be the full-scale configuration.
pub fn dc_compensation(config: &ModelConfig, k: ScaleFactor) -> Result<[f64; NUM_POPULATIONS]> {
    if k.is_one() {
        return Ok([0.0; NUM_POPULATIONS]);
    }
    let factor = 1.0 - k.sqrt();
    Ok(full_scale_mean_input(config)?.map(|(rec, ext)| factor * (rec + ext)))
}

/// Analytic mean input per population of the network resized by `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanInput {
    pub recurrent_pa: f64,
    pub external_pa: f64,
    pub compensation_pa: f64,
}

impl MeanInput {
    pub fn total(&self) -> f64 {
        self.recurrent_pa + self.external_pa + self.compensation_pa
    }
}

/// Mean-field input of the resized network: the recurrent and external
/// terms shrink by `√k` and the compensation current adds back the rest.
pub fn mean_input(config: &ModelConfig, k: ScaleFactor) -> Result<[MeanInput; NUM_POPULATIONS]> {
    let full = full_scale_mean_input(config)?;
    let comp = dc_compensation(config, k)?;
    let s = k.sqrt();
    Ok(std::array::from_fn(|i| MeanInput {
        recurrent_pa: s * full[i].0,
        external_pa: s * full[i].1,
        compensation_pa: comp[i],
    }))
}

/// Resizes `config` by `k`. The returned configuration has scaled sizes,
/// in-degrees and weights; the transform carries the synapse totals to
/// realize and the compensation currents. `config` is left untouched.
pub fn apply_transform(config: &ModelConfig, k: ScaleFactor) -> Result<(ModelConfig, ScaleTransform)> {
    config.validate()?;
    let full_sizes = config.sizes();
    let full_ext = config.ext_indegrees();
    let full_pairs = full_scale_pair_counts(config)?;

    let scaled_sizes = scale_population_sizes(&full_sizes, k);
    let scaled_ext = scale_external_indegrees(&full_ext, k);
    let scaled_pairs = scale_pair_synapse_counts(&full_pairs, k);
    let dc = dc_compensation(config, k)?;

    let mut scaled = config.clone();
    for (i, p) in scaled.populations.iter_mut().enumerate() {
        p.size = scaled_sizes[i];
        p.ext_indegree_balanced = k.floor_mul(p.ext_indegree_balanced);
        p.ext_indegree_unbalanced = k.floor_mul(p.ext_indegree_unbalanced);
    }
    for c in scaled.connections.iter_mut() {
        c.weight_mean_pa = scale_weights(c.weight_mean_pa, k);
    }
    scaled.external.weight_pa = scale_weights(scaled.external.weight_pa, k);

    let transform = ScaleTransform {
        k,
        full_sizes,
        scaled_sizes,
        full_ext_indegrees: full_ext,
        scaled_ext_indegrees: scaled_ext,
        full_pair_synapses: full_pairs,
        scaled_pair_synapses: scaled_pairs,
        weight_factor: if k.is_one() { 1.0 } else { 1.0 / k.sqrt() },
        dc_compensation_pa: dc,
    };
    Ok((scaled, transform))
}
