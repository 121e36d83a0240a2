//! Per-population spike statistics: mean rate, irregularity (mean CV of
//! single-neuron ISIs) and synchrony (Fano factor of the pooled, binned
//! spike count).
//!
//! All statistics use spikes in `(transient, duration]`.

use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::config::{NUM_POPULATIONS, POPULATION_LABELS};
use crate::engine::SpikeRecord;
use crate::error::{Error, Result};
use crate::parallel::Executor;
use crate::rng::{domain, CounterRng};

pub const DEFAULT_BIN_MS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingStrategy {
    All,
    /// `n_total` neurons split over populations in proportion to size.
    FixedFractionTotal { n_total: u64 },
    /// Exactly `n` per population; fails where a population is smaller.
    FixedPerPopulation { n: u64 },
    /// `n` per population, or the whole population where it is smaller.
    AtMostPerPopulation { n: u64 },
}

impl fmt::Display for SamplingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingStrategy::All => write!(f, "all"),
            SamplingStrategy::FixedFractionTotal { n_total } => write!(f, "total:{n_total}"),
            SamplingStrategy::FixedPerPopulation { n } => write!(f, "per-pop:{n}"),
            SamplingStrategy::AtMostPerPopulation { n } => write!(f, "at-most:{n}"),
        }
    }
}

impl std::str::FromStr for SamplingStrategy {
    type Err = Error;

    /// Accepts `all`, `total:N`, `per-pop:N` and `at-most:N`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(SamplingStrategy::All);
        }
        let (kind, n) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("sampling strategy {s:?}: expected all, total:N, per-pop:N or at-most:N")))?;
        let n: u64 = n
            .parse()
            .map_err(|_| Error::Parse(format!("sampling strategy {s:?}: bad count")))?;
        match kind {
            "total" => Ok(SamplingStrategy::FixedFractionTotal { n_total: n }),
            "per-pop" => Ok(SamplingStrategy::FixedPerPopulation { n }),
            "at-most" => Ok(SamplingStrategy::AtMostPerPopulation { n }),
            _ => Err(Error::Parse(format!("unknown sampling strategy {kind:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub strategy: SamplingStrategy,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(strategy: SamplingStrategy, seed: u64) -> Self {
        SamplingPlan { strategy, seed }
    }

    pub fn all() -> Self {
        SamplingPlan { strategy: SamplingStrategy::All, seed: 0 }
    }

    /// Number of neurons taken from each population.
    pub fn resolve_counts(&self, sizes: &[u64; NUM_POPULATIONS]) -> Result<[u64; NUM_POPULATIONS]> {
        let total: u64 = sizes.iter().sum();
        let counts: [u64; NUM_POPULATIONS] = match self.strategy {
            SamplingStrategy::All => *sizes,
            SamplingStrategy::FixedFractionTotal { n_total } => {
                if total == 0 {
                    [0; NUM_POPULATIONS]
                } else {
                    // round half up of n·N_i/ΣN in integers
                    sizes.map(|n| {
                        let num = 2 * n_total as u128 * n as u128 + total as u128;
                        (num / (2 * total as u128)) as u64
                    })
                }
            }
            SamplingStrategy::FixedPerPopulation { n } => [n; NUM_POPULATIONS],
            SamplingStrategy::AtMostPerPopulation { n } => sizes.map(|s| s.min(n)),
        };
        for (i, (&c, &s)) in counts.iter().zip(sizes).enumerate() {
            if c > s {
                return Err(Error::SampleTooLarge {
                    population: POPULATION_LABELS[i].to_string(),
                    requested: c as usize,
                    available: s as usize,
                });
            }
        }
        Ok(counts)
    }
}

/// Sampled neuron ids per population, ascending.
pub fn resolve_sampling(
    plan: &SamplingPlan,
    population_ranges: &[std::ops::Range<u32>; NUM_POPULATIONS],
) -> Result<[Vec<u32>; NUM_POPULATIONS]> {
    let sizes = population_ranges.clone().map(|r| r.len() as u64);
    let counts = plan.resolve_counts(&sizes)?;
    let rng = CounterRng::new(plan.seed);
    Ok(std::array::from_fn(|p| {
        let r = &population_ranges[p];
        if counts[p] == sizes[p] {
            return r.clone().collect();
        }
        let mut s = rng.stream(domain::SAMPLING, p as u32);
        let mut ids: Vec<u32> = index::sample(&mut s, sizes[p] as usize, counts[p] as usize)
            .into_iter()
            .map(|i| r.start + i as u32)
            .collect();
        ids.sort_unstable();
        ids
    }))
}

/// Post-transient spike steps of every neuron, in time order.
pub struct SpikeTrains {
    offsets: Vec<usize>,
    steps: Vec<u32>,
}

impl SpikeTrains {
    pub fn new(record: &SpikeRecord) -> Self {
        let n = record.n_neurons();
        let (lo, hi) = (record.transient_steps(), record.duration_steps());
        let keep = |s: u32| s > lo && s <= hi;
        let mut offsets = vec![0usize; n + 1];
        for (s, id) in record.events() {
            if keep(s) {
                offsets[id as usize + 1] += 1;
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut steps = vec![0u32; offsets[n]];
        for (s, id) in record.events() {
            if keep(s) {
                steps[fill[id as usize]] = s;
                fill[id as usize] += 1;
            }
        }
        SpikeTrains { offsets, steps }
    }

    pub fn of(&self, neuron: u32) -> &[u32] {
        let i = neuron as usize;
        &self.steps[self.offsets[i]..self.offsets[i + 1]]
    }
}

fn window_s(record: &SpikeRecord) -> f64 {
    (record.duration_ms - record.transient_ms) * 1e-3
}

fn rate_of(trains: &SpikeTrains, ids: &[u32], window_s: f64) -> f64 {
    if ids.is_empty() || window_s <= 0.0 {
        return 0.0;
    }
    let n: usize = ids.iter().map(|&i| trains.of(i).len()).sum();
    n as f64 / (ids.len() as f64 * window_s)
}

/// CV of one train's inter-spike intervals, population sd over mean.
pub fn cv_of_train(steps: &[u32]) -> Option<f64> {
    if steps.len() < 2 {
        return None;
    }
    let isi: Vec<f64> = steps.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let n = isi.len() as f64;
    let mean = isi.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return None;
    }
    let var = isi.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(var.sqrt() / mean)
}

fn cv_of(trains: &SpikeTrains, ids: &[u32], min_spikes: usize) -> (Option<f64>, usize) {
    let cvs: Vec<f64> = ids
        .iter()
        .map(|&i| trains.of(i))
        .filter(|t| t.len() >= min_spikes.max(2))
        .filter_map(cv_of_train)
        .collect();
    if cvs.is_empty() {
        (None, 0)
    } else {
        (Some(cvs.iter().sum::<f64>() / cvs.len() as f64), cvs.len())
    }
}

/// Bin width and window in grid steps.
fn sync_geometry(record: &SpikeRecord, bin_ms: f64, window_ms: Option<f64>) -> Result<(u32, u32)> {
    let bin = bin_ms / record.dt_ms;
    let bin_steps = bin.round();
    if !(bin_steps >= 1.0) || (bin - bin_steps).abs() > 1e-9 * bin {
        return Err(Error::invalid("bin_ms", format!("{bin_ms} ms is not a multiple of dt = {} ms", record.dt_ms)));
    }
    let full = record.duration_steps().saturating_sub(record.transient_steps());
    let window = match window_ms {
        Some(w) if w > 0.0 => ((w / record.dt_ms).round() as u32).min(full),
        Some(w) => return Err(Error::invalid("sync_window_ms", format!("{w} must be > 0"))),
        None => full,
    };
    Ok((bin_steps as u32, window))
}

fn fano_of(trains: &SpikeTrains, ids: &[u32], t0: u32, bin_steps: u32, window_steps: u32) -> Option<f64> {
    let n_bins = (window_steps / bin_steps) as usize;
    if n_bins == 0 {
        return None;
    }
    let end = t0 + n_bins as u32 * bin_steps;
    let mut counts = vec![0u64; n_bins];
    for &i in ids {
        for &s in trains.of(i) {
            if s > end {
                break;
            }
            counts[((s - t0 - 1) / bin_steps) as usize] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let mean = total as f64 / n_bins as f64;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n_bins as f64;
    Some(var / mean)
}

/// Mean rate in Hz of `ids` over the post-transient window.
pub fn mean_rate(record: &SpikeRecord, ids: &[u32]) -> f64 {
    rate_of(&SpikeTrains::new(record), ids, window_s(record))
}

/// Mean per-neuron CV over neurons with at least two post-transient spikes.
pub fn cv_isi(record: &SpikeRecord, ids: &[u32]) -> Option<f64> {
    cv_of(&SpikeTrains::new(record), ids, 2).0
}

/// Var/Mean of the pooled spike count of `ids` in bins of `bin_ms`, over
/// the full bins of the first `window_ms` after the transient (all of it
/// when `None`). `None` when no spike falls in the window.
pub fn synchrony(record: &SpikeRecord, ids: &[u32], bin_ms: f64, window_ms: Option<f64>) -> Result<Option<f64>> {
    let (bin, window) = sync_geometry(record, bin_ms, window_ms)?;
    Ok(fano_of(&SpikeTrains::new(record), ids, record.transient_steps(), bin, window))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsOptions {
    pub bin_ms: f64,
    /// Synchrony window after the transient; `None` uses the whole record.
    pub sync_window_ms: Option<f64>,
    /// Neurons with fewer post-transient spikes are left out of the CV.
    pub min_spikes_for_cv: usize,
    #[serde(default)]
    pub workers: usize,
}

impl Default for StatsOptions {
    fn default() -> Self {
        StatsOptions { bin_ms: DEFAULT_BIN_MS, sync_window_ms: None, min_spikes_for_cv: 2, workers: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub population: String,
    pub n_sampled: u64,
    pub n_spikes: u64,
    pub mean_rate_hz: f64,
    pub irregularity: Option<f64>,
    /// Neurons that contributed to the irregularity.
    pub n_cv_neurons: u64,
    pub synchrony: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub transient_ms: f64,
    pub bin_ms: f64,
    pub sync_window_ms: f64,
    pub min_spikes_for_cv: usize,
    pub sampling: SamplingPlan,
    pub populations: Vec<PopulationStats>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    population: &'a str,
    n_sampled: u64,
    n_spikes: u64,
    mean_rate_hz: f64,
    irregularity: Option<f64>,
    n_cv_neurons: u64,
    synchrony: Option<f64>,
    sampling: String,
    duration_ms: f64,
    transient_ms: f64,
    bin_ms: f64,
    sync_window_ms: f64,
}

impl StatsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("stats report: {e}")))
    }

    pub fn rates(&self) -> Vec<f64> {
        self.populations.iter().map(|p| p.mean_rate_hz).collect()
    }

    pub fn irregularities(&self) -> Vec<Option<f64>> {
        self.populations.iter().map(|p| p.irregularity).collect()
    }

    pub fn synchronies(&self) -> Vec<Option<f64>> {
        self.populations.iter().map(|p| p.synchrony).collect()
    }

    /// One header line and one row per population; absent values are empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.populations {
            w.serialize(CsvRow {
                population: &p.population,
                n_sampled: p.n_sampled,
                n_spikes: p.n_spikes,
                mean_rate_hz: p.mean_rate_hz,
                irregularity: p.irregularity,
                n_cv_neurons: p.n_cv_neurons,
                synchrony: p.synchrony,
                sampling: self.sampling.strategy.to_string(),
                duration_ms: self.duration_ms,
                transient_ms: self.transient_ms,
                bin_ms: self.bin_ms,
                sync_window_ms: self.sync_window_ms,
            })
            .expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}

/// Rate, irregularity and synchrony of every population under `plan`.
pub fn report(record: &SpikeRecord, plan: &SamplingPlan, options: &StatsOptions) -> Result<StatsReport> {
    if !(record.duration_ms > record.transient_ms) {
        return Err(Error::invalid("duration_ms", "must exceed transient_ms"));
    }
    let ids = resolve_sampling(plan, &record.population_ranges)?;
    let (bin, window) = sync_geometry(record, options.bin_ms, options.sync_window_ms)?;
    let trains = SpikeTrains::new(record);
    let win_s = window_s(record);
    let t0 = record.transient_steps();
    let exec = Executor::new(options.workers)?;
    let populations = exec.map(&(0..NUM_POPULATIONS).collect::<Vec<_>>(), |&p| {
        let ids = &ids[p];
        let (irregularity, n_cv) = cv_of(&trains, ids, options.min_spikes_for_cv);
        PopulationStats {
            population: POPULATION_LABELS[p].to_string(),
            n_sampled: ids.len() as u64,
            n_spikes: ids.iter().map(|&i| trains.of(i).len() as u64).sum(),
            mean_rate_hz: rate_of(&trains, ids, win_s),
            irregularity,
            n_cv_neurons: n_cv as u64,
            synchrony: fano_of(&trains, ids, t0, bin, window),
        }
    });
    Ok(StatsReport {
        dt_ms: record.dt_ms,
        duration_ms: record.duration_ms,
        transient_ms: record.transient_ms,
        bin_ms: options.bin_ms,
        sync_window_ms: window as f64 * record.dt_ms,
        min_spikes_for_cv: options.min_spikes_for_cv,
        sampling: *plan,
        populations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::population_ranges;

    const CANONICAL: [u64; 8] = [20683, 5834, 21915, 5479, 4850, 1065, 14395, 2948];

    fn record(sizes: [u64; 8], duration_ms: f64, transient_ms: f64) -> SpikeRecord {
        SpikeRecord::new(0.1, duration_ms, transient_ms, population_ranges(&sizes))
    }

    #[test]
    fn fraction_total_matches_table() {
        let plan = SamplingPlan::new(SamplingStrategy::FixedFractionTotal { n_total: 8000 }, 1);
        assert_eq!(plan.resolve_counts(&CANONICAL).unwrap(), [2144, 605, 2272, 568, 503, 110, 1492, 306]);
    }

    #[test]
    fn per_population_limits() {
        let plan = SamplingPlan::new(SamplingStrategy::FixedPerPopulation { n: 1000 }, 1);
        assert_eq!(plan.resolve_counts(&CANONICAL).unwrap(), [1000; 8]);
        let small = [2068, 583, 2191, 547, 485, 106, 1439, 294];
        match plan.resolve_counts(&small) {
            Err(Error::SampleTooLarge { population, .. }) => assert_eq!(population, "L2i"),
            other => panic!("{other:?}"),
        }
        let at_most = SamplingPlan::new(SamplingStrategy::AtMostPerPopulation { n: 1000 }, 1);
        assert_eq!(at_most.resolve_counts(&small).unwrap(), [1000, 583, 1000, 547, 485, 106, 1000, 294]);
        assert_eq!(SamplingPlan::all().resolve_counts(&small).unwrap(), small);
    }

    #[test]
    fn sampling_is_uniform_subset_and_seeded() {
        let ranges = population_ranges(&CANONICAL);
        let plan = SamplingPlan::new(SamplingStrategy::FixedFractionTotal { n_total: 8000 }, 9);
        let a = resolve_sampling(&plan, &ranges).unwrap();
        assert_eq!(a, resolve_sampling(&plan, &ranges).unwrap());
        let b = resolve_sampling(&SamplingPlan::new(plan.strategy, 10), &ranges).unwrap();
        assert_ne!(a, b);
        for p in 0..8 {
            assert!(a[p].windows(2).all(|w| w[0] < w[1]));
            assert!(a[p].iter().all(|i| ranges[p].contains(i)));
        }
    }

    #[test]
    fn strategy_parses() {
        for s in ["all", "total:8000", "per-pop:1000", "at-most:1000"] {
            assert_eq!(s.parse::<SamplingStrategy>().unwrap().to_string(), s);
        }
        assert!("some:1".parse::<SamplingStrategy>().is_err());
        assert!("total:x".parse::<SamplingStrategy>().is_err());
    }

    #[test]
    fn rate_of_single_neuron() {
        let mut r = record([1, 0, 0, 0, 0, 0, 0, 0], 60_000.0, 0.0);
        for k in 0..60 {
            r.push(k * 10_000 + 5, 0);
        }
        assert!((mean_rate(&r, &[0]) - 1.0).abs() < 1e-12);
        let empty = record([1, 0, 0, 0, 0, 0, 0, 0], 1000.0, 100.0);
        assert_eq!(mean_rate(&empty, &[0]), 0.0);
    }

    #[test]
    fn transient_spikes_excluded() {
        let mut r = record([1, 0, 0, 0, 0, 0, 0, 0], 1100.0, 100.0);
        r.push(1000, 0); // exactly at the transient boundary
        r.push(1001, 0);
        assert!((mean_rate(&r, &[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cv_examples() {
        assert_eq!(cv_of_train(&[0, 10, 20, 30]), Some(0.0));
        // ISIs {1, 3}
        assert!((cv_of_train(&[0, 1, 4]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(cv_of_train(&[5]), None);
        let r = record([2, 0, 0, 0, 0, 0, 0, 0], 1000.0, 0.0);
        assert_eq!(cv_isi(&r, &[0, 1]), None);
    }

    #[test]
    fn synchrony_of_locked_population() {
        // n neurons fire together every 100 ms: one bin in 100/3 carries n
        let n = 50u32;
        let mut r = record([n as u64, 0, 0, 0, 0, 0, 0, 0], 100_100.0, 100.0);
        for cycle in 0..1000u32 {
            for i in 0..n {
                r.push(1000 + cycle * 1000 + 15, i);
            }
        }
        let ids: Vec<u32> = (0..n).collect();
        let s = synchrony(&r, &ids, 3.0, None).unwrap().unwrap();
        // 33333 bins with 1000 nonzero
        let bins = 1_000_000f64 / 30.0;
        let nb = bins.floor();
        let mean = 1000.0 * n as f64 / nb;
        let var = (1000.0 * (n as f64).powi(2)) / nb - mean * mean;
        assert!((s - var / mean).abs() < 1e-9, "{s}");
        assert!((s - n as f64 * (1.0 - 3.0 / 100.0)).abs() < 0.01 * n as f64);
        assert_eq!(synchrony(&record([1, 0, 0, 0, 0, 0, 0, 0], 1000.0, 0.0), &[0], 3.0, None).unwrap(), None);
        assert!(synchrony(&r, &ids, 0.25, None).is_err());
    }

    #[test]
    fn report_json_and_csv() {
        let mut r = record([4, 4, 4, 4, 4, 4, 4, 4], 1100.0, 100.0);
        for s in (1010..11000).step_by(97) {
            r.push(s, s % 32);
        }
        let rep = report(&r, &SamplingPlan::all(), &StatsOptions::default()).unwrap();
        assert_eq!(rep.populations.len(), 8);
        assert_eq!(StatsReport::from_json(&rep.to_json()).unwrap(), rep);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.starts_with("population,n_sampled"));
        assert_eq!(rep.sync_window_ms, 1000.0);
    }
}
