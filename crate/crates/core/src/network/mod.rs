//! Network instantiation: neuron ids, positions, synapses and external drive.
//!
//! Connectivity follows the fixed-total-number scheme. For every population
//! pair the exact synapse total `C` is realized by drawing `C` (source,
//! target) pairs uniformly with replacement, so multapses and autapses occur.

mod dump;
mod store;

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use dump::{read_adjacency_dump, write_adjacency_dump, AdjacencyDump};
pub use store::{block_count, block_of, LocalSynapse, Synapse, SynapseStore, TargetBlock, BLOCK_SIZE};

use crate::config::{is_excitatory, ConnectionSpec, ModelConfig, NeuronModelSpec, NUM_POPULATIONS};
use crate::error::{Error, Result};
use crate::rng::{domain, CounterRng};
use crate::scale::{PairCounts, ScaleTransform};
use store::StoreBuilder;

/// Exact number of synapses that gives connection probability `p` between
/// populations of `n_pre` and `n_post` neurons when pairs are drawn with
/// replacement: `ln(1−p) / ln(1 − 1/(n_pre·n_post))`, rounded to nearest.
pub fn exact_synapse_count(p: f64, n_pre: u64, n_post: u64) -> Result<u64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    if n_pre == 0 || n_post == 0 {
        return Err(Error::invalid("population size", "must be >= 1"));
    }
    if p == 0.0 {
        return Ok(0);
    }
    let pairs = n_pre as f64 * n_post as f64;
    let c = (-p).ln_1p() / (-1.0 / pairs).ln_1p();
    Ok(c.round() as u64)
}

/// Synapse totals of the full-scale model, indexed `[post][pre]`.
pub fn full_scale_pair_counts(config: &ModelConfig) -> Result<PairCounts> {
    let sizes = config.sizes();
    let rules = config.rule_matrix();
    let mut out = [[0u64; NUM_POPULATIONS]; NUM_POPULATIONS];
    for post in 0..NUM_POPULATIONS {
        for pre in 0..NUM_POPULATIONS {
            out[post][pre] = exact_synapse_count(rules[post][pre].probability, sizes[pre], sizes[post])?;
        }
    }
    Ok(out)
}

/// `count` (source, target) pairs drawn uniformly and independently with
/// replacement.
pub fn draw_synapses<R: Rng + ?Sized>(
    count: u64,
    pre: Range<u32>,
    post: Range<u32>,
    rng: &mut R,
) -> Result<Vec<(u32, u32)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if pre.is_empty() || post.is_empty() {
        return Err(Error::EmptyPopulation { count });
    }
    Ok((0..count)
        .map(|_| (rng.random_range(pre.clone()), rng.random_range(post.clone())))
        .collect())
}

/// Normal weight and delay for one synapse of `rule`. The weight is clipped
/// at zero so it keeps the sign of its source; the delay is clipped below at
/// one step and rounded to the grid.
pub fn draw_weight_delay<R: Rng + ?Sized>(rule: &ConnectionSpec, dt_ms: f64, rng: &mut R) -> (f64, u16) {
    let wm = rule.weight_mean_pa;
    let w = if rule.weight_rel_sd > 0.0 {
        Normal::new(wm, rule.weight_rel_sd * wm.abs())
            .expect("finite sd")
            .sample(rng)
    } else {
        wm
    };
    let w = if wm >= 0.0 { w.max(0.0) } else { w.min(0.0) };

    let dm = rule.delay_mean_ms;
    let d = if rule.delay_rel_sd > 0.0 {
        Normal::new(dm, rule.delay_rel_sd * dm).expect("finite sd").sample(rng)
    } else {
        dm
    };
    let steps = (d.max(dt_ms) / dt_ms).round().clamp(1.0, u16::MAX as f64) as u16;
    (w, steps)
}

/// Cell positions `(x, depth, z)` in µm: area-uniform in the disc of the
/// column and uniform within the population's depth band. Positions play no
/// part in connectivity.
pub fn place_neurons(config: &ModelConfig, seed: u64) -> Vec<[f32; 3]> {
    let radius = config.geometry.diameter_um / 2.0;
    let rng = CounterRng::new(seed);
    let mut out = Vec::with_capacity(config.total_neurons() as usize);
    for (i, p) in config.populations.iter().enumerate() {
        let mut s = rng.stream(domain::POSITIONS, i as u32);
        let [lo, hi] = p.depth_range_um;
        for _ in 0..p.size {
            let r = radius * s.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * s.random::<f64>();
            let depth = lo + (hi - lo) * s.random::<f64>();
            out.push([
                (r * theta.cos()) as f32,
                (depth as f32).min(hi as f32),
                (r * theta.sin()) as f32,
            ]);
        }
    }
    out
}

/// Constant current carrying the same mean as `indegree` Poisson inputs at
/// `rate_hz` with PSC amplitude `weight_pa`.
pub fn dc_drive_equivalent(indegree: u64, rate_hz: f64, weight_pa: f64, tau_syn_ms: f64) -> f64 {
    indegree as f64 * rate_hz * weight_pa * tau_syn_ms * 1e-3
}

/// External drive of every neuron in one population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExternalDrive {
    Poisson { indegree: u64, rate_hz: f64, weight_pa: f64 },
    Dc { current_pa: f64 },
}

#[derive(Clone, Debug)]
pub struct NetworkInstance {
    pub population_ranges: [Range<u32>; NUM_POPULATIONS],
    pub positions: Vec<[f32; 3]>,
    pub synapses: SynapseStore,
    pub external: [ExternalDrive; NUM_POPULATIONS],
    pub dc_compensation_pa: [f64; NUM_POPULATIONS],
    pub neuron: NeuronModelSpec,
    pub dt_ms: f64,
    /// Realized synapse totals, `[post][pre]`.
    pub pair_counts: PairCounts,
}

impl NetworkInstance {
    pub fn n_neurons(&self) -> usize {
        self.population_ranges[NUM_POPULATIONS - 1].end as usize
    }

    pub fn sizes(&self) -> [u64; NUM_POPULATIONS] {
        self.population_ranges.clone().map(|r| r.len() as u64)
    }

    pub fn population_of(&self, neuron: u32) -> usize {
        self.population_ranges
            .iter()
            .position(|r| r.contains(&neuron))
            .expect("neuron id in range")
    }

    pub fn external_drive(&self, neuron: u32) -> ExternalDrive {
        self.external[self.population_of(neuron)]
    }

    pub fn dc_compensation(&self, neuron: u32) -> f64 {
        self.dc_compensation_pa[self.population_of(neuron)]
    }

    /// Per-neuron population index, in id order.
    pub fn population_index(&self) -> Vec<u8> {
        self.population_ranges
            .iter()
            .enumerate()
            .flat_map(|(p, r)| std::iter::repeat_n(p as u8, r.len()))
            .collect()
    }
}

pub fn population_ranges(sizes: &[u64; NUM_POPULATIONS]) -> [Range<u32>; NUM_POPULATIONS] {
    let mut start = 0u32;
    std::array::from_fn(|i| {
        let r = start..start + sizes[i] as u32;
        start = r.end;
        r
    })
}

fn pair_stream(post: usize, pre: usize) -> u32 {
    (post * NUM_POPULATIONS + pre) as u32 * 2
}

/// Materializes the network described by the (already rescaled) `config`
/// and `transform`. Identical arguments give an identical instance.
pub fn build(config: &ModelConfig, transform: &ScaleTransform, seed: u64) -> Result<NetworkInstance> {
    config.validate()?;
    let sizes = config.sizes();
    if sizes != transform.scaled_sizes {
        return Err(Error::invalid(
            "transform",
            "population sizes of config and transform disagree; pass the config returned by apply_transform",
        ));
    }
    let total: u64 = sizes.iter().sum();
    if total >= u32::MAX as u64 {
        return Err(Error::invalid("populations", "more than 2^32 neurons"));
    }
    let ranges = population_ranges(&sizes);
    let n = total as usize;
    let dt = config.experiment.dt_ms;
    let rules = config.rule_matrix();
    let rng = CounterRng::new(seed);

    let pairs: Vec<(usize, usize)> = (0..NUM_POPULATIONS)
        .flat_map(|post| (0..NUM_POPULATIONS).map(move |pre| (post, pre)))
        .filter(|&(post, pre)| transform.scaled_pair_synapses[post][pre] > 0)
        .collect();

    // Pass 1 draws only the endpoints and counts; pass 2 redraws the same
    // endpoint streams together with weights and delays and places them.
    let mut builder = StoreBuilder::new(n);
    for &(post, pre) in &pairs {
        let mut s = rng.stream(domain::CONNECTIVITY, pair_stream(post, pre));
        let c = transform.scaled_pair_synapses[post][pre];
        for (src, tgt) in draw_synapses(c, ranges[pre].clone(), ranges[post].clone(), &mut s)? {
            builder.count(src, tgt);
        }
    }
    builder.finish_counting();
    let mut realized = [[0u64; NUM_POPULATIONS]; NUM_POPULATIONS];
    for &(post, pre) in &pairs {
        let mut s = rng.stream(domain::CONNECTIVITY, pair_stream(post, pre));
        let mut wd = rng.stream(domain::CONNECTIVITY, pair_stream(post, pre) + 1);
        let c = transform.scaled_pair_synapses[post][pre];
        let rule = rules[post][pre];
        for (src, tgt) in draw_synapses(c, ranges[pre].clone(), ranges[post].clone(), &mut s)? {
            let (w, d) = draw_weight_delay(rule, dt, &mut wd);
            builder.place(src, tgt, w as f32, d);
            realized[post][pre] += 1;
        }
    }
    let synapses = builder.finish();

    let mode = config.external.mode;
    let ext_in = config.ext_indegrees();
    let external = std::array::from_fn(|i| {
        let (rate, w) = (config.external.rate_per_input_hz, config.external.weight_pa);
        if mode.is_poisson() {
            ExternalDrive::Poisson { indegree: ext_in[i], rate_hz: rate, weight_pa: w }
        } else {
            ExternalDrive::Dc {
                current_pa: dc_drive_equivalent(ext_in[i], rate, w, config.neuron.tau_syn_ms),
            }
        }
    });
    debug_assert!(pairs.iter().all(|&(post, pre)| is_excitatory(pre) == (rules[post][pre].weight_mean_pa > 0.0)));

    Ok(NetworkInstance {
        population_ranges: ranges,
        positions: place_neurons(config, seed),
        synapses,
        external,
        dc_compensation_pa: transform.dc_compensation_pa,
        neuron: config.neuron.clone(),
        dt_ms: dt,
        pair_counts: realized,
    })
}
