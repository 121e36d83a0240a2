//! Clock-driven network simulation.
//!
//! Each step is bulk-synchronous. Every block of neurons first delivers the
//! spikes emitted in the previous step into its own delay ring buffer, then
//! advances its neurons and collects the ones that fired. Delays are at
//! least one step, so a block never needs spikes from the current step.
//! Blocks share nothing mutable, and all randomness is keyed by
//! `(seed, neuron, step)`, so the output does not depend on the number of
//! workers.

pub mod drive;
pub mod lif;
mod record;

use serde::{Deserialize, Serialize};

pub use drive::{dc_drive_equivalent, poisson_drive, PoissonDrive};
pub use lif::{init_membrane, LifPropagator, NeuronState};
pub use record::{SpikeRecord, SpikeSink};

use crate::config::{ExperimentSpec, NUM_POPULATIONS};
use crate::error::{Error, Result};
use crate::network::{ExternalDrive, NetworkInstance, TargetBlock};
use crate::parallel::Executor;
use crate::rng::{domain, unit_f64_from_u32, CounterRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub transient_ms: f64,
    pub seed: u64,
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
}

impl RunParams {
    pub fn from_experiment(ex: &ExperimentSpec) -> Self {
        RunParams {
            dt_ms: ex.dt_ms,
            duration_ms: ex.duration_ms,
            transient_ms: ex.transient_ms,
            seed: ex.seed,
            workers: 0,
        }
    }

    pub fn n_steps(&self) -> u32 {
        (self.duration_ms / self.dt_ms).round() as u32
    }

    fn validate(&self, net: &NetworkInstance) -> Result<()> {
        if !(self.dt_ms > 0.0) {
            return Err(Error::invalid("dt_ms", "must be > 0"));
        }
        if (self.dt_ms - net.dt_ms).abs() > 1e-12 * net.dt_ms {
            return Err(Error::invalid(
                "dt_ms",
                format!("run uses {} ms but the network was built for {} ms", self.dt_ms, net.dt_ms),
            ));
        }
        if !(self.transient_ms >= 0.0 && self.duration_ms > self.transient_ms) {
            return Err(Error::invalid("duration_ms", "must exceed transient_ms"));
        }
        if self.duration_ms / self.dt_ms >= u32::MAX as f64 {
            return Err(Error::invalid("duration_ms", "more than 2^32 steps"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Cell {
    v: f64,
    i_syn: f64,
    dc: f64,
    refr: u32,
    drive: u32,
    /// Uniforms for the current group of four steps.
    words: [u32; 4],
}

struct BlockState {
    index: usize,
    start: u32,
    cells: Vec<Cell>,
    /// `ring_len` slots of one accumulator per cell, slot-major.
    ring: Vec<f64>,
    fired: Vec<u32>,
}

struct Shared<'a> {
    blocks: &'a [TargetBlock],
    prop: LifPropagator,
    drives: [PoissonDrive; NUM_POPULATIONS],
    poisson: bool,
    rng: CounterRng,
    ring_len: usize,
}

impl BlockState {
    fn deliver(&mut self, sh: &Shared<'_>, step: u32, spikes: &[u32]) {
        if spikes.is_empty() {
            return;
        }
        let syn = &sh.blocks[self.index];
        // spikes were emitted during step - 1
        let base = (step as usize + sh.ring_len - 1) % sh.ring_len;
        let len = self.cells.len();
        for &src in spikes {
            for s in syn.of(src) {
                let mut slot = base + s.delay_steps as usize;
                if slot >= sh.ring_len {
                    slot -= sh.ring_len;
                }
                self.ring[slot * len + s.target as usize] += s.weight_pa as f64;
            }
        }
    }

    fn update(&mut self, sh: &Shared<'_>, step: u32) {
        self.fired.clear();
        let len = self.cells.len();
        let slot = step as usize % sh.ring_len;
        let row = &mut self.ring[slot * len..(slot + 1) * len];
        let phase = (step % 4) as usize;
        let group = (step / 4) as u64;
        for (i, (c, acc)) in self.cells.iter_mut().zip(row.iter_mut()).enumerate() {
            let gid = self.start + i as u32;
            let mut input = std::mem::take(acc);
            if sh.poisson {
                if phase == 0 {
                    c.words = sh.rng.block(domain::POISSON_DRIVE, gid, group);
                }
                input += sh.drives[c.drive as usize].increment(unit_f64_from_u32(c.words[phase]));
            }
            if sh.prop.advance(&mut c.v, &mut c.i_syn, &mut c.refr, c.dc, input) {
                self.fired.push(gid);
            }
        }
    }
}

/// Simulates `net` and returns the full spike record.
pub fn run(net: &NetworkInstance, params: &RunParams) -> Result<SpikeRecord> {
    let mut record = SpikeRecord::new(
        params.dt_ms,
        params.duration_ms,
        params.transient_ms,
        net.population_ranges.clone(),
    );
    run_into(net, params, &mut record)?;
    Ok(record)
}

/// Simulates `net`, streaming spikes into `sink` step by step.
pub fn run_into<S: SpikeSink + ?Sized>(net: &NetworkInstance, params: &RunParams, sink: &mut S) -> Result<()> {
    params.validate(net)?;
    let n = net.n_neurons();
    if n == 0 {
        return Ok(());
    }
    let prop = LifPropagator::new(&net.neuron, params.dt_ms)?;
    let poisson = net.external.iter().any(|d| matches!(d, ExternalDrive::Poisson { .. }));
    let drives = net.external.map(|d| match d {
        ExternalDrive::Poisson { indegree, rate_hz, weight_pa } => {
            PoissonDrive::new(indegree, rate_hz, weight_pa, params.dt_ms)
        }
        ExternalDrive::Dc { .. } => PoissonDrive::silent(),
    });
    let pop_index = net.population_index();
    let dc_of = |p: usize| {
        let ext = match net.external[p] {
            ExternalDrive::Dc { current_pa } => current_pa,
            ExternalDrive::Poisson { .. } => 0.0,
        };
        ext + net.dc_compensation_pa[p]
    };
    let dc_pop: [f64; NUM_POPULATIONS] = std::array::from_fn(dc_of);
    let v0 = init_membrane(&net.neuron, n, params.seed);
    let ring_len = net.synapses.max_delay() as usize + 1;

    let store_blocks = net.synapses.blocks();
    let mut blocks: Vec<BlockState> = store_blocks
        .iter()
        .enumerate()
        .map(|(index, sb)| {
            let range = sb.start as usize..(sb.start + sb.len) as usize;
            let len = range.len();
            let cells = range
                .map(|g| Cell {
                    v: v0[g],
                    i_syn: 0.0,
                    dc: dc_pop[pop_index[g] as usize],
                    refr: 0,
                    drive: pop_index[g] as u32,
                    words: [0; 4],
                })
                .collect();
            BlockState { index, start: sb.start, cells, ring: vec![0.0; ring_len * len], fired: Vec::new() }
        })
        .collect();

    let shared = Shared {
        blocks: store_blocks,
        prop,
        drives,
        poisson,
        rng: CounterRng::new(params.seed),
        ring_len,
    };
    let exec = Executor::new(params.workers)?;
    let mut spikes: Vec<u32> = Vec::new();
    for step in 0..params.n_steps() {
        let prev = &spikes;
        exec.for_each_mut(&mut blocks, |b| {
            b.deliver(&shared, step, prev);
            b.update(&shared, step);
        });
        spikes.clear();
        for b in &blocks {
            spikes.extend_from_slice(&b.fired);
        }
        if !spikes.is_empty() {
            sink.record(step + 1, &spikes)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::canonical_config;
    use crate::network::build;
    use crate::scale::apply_transform;

    #[test]
    fn tiny_network_is_deterministic_across_workers() {
        let (cfg, t) = apply_transform(&canonical_config(), "0.02".parse().unwrap()).unwrap();
        let net = build(&cfg, &t, 3).unwrap();
        let mut p = RunParams::from_experiment(&cfg.experiment);
        p.duration_ms = 300.0;
        p.workers = 1;
        let a = run(&net, &p).unwrap();
        p.workers = 3;
        let b = run(&net, &p).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn dt_mismatch_rejected() {
        let (cfg, t) = apply_transform(&canonical_config(), "0.01".parse().unwrap()).unwrap();
        let net = build(&cfg, &t, 3).unwrap();
        let mut p = RunParams::from_experiment(&cfg.experiment);
        p.dt_ms = 0.05;
        assert!(run(&net, &p).is_err());
        p.dt_ms = 0.1;
        p.duration_ms = 50.0;
        assert!(run(&net, &p).is_err());
    }
}
