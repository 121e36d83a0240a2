use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::config::NUM_POPULATIONS;
use crate::error::Result;

/// Receives the neurons that fired at grid step `step` (time `step·dt`).
/// Calls arrive with nondecreasing `step`; ids within a call are ascending.
pub trait SpikeSink {
    fn record(&mut self, step: u32, neurons: &[u32]) -> Result<()>;
}

/// In-memory spike record: `(step, neuron)` events in time order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    pub dt_ms: f64,
    pub duration_ms: f64,
    /// Events at or before this time are excluded from statistics.
    pub transient_ms: f64,
    pub population_ranges: [Range<u32>; NUM_POPULATIONS],
    pub steps: Vec<u32>,
    pub neurons: Vec<u32>,
}

impl SpikeRecord {
    pub fn new(
        dt_ms: f64,
        duration_ms: f64,
        transient_ms: f64,
        population_ranges: [Range<u32>; NUM_POPULATIONS],
    ) -> Self {
        SpikeRecord {
            dt_ms,
            duration_ms,
            transient_ms,
            population_ranges,
            steps: Vec::new(),
            neurons: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_neurons(&self) -> usize {
        self.population_ranges[NUM_POPULATIONS - 1].end as usize
    }

    pub fn time_ms(&self, event: usize) -> f64 {
        self.steps[event] as f64 * self.dt_ms
    }

    pub fn events(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.steps.iter().copied().zip(self.neurons.iter().copied())
    }

    /// Grid step of the end of the transient.
    pub fn transient_steps(&self) -> u32 {
        (self.transient_ms / self.dt_ms).round() as u32
    }

    pub fn duration_steps(&self) -> u32 {
        (self.duration_ms / self.dt_ms).round() as u32
    }

    pub fn push(&mut self, step: u32, neuron: u32) {
        debug_assert!(self.steps.last().is_none_or(|&s| s <= step));
        self.steps.push(step);
        self.neurons.push(neuron);
    }
}

impl SpikeSink for SpikeRecord {
    fn record(&mut self, step: u32, neurons: &[u32]) -> Result<()> {
        self.steps.extend(std::iter::repeat_n(step, neurons.len()));
        self.neurons.extend_from_slice(neurons);
        Ok(())
    }
}
