//! Synapse storage partitioned by target block.
//!
//! Neurons are grouped into fixed blocks of [`BLOCK_SIZE`] consecutive ids.
//! Each block keeps a CSR index over *source* neurons listing only the
//! synapses that land inside the block, so one worker can deliver every
//! spike into its block without touching another block's buffers. The block
//! size does not depend on the worker count, which keeps the order of
//! floating-point accumulation per target fixed.
//!
//! Per synapse: one packed 8-byte record, so delivering a spike into a
//! block reads a single contiguous run of memory.

use std::ops::Range;

pub const BLOCK_SIZE: usize = 512;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TargetBlock {
    /// First global neuron id of the block.
    pub start: u32,
    pub len: u32,
    /// `offsets[s]..offsets[s + 1]` indexes the synapses of source `s`.
    pub offsets: Vec<u32>,
    pub synapses: Vec<LocalSynapse>,
}

/// A synapse stored in its target's block.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[repr(C)]
pub struct LocalSynapse {
    pub weight_pa: f32,
    /// Target id relative to the block start.
    pub target: u16,
    pub delay_steps: u16,
}

impl TargetBlock {
    #[inline]
    pub fn range_of(&self, source: u32) -> Range<usize> {
        self.offsets[source as usize] as usize..self.offsets[source as usize + 1] as usize
    }

    #[inline]
    pub fn of(&self, source: u32) -> &[LocalSynapse] {
        &self.synapses[self.range_of(source)]
    }

    pub fn len_synapses(&self) -> usize {
        self.synapses.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynapseStore {
    n_neurons: usize,
    blocks: Vec<TargetBlock>,
    max_delay: u16,
}

/// One synapse as seen from its source.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Synapse {
    pub target: u32,
    pub weight_pa: f32,
    pub delay_steps: u16,
}

pub fn block_count(n_neurons: usize) -> usize {
    n_neurons.div_ceil(BLOCK_SIZE)
}

#[inline]
pub fn block_of(neuron: u32) -> usize {
    neuron as usize / BLOCK_SIZE
}

impl SynapseStore {
    /// Store holding exactly `edges`, as `(source, target, weight_pa, delay_steps)`.
    /// Delays must be at least one step.
    pub fn from_edges(n_neurons: usize, edges: &[(u32, u32, f32, u16)]) -> crate::Result<Self> {
        for &(s, t, _, d) in edges {
            if s as usize >= n_neurons || t as usize >= n_neurons {
                return Err(crate::Error::invalid("edges", format!("{s} -> {t} outside {n_neurons} neurons")));
            }
            if d == 0 {
                return Err(crate::Error::invalid("edges", "delays must be at least one step"));
            }
        }
        let mut b = StoreBuilder::new(n_neurons);
        for &(s, t, _, _) in edges {
            b.count(s, t);
        }
        b.finish_counting();
        for &(s, t, w, d) in edges {
            b.place(s, t, w, d);
        }
        Ok(b.finish())
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn blocks(&self) -> &[TargetBlock] {
        &self.blocks
    }

    pub fn max_delay(&self) -> u16 {
        self.max_delay
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len_synapses()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Outgoing synapses of `source`, in block order.
    pub fn outgoing(&self, source: u32) -> impl Iterator<Item = Synapse> + '_ {
        self.blocks.iter().flat_map(move |b| {
            b.of(source).iter().map(move |s| Synapse {
                target: b.start + s.target as u32,
                weight_pa: s.weight_pa,
                delay_steps: s.delay_steps,
            })
        })
    }

    /// Heap bytes held by the store, offsets included.
    pub fn heap_bytes(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.offsets.capacity() * 4 + b.synapses.capacity() * std::mem::size_of::<LocalSynapse>())
            .sum()
    }
}

/// Two-pass construction: count every synapse into its (block, source)
/// bucket, then place them. Within a bucket synapses keep insertion order.
pub(crate) struct StoreBuilder {
    n_neurons: usize,
    counts: Vec<Vec<u32>>,
    cursors: Vec<Vec<u32>>,
    blocks: Vec<TargetBlock>,
    max_delay: u16,
}

impl StoreBuilder {
    pub(crate) fn new(n_neurons: usize) -> Self {
        let nb = block_count(n_neurons);
        StoreBuilder {
            n_neurons,
            counts: vec![vec![0; n_neurons + 1]; nb],
            cursors: Vec::new(),
            blocks: Vec::new(),
            max_delay: 0,
        }
    }

    #[inline]
    pub(crate) fn count(&mut self, source: u32, target: u32) {
        self.counts[block_of(target)][source as usize] += 1;
    }

    pub(crate) fn finish_counting(&mut self) {
        let counts = std::mem::take(&mut self.counts);
        for (b, mut c) in counts.into_iter().enumerate() {
            // exclusive prefix sum, in place
            let mut acc = 0u32;
            for x in c.iter_mut() {
                let n = *x;
                *x = acc;
                acc = acc.checked_add(n).expect("fewer than 2^32 synapses per block");
            }
            let total = acc as usize;
            let start = (b * BLOCK_SIZE) as u32;
            let len = BLOCK_SIZE.min(self.n_neurons - b * BLOCK_SIZE) as u32;
            self.cursors.push(c.clone());
            self.blocks.push(TargetBlock {
                start,
                len,
                offsets: c,
                synapses: vec![LocalSynapse::default(); total],
            });
        }
    }

    #[inline]
    pub(crate) fn place(&mut self, source: u32, target: u32, weight_pa: f32, delay_steps: u16) {
        let b = block_of(target);
        let cur = &mut self.cursors[b][source as usize];
        let i = *cur as usize;
        *cur += 1;
        let block = &mut self.blocks[b];
        block.synapses[i] = LocalSynapse {
            weight_pa,
            target: (target - block.start) as u16,
            delay_steps,
        };
        self.max_delay = self.max_delay.max(delay_steps);
    }

    pub(crate) fn finish(self) -> SynapseStore {
        debug_assert!(self
            .blocks
            .iter()
            .zip(&self.cursors)
            .all(|(b, c)| (0..self.n_neurons).all(|s| c[s] == b.offsets[s + 1])));
        SynapseStore {
            n_neurons: self.n_neurons,
            blocks: self.blocks,
            max_delay: self.max_delay,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_places_in_buckets() {
        let n = BLOCK_SIZE + 10;
        let syns = [(0u32, 3u32, 1.0f32, 1u16), (5, (BLOCK_SIZE + 2) as u32, -2.0, 4), (0, 7, 0.5, 2)];
        let mut b = StoreBuilder::new(n);
        for &(s, t, _, _) in &syns {
            b.count(s, t);
        }
        b.finish_counting();
        for &(s, t, w, d) in &syns {
            b.place(s, t, w, d);
        }
        let store = b.finish();
        assert_eq!(store.len(), 3);
        assert_eq!(store.max_delay(), 4);
        let out0: Vec<_> = store.outgoing(0).collect();
        assert_eq!(
            out0,
            vec![
                Synapse { target: 3, weight_pa: 1.0, delay_steps: 1 },
                Synapse { target: 7, weight_pa: 0.5, delay_steps: 2 }
            ]
        );
        let out5: Vec<_> = store.outgoing(5).collect();
        assert_eq!(out5[0].target, (BLOCK_SIZE + 2) as u32);
        assert_eq!(store.outgoing(1).count(), 0);
        assert_eq!(store.blocks()[1].len, 10);
        assert_eq!(std::mem::size_of::<LocalSynapse>(), 8);
    }
}
