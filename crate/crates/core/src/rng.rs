//! Counter-based random numbers.
//!
//! Every random quantity in a simulation is a pure function of
//! `(seed, domain, stream, counter)` through the Philox4x32-10 block
//! function. Workers never share generator state, so results do not depend
//! on how neurons or population pairs are partitioned across threads.

use rand_core::RngCore;

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

/// Stream domains. Each consumer of randomness owns one so that streams
/// never collide.
pub mod domain {
    pub const CONNECTIVITY: u32 = 1;
    pub const POSITIONS: u32 = 2;
    pub const MEMBRANE_INIT: u32 = 3;
    pub const POISSON_DRIVE: u32 = 4;
    pub const SAMPLING: u32 = 5;
}

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline(always)]
pub fn philox4x32(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

#[inline]
fn seed_key(seed: u64) -> [u32; 2] {
    [seed as u32, (seed >> 32) as u32]
}

/// Open-interval uniform in (0, 1) from 32 bits.
#[inline(always)]
pub fn unit_f64_from_u32(x: u32) -> f64 {
    (x as f64 + 0.5) * (1.0 / 4_294_967_296.0)
}

/// Uniform in [0, 1) with 53 bits of resolution.
#[inline(always)]
pub fn unit_f64_from_u64(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Stateless keyed generator: `block(domain, stream, counter)` is a pure
/// function of its arguments and the seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { key: seed_key(seed) }
    }

    #[inline(always)]
    pub fn block(&self, domain: u32, stream: u32, counter: u64) -> [u32; 4] {
        philox4x32([counter as u32, (counter >> 32) as u32, stream, domain], self.key)
    }

    /// One standard normal deviate (Box–Muller on a single block).
    pub fn standard_normal(&self, domain: u32, stream: u32, counter: u64) -> f64 {
        let b = self.block(domain, stream, counter);
        let u1 = 1.0 - unit_f64_from_u64(((b[0] as u64) << 32) | b[1] as u64);
        let u2 = unit_f64_from_u64(((b[2] as u64) << 32) | b[3] as u64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// A sequential generator over `(domain, stream)` starting at counter 0.
    pub fn stream(&self, domain: u32, stream: u32) -> PhiloxStream {
        PhiloxStream {
            key: self.key,
            domain,
            stream,
            counter: 0,
            buf: [0; 4],
            idx: 4,
        }
    }
}

/// Sequential view of one keyed stream, for use with `rand` distributions.
#[derive(Clone, Debug)]
pub struct PhiloxStream {
    key: [u32; 2],
    domain: u32,
    stream: u32,
    counter: u64,
    buf: [u32; 4],
    idx: usize,
}

impl RngCore for PhiloxStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.idx == 4 {
            self.buf = philox4x32(
                [self.counter as u32, (self.counter >> 32) as u32, self.stream, self.domain],
                self.key,
            );
            self.counter += 1;
            self.idx = 0;
        }
        let v = self.buf[self.idx];
        self.idx += 1;
        v
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let w = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}
