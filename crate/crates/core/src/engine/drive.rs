//! External Poisson drive. The superposition of `I` independent trains at
//! rate `ν` is itself Poisson, so each step draws one count with mean
//! `I·ν·dt` per neuron.

use rand::Rng;

pub use crate::network::dc_drive_equivalent;

/// Largest count the inversion will return; the tail beyond it has
/// negligible mass for per-step means of a few events.
const MAX_COUNT: u32 = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonDrive {
    pub mean_count: f64,
    pub weight_pa: f64,
    /// `cdf[k] = P(count ≤ k)`, up to the first term that underflows.
    cdf: Vec<f64>,
}

impl PoissonDrive {
    pub fn new(indegree: u64, rate_hz: f64, weight_pa: f64, dt_ms: f64) -> Self {
        let mean_count = indegree as f64 * rate_hz * dt_ms * 1e-3;
        let mut p = (-mean_count).exp();
        let mut cdf = vec![p];
        let mut acc = p;
        let mut k = 0u32;
        while k < MAX_COUNT && p != 0.0 && acc < 1.0 {
            k += 1;
            p *= mean_count / k as f64;
            acc += p;
            cdf.push(acc);
        }
        PoissonDrive { mean_count, weight_pa, cdf }
    }

    pub fn silent() -> Self {
        PoissonDrive { mean_count: 0.0, weight_pa: 0.0, cdf: vec![1.0] }
    }

    /// Poisson count by inversion of the CDF at `u ∈ (0, 1)`.
    #[inline(always)]
    pub fn count(&self, u: f64) -> u32 {
        let mut k = 0;
        while k + 1 < self.cdf.len() && u > self.cdf[k] {
            k += 1;
        }
        k as u32
    }

    #[inline(always)]
    pub fn increment(&self, u: f64) -> f64 {
        self.weight_pa * self.count(u) as f64
    }
}

/// PSC amplitude added to `I_syn` in one step by `indegree` Poisson inputs.
pub fn poisson_drive<R: Rng + ?Sized>(indegree: u64, rate_hz: f64, weight_pa: f64, dt_ms: f64, rng: &mut R) -> f64 {
    let d = PoissonDrive::new(indegree, rate_hz, weight_pa, dt_ms);
    // (0, 1): avoid u = 0, which the inversion maps to 0 anyway
    let u = 1.0 - rng.random::<f64>();
    d.increment(u)
}
