//! Current-based leaky integrate-and-fire neuron with one exponentially
//! decaying synaptic current, integrated exactly on a fixed grid.
//!
//! ```text
//! τ_m dV/dt = −(V − V_rest) + R (I_syn + I_dc),   R = τ_m / C_m
//! τ_syn dI_syn/dt = −I_syn
//! ```
//!
//! The system is linear between spikes, so one step of length `h` is a
//! matrix exponential applied to `(V − V_rest, I_syn)` plus the constant
//! drive; the coefficients are computed once.

use crate::config::NeuronModelSpec;
use crate::error::{Error, Result};
use crate::rng::{domain, CounterRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronState {
    pub v_mv: f64,
    pub i_syn_pa: f64,
    pub refractory_steps: u32,
    /// Constant external current: DC drive plus compensation.
    pub dc_pa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifPropagator {
    /// I_syn decay over one step.
    pub p11: f64,
    /// V response to I_syn over one step.
    pub p21: f64,
    /// V decay over one step.
    pub p22: f64,
    /// V response to constant current over one step.
    pub p20: f64,
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_theta: f64,
    pub ref_steps: u32,
}

impl LifPropagator {
    pub fn new(model: &NeuronModelSpec, dt_ms: f64) -> Result<Self> {
        let (tm, ts, c) = (model.tau_m_ms, model.tau_syn_ms, model.c_m_pf);
        if tm == ts {
            return Err(Error::DegenerateTimeConstants(tm));
        }
        if !(dt_ms > 0.0) {
            return Err(Error::invalid("dt_ms", "must be > 0"));
        }
        let em = (-dt_ms / tm).exp();
        let es = (-dt_ms / ts).exp();
        Ok(LifPropagator {
            p11: es,
            p21: tm * ts / (c * (ts - tm)) * (es - em),
            p22: em,
            p20: -tm / c * (-dt_ms / tm).exp_m1(),
            v_rest: model.v_rest_mv,
            v_reset: model.v_reset_mv,
            v_theta: model.v_theta_mv,
            ref_steps: (model.t_ref_ms / dt_ms).round() as u32,
        })
    }

    /// Advances one neuron by one step. `input_pa` is the PSC amplitude
    /// arriving in this step; it enters `I_syn` at the end of the step and
    /// acts on `V` from the next step on. Returns true on a spike.
    #[inline(always)]
    pub fn advance(&self, v: &mut f64, i_syn: &mut f64, refr: &mut u32, dc: f64, input_pa: f64) -> bool {
        if *refr == 0 {
            *v = self.v_rest + self.p22 * (*v - self.v_rest) + self.p21 * *i_syn + self.p20 * dc;
        } else {
            *refr -= 1;
        }
        *i_syn = self.p11 * *i_syn + input_pa;
        if *v >= self.v_theta {
            *v = self.v_reset;
            *refr = self.ref_steps;
            true
        } else {
            false
        }
    }

    pub fn step(&self, state: &mut NeuronState, input_pa: f64) -> bool {
        self.advance(
            &mut state.v_mv,
            &mut state.i_syn_pa,
            &mut state.refractory_steps,
            state.dc_pa,
            input_pa,
        )
    }

    /// Membrane resistance τ_m/C_m in mV/pA.
    pub fn resistance(model: &NeuronModelSpec) -> f64 {
        model.tau_m_ms / model.c_m_pf
    }
}

/// Gaussian initial potentials, one per neuron id; unclipped.
pub fn init_membrane(model: &NeuronModelSpec, n: usize, seed: u64) -> Vec<f64> {
    let rng = CounterRng::new(seed);
    (0..n)
        .map(|i| model.v_init_mean_mv + model.v_init_sd_mv * rng.standard_normal(domain::MEMBRANE_INIT, i as u32, 0))
        .collect()
}
