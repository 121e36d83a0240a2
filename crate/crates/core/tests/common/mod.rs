//! Reference integrators shared by the engine oracle suites.

use microcircuit::config::{canonical_config, NeuronModelSpec};

pub const DT: f64 = 0.1;

pub fn model() -> NeuronModelSpec {
    canonical_config().neuron
}

pub fn subthreshold_model() -> NeuronModelSpec {
    let mut m = model();
    m.v_theta_mv = 1e9;
    m
}

pub fn closed_form_period(m: &NeuronModelSpec, i_pa: f64) -> f64 {
    let ri = m.tau_m_ms / m.c_m_pf * i_pa;
    m.t_ref_ms + m.tau_m_ms * ((ri + m.v_rest_mv - m.v_reset_mv) / (ri + m.v_rest_mv - m.v_theta_mv)).ln()
}

/// RK4 on the (V, I_syn) system for `n_dt` steps of `DT`, `substeps` each.
/// Returns V at the end of every step.
pub fn rk4(m: &NeuronModelSpec, v0: f64, i0: f64, dc: f64, n_dt: usize, substeps: usize) -> Vec<f64> {
    let f = |v: f64, i: f64| {
        (
            (-(v - m.v_rest_mv) + m.tau_m_ms / m.c_m_pf * (i + dc)) / m.tau_m_ms,
            -i / m.tau_syn_ms,
        )
    };
    let h = DT / substeps as f64;
    let (mut v, mut i) = (v0, i0);
    let mut out = Vec::with_capacity(n_dt);
    for _ in 0..n_dt {
        for _ in 0..substeps {
            let (a1, b1) = f(v, i);
            let (a2, b2) = f(v + 0.5 * h * a1, i + 0.5 * h * b1);
            let (a3, b3) = f(v + 0.5 * h * a2, i + 0.5 * h * b2);
            let (a4, b4) = f(v + h * a3, i + h * b3);
            v += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            i += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        out.push(v);
    }
    out
}
