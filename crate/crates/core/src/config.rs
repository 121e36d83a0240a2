//! Model parameterization: populations, connection rules, external drive,
//! neuron model, geometry and experiment defaults.
//!
//! The on-disk format is JSON. Every physical quantity carries its unit in
//! the field name (`_ms`, `_pa`, `_hz`, `_um`, ...). Connection rules are
//! listed explicitly, one per (pre, post) pair of the 8×8 grid.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_POPULATIONS: usize = 8;

/// Population labels in canonical order: excitatory then inhibitory for
/// layers 2/3, 4, 5 and 6.
pub const POPULATION_LABELS: [&str; NUM_POPULATIONS] =
    ["L2e", "L2i", "L4e", "L4i", "L5e", "L5i", "L6e", "L6i"];

/// Total neuron count of the full-scale model.
pub const FULL_SCALE_TOTAL: u64 = 77_169;

const CANONICAL_JSON: &str = include_str!("../data/microcircuit.json");

pub fn is_excitatory(population: usize) -> bool {
    population.is_multiple_of(2)
}

pub fn population_index(label: &str) -> Option<usize> {
    POPULATION_LABELS.iter().position(|l| *l == label)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub name: String,
    pub size: u64,
    pub ext_indegree_balanced: u64,
    pub ext_indegree_unbalanced: u64,
    /// Full-scale mean rate, used as `f_j` by DC compensation.
    pub full_scale_rate_hz: f64,
    pub depth_range_um: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    pub pre: String,
    pub post: String,
    pub probability: f64,
    /// PSC amplitude; negative for inhibitory sources.
    pub weight_mean_pa: f64,
    pub weight_rel_sd: f64,
    pub delay_mean_ms: f64,
    pub delay_rel_sd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    PoissonBalanced,
    DcBalanced,
    PoissonUnbalanced,
}

impl InputMode {
    pub const ALL: [InputMode; 3] = [
        InputMode::PoissonBalanced,
        InputMode::DcBalanced,
        InputMode::PoissonUnbalanced,
    ];

    pub fn is_poisson(self) -> bool {
        !matches!(self, InputMode::DcBalanced)
    }

    pub fn is_balanced(self) -> bool {
        !matches!(self, InputMode::PoissonUnbalanced)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputMode::PoissonBalanced => "poisson-balanced",
            InputMode::DcBalanced => "dc-balanced",
            InputMode::PoissonUnbalanced => "poisson-unbalanced",
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "poisson-balanced" => Ok(InputMode::PoissonBalanced),
            "dc-balanced" => Ok(InputMode::DcBalanced),
            "poisson-unbalanced" => Ok(InputMode::PoissonUnbalanced),
            other => Err(Error::invalid("input mode", format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalInputSpec {
    pub mode: InputMode,
    pub rate_per_input_hz: f64,
    pub weight_pa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronModelSpec {
    pub tau_m_ms: f64,
    pub tau_syn_ms: f64,
    pub c_m_pf: f64,
    pub v_rest_mv: f64,
    pub v_reset_mv: f64,
    pub v_theta_mv: f64,
    pub t_ref_ms: f64,
    pub v_init_mean_mv: f64,
    pub v_init_sd_mv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub depth_um: f64,
    pub diameter_um: f64,
}

/// Run-level settings; every field is optional in the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub dt_ms: f64,
    pub duration_ms: f64,
    pub transient_ms: f64,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            dt_ms: 0.1,
            duration_ms: 60_000.0,
            transient_ms: 100.0,
            seed: 55,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub format_version: u32,
    #[serde(default)]
    pub provenance: String,
    pub populations: Vec<PopulationSpec>,
    pub connections: Vec<ConnectionSpec>,
    pub external: ExternalInputSpec,
    pub neuron: NeuronModelSpec,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub experiment: ExperimentSpec,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sizes(&self) -> [u64; NUM_POPULATIONS] {
        std::array::from_fn(|i| self.populations[i].size)
    }

    pub fn total_neurons(&self) -> u64 {
        self.populations.iter().map(|p| p.size).sum()
    }

    /// External in-degrees for the configured input mode. DC mode uses the
    /// balanced in-degrees to size its equivalent current.
    pub fn ext_indegrees(&self) -> [u64; NUM_POPULATIONS] {
        std::array::from_fn(|i| {
            let p = &self.populations[i];
            if self.external.mode.is_balanced() {
                p.ext_indegree_balanced
            } else {
                p.ext_indegree_unbalanced
            }
        })
    }

    pub fn full_scale_rates(&self) -> [f64; NUM_POPULATIONS] {
        std::array::from_fn(|i| self.populations[i].full_scale_rate_hz)
    }

    /// Rule for the (post, pre) pair. Total over the grid after validation.
    pub fn rule(&self, post: usize, pre: usize) -> &ConnectionSpec {
        let post_name = POPULATION_LABELS[post];
        let pre_name = POPULATION_LABELS[pre];
        self.connections
            .iter()
            .find(|c| c.post == post_name && c.pre == pre_name)
            .expect("validated config has a rule for every pair")
    }

    /// Rules as a dense `[post][pre]` matrix.
    pub fn rule_matrix(&self) -> [[&ConnectionSpec; NUM_POPULATIONS]; NUM_POPULATIONS] {
        std::array::from_fn(|post| std::array::from_fn(|pre| self.rule(post, pre)))
    }

    pub fn with_mode(mut self, mode: InputMode) -> Self {
        self.external.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.populations.len() != NUM_POPULATIONS {
            return Err(Error::invalid(
                "populations",
                format!("population count != 8 (found {})", self.populations.len()),
            ));
        }
        for (i, p) in self.populations.iter().enumerate() {
            let field = |f: &str| format!("populations[{i}].{f}");
            if p.name != POPULATION_LABELS[i] {
                return Err(Error::invalid(
                    field("name"),
                    format!("expected {} at position {i}, found {:?}", POPULATION_LABELS[i], p.name),
                ));
            }
            if p.size == 0 {
                return Err(Error::invalid(field("size"), "must be > 0"));
            }
            if p.ext_indegree_balanced == 0 || p.ext_indegree_unbalanced == 0 {
                return Err(Error::invalid(field("ext_indegree"), "must be > 0"));
            }
            if !(p.full_scale_rate_hz.is_finite() && p.full_scale_rate_hz >= 0.0) {
                return Err(Error::invalid(field("full_scale_rate_hz"), "must be finite and >= 0"));
            }
            let [lo, hi] = p.depth_range_um;
            if !(lo >= 0.0 && lo < hi && hi <= self.geometry.depth_um) {
                return Err(Error::invalid(
                    field("depth_range_um"),
                    format!("[{lo}, {hi}] not an ordered range inside [0, {}]", self.geometry.depth_um),
                ));
            }
        }
        // E and I of one layer share a band; bands of successive layers are
        // disjoint and ordered.
        for layer in 0..NUM_POPULATIONS / 2 {
            let e = &self.populations[2 * layer];
            let i = &self.populations[2 * layer + 1];
            if e.depth_range_um != i.depth_range_um {
                return Err(Error::invalid(
                    format!("populations[{}].depth_range_um", 2 * layer + 1),
                    "excitatory and inhibitory populations of a layer must share a depth band",
                ));
            }
            if layer > 0 {
                let prev = &self.populations[2 * layer - 2];
                if e.depth_range_um[0] < prev.depth_range_um[1] {
                    return Err(Error::invalid(
                        format!("populations[{}].depth_range_um", 2 * layer),
                        "layer depth bands overlap or are out of order",
                    ));
                }
            }
        }

        let mut seen = [[false; NUM_POPULATIONS]; NUM_POPULATIONS];
        for (n, c) in self.connections.iter().enumerate() {
            let field = |f: &str| format!("connections[{n}].{f}");
            let pre = population_index(&c.pre)
                .ok_or_else(|| Error::invalid(field("pre"), format!("unknown population {:?}", c.pre)))?;
            let post = population_index(&c.post)
                .ok_or_else(|| Error::invalid(field("post"), format!("unknown population {:?}", c.post)))?;
            if seen[post][pre] {
                return Err(Error::invalid(field("pre"), format!("duplicate rule {} -> {}", c.pre, c.post)));
            }
            seen[post][pre] = true;
            if !(0.0..1.0).contains(&c.probability) {
                return Err(Error::invalid(field("probability"), format!("{} outside [0, 1)", c.probability)));
            }
            let sign_ok = if is_excitatory(pre) { c.weight_mean_pa > 0.0 } else { c.weight_mean_pa < 0.0 };
            if !sign_ok {
                return Err(Error::invalid(
                    field("weight_mean_pa"),
                    format!("sign does not match source population {}", c.pre),
                ));
            }
            if !(c.delay_mean_ms > 0.0) {
                return Err(Error::invalid(field("delay_mean_ms"), "must be > 0"));
            }
            if !(c.weight_rel_sd >= 0.0 && c.delay_rel_sd >= 0.0) {
                return Err(Error::invalid(field("rel_sd"), "must be >= 0"));
            }
        }
        if let Some((post, pre)) = (0..NUM_POPULATIONS)
            .flat_map(|post| (0..NUM_POPULATIONS).map(move |pre| (post, pre)))
            .find(|&(post, pre)| !seen[post][pre])
        {
            return Err(Error::invalid(
                "connections",
                format!("missing rule {} -> {}", POPULATION_LABELS[pre], POPULATION_LABELS[post]),
            ));
        }

        let ext = &self.external;
        if !(ext.rate_per_input_hz > 0.0) {
            return Err(Error::invalid("external.rate_per_input_hz", "must be > 0"));
        }
        if !(ext.weight_pa > 0.0) {
            return Err(Error::invalid("external.weight_pa", "must be > 0"));
        }

        let nm = &self.neuron;
        if !(nm.tau_m_ms > 0.0) {
            return Err(Error::invalid("neuron.tau_m_ms", "must be > 0"));
        }
        if !(nm.tau_syn_ms > 0.0) {
            return Err(Error::invalid("neuron.tau_syn_ms", "must be > 0"));
        }
        if nm.tau_m_ms == nm.tau_syn_ms {
            return Err(Error::DegenerateTimeConstants(nm.tau_m_ms));
        }
        if !(nm.c_m_pf > 0.0) {
            return Err(Error::invalid("neuron.c_m_pf", "must be > 0"));
        }
        if !(nm.v_theta_mv > nm.v_reset_mv) {
            return Err(Error::invalid("neuron.v_theta_mv", "must exceed v_reset_mv"));
        }
        if !(nm.t_ref_ms >= 0.0) || !(nm.v_init_sd_mv >= 0.0) {
            return Err(Error::invalid("neuron", "t_ref_ms and v_init_sd_mv must be >= 0"));
        }

        let g = &self.geometry;
        if !(g.depth_um > 0.0 && g.diameter_um > 0.0) {
            return Err(Error::invalid("geometry", "depth_um and diameter_um must be > 0"));
        }

        let ex = &self.experiment;
        if !(ex.dt_ms > 0.0) {
            return Err(Error::invalid("experiment.dt_ms", "must be > 0"));
        }
        if !(ex.transient_ms >= 0.0 && ex.duration_ms > ex.transient_ms) {
            return Err(Error::invalid("experiment.duration_ms", "must exceed transient_ms"));
        }
        Ok(())
    }
}

/// The shipped full-scale parameter set.
pub fn canonical_config() -> ModelConfig {
    ModelConfig::from_json(CANONICAL_JSON).expect("shipped config is valid")
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical_value() -> serde_json::Value {
        serde_json::from_str(CANONICAL_JSON).unwrap()
    }

    fn parse(v: serde_json::Value) -> Result<ModelConfig> {
        ModelConfig::from_json(&v.to_string())
    }

    #[test]
    fn canonical_sizes_and_total() {
        let cfg = canonical_config();
        assert_eq!(cfg.sizes(), [20683, 5834, 21915, 5479, 4850, 1065, 14395, 2948]);
        assert_eq!(cfg.total_neurons(), FULL_SCALE_TOTAL);
    }

    #[test]
    fn canonical_geometry_and_drive() {
        let cfg = canonical_config();
        assert_eq!((cfg.geometry.depth_um, cfg.geometry.diameter_um), (1470.0, 300.0));
        assert_eq!(cfg.external.rate_per_input_hz, 8.0);
        assert_eq!(cfg.external.weight_pa, 87.8);
        assert_eq!(cfg.rule(0, 2).weight_mean_pa, 175.6);
        assert_eq!(cfg.rule(4, 5).weight_mean_pa, -351.2);
        assert_eq!(cfg.neuron.v_init_mean_mv, -58.0);
    }

    #[test]
    fn layer_bands_partition_the_column() {
        let cfg = canonical_config();
        assert_eq!(cfg.populations[0].depth_range_um[0], 0.0);
        assert_eq!(cfg.populations[7].depth_range_um[1], cfg.geometry.depth_um);
        for layer in 1..4 {
            assert_eq!(
                cfg.populations[2 * layer].depth_range_um[0],
                cfg.populations[2 * layer - 1].depth_range_um[1]
            );
        }
    }

    #[test]
    fn ninth_population_rejected() {
        let mut v = canonical_value();
        let extra = v["populations"][0].clone();
        v["populations"].as_array_mut().unwrap().push(extra);
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("population count != 8"), "{err}");
    }

    #[test]
    fn tau_m_above_tau_syn_accepted() {
        let mut v = canonical_value();
        v["neuron"]["tau_m_ms"] = 10.0.into();
        v["neuron"]["tau_syn_ms"] = 0.5.into();
        assert!(parse(v).is_ok());
    }

    #[test]
    fn equal_time_constants_rejected() {
        let mut v = canonical_value();
        v["neuron"]["tau_syn_ms"] = 10.0.into();
        assert!(matches!(parse(v), Err(Error::DegenerateTimeConstants(_))));
    }

    #[test]
    fn inhibitory_positive_weight_rejected() {
        let mut v = canonical_value();
        let rules = v["connections"].as_array_mut().unwrap();
        let r = rules.iter_mut().find(|r| r["pre"] == "L2i").unwrap();
        r["weight_mean_pa"] = 10.0.into();
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("weight_mean_pa"), "{err}");
    }

    #[test]
    fn missing_rule_rejected() {
        let mut v = canonical_value();
        v["connections"].as_array_mut().unwrap().pop();
        let err = parse(v).unwrap_err().to_string();
        assert!(err.contains("missing rule"), "{err}");
    }

    #[test]
    fn experiment_defaults_applied() {
        let mut v = canonical_value();
        v.as_object_mut().unwrap().remove("experiment");
        let cfg = parse(v).unwrap();
        assert_eq!(cfg.experiment, ExperimentSpec::default());
        let mut v = canonical_value();
        v["experiment"] = serde_json::json!({ "seed": 7 });
        let cfg = parse(v).unwrap();
        assert_eq!(cfg.experiment.seed, 7);
        assert_eq!(cfg.experiment.dt_ms, 0.1);
    }

    #[test]
    fn round_trip() {
        let cfg = canonical_config();
        assert_eq!(ModelConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn garbage_is_parse_error() {
        assert!(matches!(ModelConfig::from_json("{ nope"), Err(Error::Parse(_))));
    }
}
