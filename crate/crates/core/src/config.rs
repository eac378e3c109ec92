//! Run configuration: one JSON document with `data`, `net`, `schedule`,
//! `loss`, `eval` and `seeds` sections, plus optional `analysis` settings.
//! Unknown keys are rejected and every section is re-validated on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::DataSpec;
use crate::error::{Error, Result};
use crate::gradfeat::NormKind;
use crate::net::{self, LossKind, NetworkParams};
use crate::rng;
use crate::trainer::HyperSchedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Quarter-width: the network has `4m` neurons.
    pub m: usize,
    pub sigma_a: f64,
    pub sigma_w: f64,
    pub b_tilde: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Held-out samples used for best-iterate selection.
    pub n_eval: usize,
    /// Independent samples on which the selected iterate is scored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub gamma: f64,
    pub b_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_g1: Option<f64>,
    #[serde(default)]
    pub norm_kind: NormKind,
    /// Initialization draws for feature-probability estimates.
    pub trials: usize,
    /// Samples per Monte-Carlo simplified gradient.
    pub feature_samples: usize,
    /// Threshold scale for mixture oracles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    /// Lottery-ticket budget as a fraction of the width `4m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lth_budget_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub data: DataSpec,
    pub net: NetConfig,
    pub schedule: HyperSchedule,
    #[serde(default = "hinge")]
    pub loss: LossKind,
    pub eval: EvalConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisConfig>,
    /// Soft wall-clock budget for a whole experiment, in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_budget_s: Option<f64>,
}

fn hinge() -> LossKind {
    LossKind::Hinge
}

pub fn default_seeds() -> Vec<u64> {
    (1..=10).collect()
}

fn invalid(path: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig { path: path.to_string(), reason: reason.into() }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            invalid(&path, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig { path: key, reason } => {
                invalid(&format!("{}:{key}", path.display()), reason)
            }
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let n = &self.net;
        if n.m == 0 {
            return Err(invalid("net.m", "must be positive"));
        }
        if !(n.sigma_a > 0.0 && n.sigma_a.is_finite()) {
            return Err(invalid("net.sigma_a", "must be positive"));
        }
        if !(n.sigma_w > 0.0 && n.sigma_w.is_finite()) {
            return Err(invalid("net.sigma_w", "must be positive"));
        }
        if !n.b_tilde.is_finite() {
            return Err(invalid("net.b_tilde", "must be finite"));
        }
        self.schedule.validate().map_err(|e| invalid("schedule", e.to_string()))?;
        if self.eval.n_eval == 0 {
            return Err(invalid("eval.n_eval", "must be positive"));
        }
        if self.eval.n_test == Some(0) {
            return Err(invalid("eval.n_test", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "need at least one seed"));
        }
        if let Some(a) = &self.analysis {
            if !(a.gamma > 0.0 && a.gamma < 1.0) {
                return Err(invalid("analysis.gamma", "must lie in (0, 1)"));
            }
            if !(a.b_g > 0.0) {
                return Err(invalid("analysis.b_g", "must be positive"));
            }
            if a.b_g1.is_some_and(|b1| !(b1 >= a.b_g)) {
                return Err(invalid("analysis.b_g1", "must be at least b_g"));
            }
            if a.trials < crate::gradfeat::MIN_TRIALS {
                return Err(invalid("analysis.trials", format!("need at least {}", crate::gradfeat::MIN_TRIALS)));
            }
            if a.feature_samples == 0 {
                return Err(invalid("analysis.feature_samples", "must be positive"));
            }
            if a.lth_budget_fraction.is_some_and(|f| !(f > 0.0 && f <= 1.0)) {
                return Err(invalid("analysis.lth_budget_fraction", "must lie in (0, 1]"));
            }
        }
        if self.wall_clock_budget_s.is_some_and(|s| !(s > 0.0)) {
            return Err(invalid("wall_clock_budget_s", "must be positive"));
        }
        Ok(())
    }

    pub fn analysis(&self) -> Result<&AnalysisConfig> {
        self.analysis.as_ref().ok_or_else(|| invalid("analysis", "this operation needs an `analysis` section"))
    }

    /// Symmetric initialization for `seed`.
    pub fn init(&self, seed: u64) -> Result<NetworkParams> {
        let n = &self.net;
        net::init_symmetric(n.m, self.data.d(), n.sigma_a, n.sigma_w, n.b_tilde, rng::derive_seed(seed, "init", 0))
    }
}

/// Built-in presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("xor_gmm", include_str!("../presets/xor_gmm.json")),
    ("parity", include_str!("../presets/parity.json")),
    ("parity_features", include_str!("../presets/parity_features.json")),
    ("parity_small", include_str!("../presets/parity_small.json")),
    ("uniform_parity", include_str!("../presets/uniform_parity.json")),
    ("linear", include_str!("../presets/linear.json")),
    ("mixture", include_str!("../presets/mixture.json")),
];

pub fn preset(name: &str) -> Result<Config> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| invalid("name", format!("unknown preset `{name}`")))?;
    Config::from_json(text)
}
