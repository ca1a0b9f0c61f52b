//! Name-based policy construction for the CLI and the harness.

use std::collections::BTreeMap;

use super::baselines::{CombinatorialThompson, CucbSw, GlrCucb};
use super::core::RestartStrategy;
use super::sem_ucb::{PsSemUcb, PsSemUcbConfig};
use super::Policy;
use crate::error::{CsbError, Result};
use crate::graph_learn::LearnerConfig;
use crate::sem_core::Scenario;

/// Free-form numeric parameter map attached to a policy name.
pub type PolicyParams = BTreeMap<String, f64>;

const KNOWN_KEYS: &[&str] = &[
    "delta", "p", "stride", "lambda1", "lambda2", "epsilon", "window",
];

/// Corollary tuning `p = sqrt(N_G K ln T / T)`, clamped into (0, 0.99].
pub fn default_exploration_probability(scenario: &Scenario) -> f64 {
    let t = scenario.horizon as f64;
    let n_g = scenario.total_group_segments() as f64;
    let k = scenario.arm_count as f64;
    let p = (n_g * k * t.ln() / t).sqrt();
    p.clamp(1e-6, 0.99)
}

fn get(params: &PolicyParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Builds a policy from its registry name and parameter map.
///
/// Known names: `ps-sem-ucb-gr`, `ps-sem-ucb-lo`, `ps-sem-ucb-gl`,
/// `glr-cucb`, `glr-cucb-lo`, `glr-cucb-gr`, `cucb-sw`, `cts`, `orc-r`.
pub fn build_policy(
    name: &str,
    params: &PolicyParams,
    scenario: &Scenario,
) -> Result<Box<dyn Policy + Send>> {
    for key in params.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CsbError::invalid(format!("unknown policy parameter `{key}`")));
        }
    }
    let k = scenario.arm_count;
    let t = scenario.horizon as f64;
    let delta = get(params, "delta", 1.0 / t);
    let p = get(params, "p", default_exploration_probability(scenario));
    let stride = get(params, "stride", 1.0) as usize;
    let sem_config = |_: &str| PsSemUcbConfig {
        p,
        delta,
        stride,
        learner: LearnerConfig {
            lambda1: get(params, "lambda1", 1e-6),
            lambda2: get(params, "lambda2", 0.0),
            epsilon_residual: get(params, "epsilon", 1e-6),
            ..LearnerConfig::default()
        },
    };
    let strategy = |kind: &str| -> Result<RestartStrategy> {
        match kind {
            "gr" => RestartStrategy::grouped(&scenario.grouping, k),
            "lo" => Ok(RestartStrategy::local(k)),
            "gl" => Ok(RestartStrategy::global(k)),
            _ => unreachable!(),
        }
    };

    match name {
        "ps-sem-ucb-gr" | "ps-sem-ucb-lo" | "ps-sem-ucb-gl" => {
            let kind = &name[name.len() - 2..];
            Ok(Box::new(PsSemUcb::new(
                name,
                k,
                scenario.super_arm_size,
                scenario.interest_mask.clone(),
                strategy(kind)?,
                sem_config(name),
            )?))
        }
        "orc-r" => Ok(Box::new(PsSemUcb::with_oracle_restarts(
            name,
            scenario,
            sem_config(name),
        )?)),
        "glr-cucb" | "glr-cucb-gl" => Ok(Box::new(GlrCucb::new(
            name,
            scenario,
            RestartStrategy::global(k),
            p,
            delta,
            stride,
        )?)),
        "glr-cucb-lo" => Ok(Box::new(GlrCucb::new(
            name,
            scenario,
            RestartStrategy::local(k),
            p,
            delta,
            stride,
        )?)),
        "glr-cucb-gr" => Ok(Box::new(GlrCucb::new(
            name,
            scenario,
            RestartStrategy::grouped(&scenario.grouping, k)?,
            p,
            delta,
            stride,
        )?)),
        "cucb-sw" => {
            let default_window = (t * t.ln()).sqrt().round().max(1.0);
            let window = get(params, "window", default_window) as usize;
            Ok(Box::new(CucbSw::new(name, scenario, window)?))
        }
        "cts" => Ok(Box::new(CombinatorialThompson::new(name, scenario)?)),
        other => Err(CsbError::invalid(format!("unknown policy `{other}`"))),
    }
}
