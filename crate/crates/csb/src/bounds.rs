//! Numeric evaluation of the regret upper bounds and the
//! restart-comparison increments. Formula evaluation only; no proofs.

use std::f64::consts::PI;

use crate::error::{CsbError, Result};
use crate::sem_core::{path_weights, Scenario};

/// Inputs to the bound calculators.
#[derive(Debug, Clone)]
pub struct BoundParams {
    /// Maximum weighted-path coefficient over the run.
    pub omega_max: f64,
    pub m: usize,
    pub k: usize,
    pub horizon: usize,
    /// Smallest and largest suboptimality gaps.
    pub delta_min: f64,
    pub delta_max: f64,
    /// GLR confidence level.
    pub delta: f64,
    /// Exploration probability.
    pub p: f64,
    /// Maximum detection delay in rounds.
    pub max_delay: f64,
    /// Per-group `(N_g, K_g)`: segment count and group size.
    pub group_profile: Vec<(usize, usize)>,
    /// Graph stationary segment count.
    pub graph_segments: usize,
    /// Smallest largest-arm mean shift across breakpoints.
    pub delta_min_change: f64,
}

impl BoundParams {
    fn check_gaps(&self) -> Result<()> {
        if self.delta_min <= 0.0 {
            return Err(CsbError::invalid("delta_min must be strictly positive"));
        }
        if self.delta_max < self.delta_min {
            return Err(CsbError::invalid("delta_max must be at least delta_min"));
        }
        Ok(())
    }

    fn n_g(&self) -> f64 {
        self.group_profile.iter().map(|&(n_g, _)| n_g as f64).sum()
    }

    /// Per-segment log-regret coefficient
    /// `R_0(T) = 4 omega^2 m^2 (m+1) ln(T) delta_max / delta_min^2`.
    pub fn r0(&self) -> f64 {
        let m = self.m as f64;
        4.0 * self.omega_max.powi(2) * m * m * (m + 1.0) * (self.horizon as f64).ln()
            * self.delta_max
            / self.delta_min.powi(2)
    }
}

/// Stationary-case regret bound:
/// `[4 omega^2 m^2 (m+1) K ln T / delta_min^2 + (pi^2/3) m K + K] delta_max`.
pub fn lemma1_bound(params: &BoundParams) -> Result<f64> {
    params.check_gaps()?;
    let m = params.m as f64;
    let k = params.k as f64;
    let log_t = (params.horizon as f64).ln();
    let leading = 4.0 * params.omega_max.powi(2) * m * m * (m + 1.0) * k * log_t
        / params.delta_min.powi(2);
    Ok((leading + PI * PI / 3.0 * m * k + k) * params.delta_max)
}

/// Nonstationary regret bound for any grouping of the arms.
pub fn theorem1_bound(params: &BoundParams) -> Result<f64> {
    params.check_gaps()?;
    let t = params.horizon as f64;
    let m = params.m as f64;
    let k = params.k as f64;
    let r0 = params.r0();
    let per_group: f64 = params
        .group_profile
        .iter()
        .map(|&(n_g, k_g)| {
            let n_g = n_g as f64;
            let k_g = k_g as f64;
            n_g * k_g * r0
                + (params.delta * t + 1.0 + PI * PI * m / 3.0) * n_g * k_g * params.delta_max
        })
        .sum();
    let tail = (t * params.p
        + params.max_delay * params.n_g()
        + params.delta * t * (k + params.n_g())
        + params.graph_segments as f64 * k)
        * params.delta_max;
    Ok(per_group + tail)
}

/// Restart-strategy case for the post-breakpoint regret increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartCase {
    Local,
    Global,
    Group,
    /// Group restart when the fired groups also contain `s` unchanged arms.
    GroupWithUnchanged,
}

/// Regret increment within the stationary segment after one breakpoint:
/// `kappa` changed arms spread over `eta` groups, `s` unchanged arms
/// dragged along by their groups.
pub fn remark1_increment(
    case: RestartCase,
    c1: f64,
    c2: f64,
    kappa: f64,
    eta: f64,
    s: f64,
    k: usize,
) -> f64 {
    let k = k as f64;
    match case {
        RestartCase::Local => c1 * kappa + c2 * kappa,
        RestartCase::Global => c1 * k + c2,
        RestartCase::Group => c1 * kappa + c2 * eta,
        RestartCase::GroupWithUnchanged => c1 * (kappa + s) + c2 * eta,
    }
}

/// Order-level bound under the tuning `delta = 1/T`,
/// `p = sqrt(N_G K ln T / T)`; constants fixed at 1.
pub fn corollary_bound(params: &BoundParams) -> Result<f64> {
    params.check_gaps()?;
    if params.delta_min_change <= 0.0 {
        return Err(CsbError::invalid(
            "delta_min_change must be strictly positive",
        ));
    }
    let t = params.horizon as f64;
    let k = params.k as f64;
    let log_t = t.ln();
    let segments: f64 = params
        .group_profile
        .iter()
        .map(|&(n_g, k_g)| (n_g * k_g) as f64)
        .sum();
    let value = segments * log_t / params.delta_min
        + (params.n_g() * k * t * log_t).sqrt() / params.delta_min_change.powi(2)
        + params.graph_segments as f64 * k;
    Ok(value * params.delta_max)
}

/// Maximum weighted-path coefficient of a scenario:
/// `max` over graph segments and arms of `c^T (I - W)^{-1}` entries.
pub fn omega_max_of(scenario: &Scenario) -> Result<f64> {
    let mut omega: f64 = 0.0;
    for seg in &scenario.graph_segments {
        let weights = path_weights(&scenario.interest_mask, &seg.graph)?;
        for &w in weights.iter() {
            omega = omega.max(w);
        }
    }
    Ok(omega)
}

/// Smallest and largest suboptimality gaps of a scenario across all
/// segment combinations, by brute force over feasible decision vectors.
/// Only tractable for small `K`; used by the CLI's `--from-scenario`.
pub fn gaps_of(scenario: &Scenario) -> Result<(f64, f64)> {
    let k = scenario.arm_count;
    if k > 20 {
        return Err(CsbError::invalid("gap enumeration is limited to K <= 20"));
    }
    let mut delta_min = f64::INFINITY;
    let mut delta_max: f64 = 0.0;
    for g in &scenario.graph_segments {
        let weights = path_weights(&scenario.interest_mask, &g.graph)?;
        for d in 0..scenario.dist_segments.len() {
            let mu = scenario.truncated_means(d);
            let scores: Vec<f64> = (0..k).map(|i| weights[i] * mu[i]).collect();
            let mut values = Vec::new();
            for mask in 0u32..(1 << k) {
                if mask.count_ones() as usize > scenario.super_arm_size {
                    continue;
                }
                let value: f64 = (0..k)
                    .filter(|&i| mask >> i & 1 == 1)
                    .map(|i| scores[i])
                    .sum();
                values.push(value);
            }
            let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in values {
                let gap = best - v;
                if gap > 1e-12 {
                    delta_min = delta_min.min(gap);
                    delta_max = delta_max.max(gap);
                }
            }
        }
    }
    if !delta_min.is_finite() {
        return Err(CsbError::invalid(
            "scenario has no suboptimal action; gaps are undefined",
        ));
    }
    Ok((delta_min, delta_max))
}
