//! Benchmark policies. All of them receive the ground-truth causal graph
//! of the active segment, which PS-SEM-UCB has to learn instead.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Beta, Distribution};

use super::core::{RestartStrategy, UcbCore};
use super::{select_super_arm, Policy, RoundEvents};
use crate::error::{CsbError, Result};
use crate::sem_core::{DecisionVector, Scenario};

/// Ground-truth graph schedule shared by the baselines.
struct GraphSchedule {
    segments: Vec<(usize, DMatrix<f64>)>,
}

impl GraphSchedule {
    fn from_scenario(scenario: &Scenario) -> Self {
        GraphSchedule {
            segments: scenario
                .graph_segments
                .iter()
                .map(|s| (s.start_round, s.graph.entries().clone()))
                .collect(),
        }
    }

    fn active(&self, t: usize) -> &DMatrix<f64> {
        let mut active = &self.segments[0].1;
        for (start, w) in &self.segments {
            if *start <= t {
                active = w;
            } else {
                break;
            }
        }
        active
    }
}

/// GLR-CUCB: combinatorial UCB with GLR change-point detection and a
/// configurable restart strategy, using the exact optimization oracle
/// (true graph) instead of graph learning.
pub struct GlrCucb {
    name: String,
    core: UcbCore,
    interest_mask: Vec<u8>,
    graphs: GraphSchedule,
}

impl GlrCucb {
    pub fn new(
        name: impl Into<String>,
        scenario: &Scenario,
        strategy: RestartStrategy,
        p: f64,
        delta: f64,
        stride: usize,
    ) -> Result<Self> {
        let core = UcbCore::new(
            scenario.arm_count,
            scenario.super_arm_size,
            p,
            delta,
            strategy,
            stride,
        )?;
        Ok(GlrCucb {
            name: name.into(),
            core,
            interest_mask: scenario.interest_mask.clone(),
            graphs: GraphSchedule::from_scenario(scenario),
        })
    }
}

impl Policy for GlrCucb {
    fn name(&self) -> &str {
        &self.name
    }

    fn select_action(&mut self, t: usize, rng: &mut ChaCha12Rng) -> Result<DecisionVector> {
        if let Some(x) = self.core.dequeue_action(rng) {
            return Ok(x);
        }
        let (u, forced) = self.core.indices_and_mask(t);
        select_super_arm(
            &self.interest_mask,
            self.graphs.active(t),
            &u,
            self.core.m,
            &forced,
        )
    }

    fn observe(
        &mut self,
        t: usize,
        x: &DecisionVector,
        z: &[f64],
        _y: &[f64],
        _rng: &mut ChaCha12Rng,
    ) -> Result<RoundEvents> {
        let mut events = RoundEvents::default();
        let (detections, restarted) = self.core.observe_plays(t, x, z)?;
        events.detections = detections;
        events.restarted = restarted;
        self.core.forced_exploration_check(t);
        Ok(events)
    }
}

/// CUCB-SW: sliding-window combinatorial UCB. Means and counts cover the
/// observations collected during the last `window` rounds; samples of an
/// arm that has not been played within the window expire, so every arm is
/// re-explored at least once per window.
pub struct CucbSw {
    name: String,
    k: usize,
    m: usize,
    window: usize,
    interest_mask: Vec<u8>,
    graphs: GraphSchedule,
    samples: Vec<VecDeque<(usize, f64)>>,
    sums: Vec<f64>,
}

impl CucbSw {
    pub fn new(name: impl Into<String>, scenario: &Scenario, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(CsbError::invalid("window must be at least 1"));
        }
        let k = scenario.arm_count;
        Ok(CucbSw {
            name: name.into(),
            k,
            m: scenario.super_arm_size,
            window,
            interest_mask: scenario.interest_mask.clone(),
            graphs: GraphSchedule::from_scenario(scenario),
            samples: vec![VecDeque::new(); k],
            sums: vec![0.0; k],
        })
    }

    /// Drop samples older than `window` rounds as of round `t`.
    fn evict(&mut self, t: usize) {
        for arm in 0..self.k {
            while let Some(&(round, s)) = self.samples[arm].front() {
                if round + self.window > t {
                    break;
                }
                self.sums[arm] -= s;
                self.samples[arm].pop_front();
            }
        }
    }

    fn indices(&self, t: usize) -> (Vec<f64>, Vec<bool>) {
        let mut u = vec![0.0; self.k];
        let mut forced = vec![false; self.k];
        // In-window horizon: t - max(1, t - window).
        let elapsed = (t.saturating_sub(1)).min(self.window).max(1) as f64;
        for arm in 0..self.k {
            let n = self.samples[arm].len();
            if n == 0 {
                forced[arm] = true;
            } else {
                let mean = self.sums[arm] / n as f64;
                u[arm] = mean + ((self.m as f64 + 1.0) * elapsed.ln() / n as f64).sqrt();
            }
        }
        (u, forced)
    }
}

impl Policy for CucbSw {
    fn name(&self) -> &str {
        &self.name
    }

    fn select_action(&mut self, t: usize, _rng: &mut ChaCha12Rng) -> Result<DecisionVector> {
        self.evict(t);
        let (u, forced) = self.indices(t);
        select_super_arm(&self.interest_mask, self.graphs.active(t), &u, self.m, &forced)
    }

    fn observe(
        &mut self,
        t: usize,
        x: &DecisionVector,
        z: &[f64],
        _y: &[f64],
        _rng: &mut ChaCha12Rng,
    ) -> Result<RoundEvents> {
        self.evict(t);
        for arm in x.ones() {
            let s = z[arm].clamp(0.0, 1.0);
            self.samples[arm].push_back((t, s));
            self.sums[arm] += s;
        }
        Ok(RoundEvents::default())
    }
}

/// CTS: combinatorial Thompson sampling with per-arm Beta posteriors,
/// designed for stationary environments. Rewards in [0, 1] update the
/// posterior through a Bernoulli resample.
pub struct CombinatorialThompson {
    name: String,
    k: usize,
    m: usize,
    interest_mask: Vec<u8>,
    graphs: GraphSchedule,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl CombinatorialThompson {
    pub fn new(name: impl Into<String>, scenario: &Scenario) -> Result<Self> {
        let k = scenario.arm_count;
        Ok(CombinatorialThompson {
            name: name.into(),
            k,
            m: scenario.super_arm_size,
            interest_mask: scenario.interest_mask.clone(),
            graphs: GraphSchedule::from_scenario(scenario),
            alpha: vec![1.0; k],
            beta: vec![1.0; k],
        })
    }

    pub fn posterior_mean(&self, arm: usize) -> f64 {
        self.alpha[arm] / (self.alpha[arm] + self.beta[arm])
    }
}

impl Policy for CombinatorialThompson {
    fn name(&self) -> &str {
        &self.name
    }

    fn select_action(&mut self, t: usize, rng: &mut ChaCha12Rng) -> Result<DecisionVector> {
        let mut theta = Vec::with_capacity(self.k);
        for arm in 0..self.k {
            let dist = Beta::new(self.alpha[arm], self.beta[arm])
                .map_err(|e| CsbError::numeric(format!("beta posterior: {e}")))?;
            theta.push(dist.sample(rng));
        }
        select_super_arm(
            &self.interest_mask,
            self.graphs.active(t),
            &theta,
            self.m,
            &vec![false; self.k],
        )
    }

    fn observe(
        &mut self,
        _t: usize,
        x: &DecisionVector,
        z: &[f64],
        _y: &[f64],
        rng: &mut ChaCha12Rng,
    ) -> Result<RoundEvents> {
        for arm in x.ones() {
            let s = z[arm].clamp(0.0, 1.0);
            if rng.random::<f64>() < s {
                self.alpha[arm] += 1.0;
            } else {
                self.beta[arm] += 1.0;
            }
        }
        Ok(RoundEvents::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem_core::{AdjacencyMatrix, DistSegment, GraphSegment};
    use rand::SeedableRng;

    fn stationary_scenario(k: usize) -> Scenario {
        Scenario {
            arm_count: k,
            horizon: 1000,
            super_arm_size: 2,
            interest_mask: vec![1; k],
            graph_segments: vec![GraphSegment {
                start_round: 1,
                graph: AdjacencyMatrix::zeros(k),
            }],
            dist_segments: vec![DistSegment {
                start_round: 1,
                means: vec![0.3; k],
                noise_scale: 0.0,
            }],
            grouping: vec![(0..k).collect()],
        }
    }

    #[test]
    fn sliding_window_mean() {
        let s = stationary_scenario(3);
        let mut p = CucbSw::new("cucb-sw", &s, 3).unwrap();
        let x = DecisionVector::from_indices(3, &[0]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for (t, z) in [0.0, 1.0, 1.0, 0.0, 1.0, 1.0].iter().enumerate() {
            p.observe(t + 1, &x, &[*z, 0.0, 0.0], &[*z, 0.0, 0.0], &mut rng)
                .unwrap();
        }
        // Window of 3 keeps the observations of rounds 4..=6: [0, 1, 1].
        assert!((p.sums[0] / p.samples[0].len() as f64 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(p.samples[0].len(), 3);
    }

    #[test]
    fn unplayed_arm_expires_and_is_forced_again() {
        let s = stationary_scenario(3);
        let mut p = CucbSw::new("cucb-sw", &s, 5).unwrap();
        let x = DecisionVector::from_indices(3, &[0]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        p.observe(1, &x, &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &mut rng)
            .unwrap();
        // Within the window the arm keeps its sample ...
        p.evict(5);
        assert_eq!(p.samples[0].len(), 1);
        // ... and loses it once `window` rounds pass without a play.
        p.evict(6);
        assert!(p.samples[0].is_empty());
        assert_eq!(p.sums[0], 0.0);
        let (_, forced) = p.indices(6);
        assert!(forced[0]);
    }

    #[test]
    fn window_one_tracks_last_observation() {
        let s = stationary_scenario(2);
        let mut p = CucbSw::new("cucb-sw", &s, 1).unwrap();
        let x = DecisionVector::from_indices(2, &[0]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        p.observe(1, &x, &[0.2, 0.0], &[0.2, 0.0], &mut rng).unwrap();
        p.observe(2, &x, &[0.9, 0.0], &[0.9, 0.0], &mut rng).unwrap();
        assert!((p.sums[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn cts_posterior_starts_uniform_and_concentrates() {
        let s = stationary_scenario(2);
        let mut p = CombinatorialThompson::new("cts", &s).unwrap();
        assert_eq!(p.posterior_mean(0), 0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = DecisionVector::from_indices(2, &[0]);
        for t in 0..10_000 {
            p.observe(t + 1, &x, &[0.7, 0.0], &[0.7, 0.0], &mut rng)
                .unwrap();
        }
        assert!((p.posterior_mean(0) - 0.7).abs() < 0.02);
    }

    #[test]
    fn cts_certain_success_update() {
        let s = stationary_scenario(2);
        let mut p = CombinatorialThompson::new("cts", &s).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = DecisionVector::from_indices(2, &[0]);
        p.observe(1, &x, &[1.0, 0.0], &[1.0, 0.0], &mut rng).unwrap();
        assert_eq!(p.alpha[0], 2.0);
        assert_eq!(p.beta[0], 1.0);
    }

    #[test]
    fn glr_cucb_global_restarts_everything() {
        let s = stationary_scenario(4);
        let mut p = GlrCucb::new(
            "glr-cucb",
            &s,
            RestartStrategy::global(4),
            0.5,
            0.05,
            1,
        )
        .unwrap();
        // Force a detection by feeding a hard shift into arm 0.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = DecisionVector::from_indices(4, &[0, 1]);
        let mut restarted = Vec::new();
        for t in 1..=600 {
            let z = if t <= 300 { [0.05, 0.5, 0.0, 0.0] } else { [0.95, 0.5, 0.0, 0.0] };
            let events = p.observe(t, &x, &z, &z, &mut rng).unwrap();
            if !events.restarted.is_empty() {
                restarted = events.restarted;
                break;
            }
        }
        assert_eq!(restarted, vec![0, 1, 2, 3]);
    }
}
