//! PS-SEM-UCB: UCB with GLR change-point detection, pluggable restart
//! strategies, and online causal-graph learning. The oracle-restart
//! variant replaces detection with the true change schedule.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;

use super::core::{RestartStrategy, UcbCore};
use super::{select_super_arm, Policy, RoundEvents};
use crate::error::{CsbError, Result};
use crate::graph_learn::{
    estimate_adjacency, residual_test, FeedbackBuffer, GraphEstimate, LearnerConfig,
};
use crate::sem_core::{DecisionVector, Scenario};

#[derive(Debug, Clone)]
pub struct PsSemUcbConfig {
    /// Uniform exploration probability.
    pub p: f64,
    /// GLR confidence level.
    pub delta: f64,
    /// GLR split-scan stride (1 = exact).
    pub stride: usize,
    pub learner: LearnerConfig,
}

impl Default for PsSemUcbConfig {
    fn default() -> Self {
        PsSemUcbConfig {
            p: 0.05,
            delta: 0.01,
            stride: 1,
            learner: LearnerConfig {
                lambda1: 1e-6,
                ..LearnerConfig::default()
            },
        }
    }
}

pub struct PsSemUcb {
    name: String,
    core: UcbCore,
    interest_mask: Vec<u8>,
    learner: LearnerConfig,
    /// Graph-(re)learning indicator; starts set so the first K rounds run
    /// the data-generation phase.
    flag: bool,
    /// Position within the initialization-matrix columns.
    init_cursor: usize,
    w_hat: Option<GraphEstimate>,
    buffer: FeedbackBuffer,
    /// Oracle restart schedule: round -> arms to restart. Detection is
    /// disabled when this is present.
    oracle_restarts: Option<HashMap<usize, Vec<usize>>>,
}

impl PsSemUcb {
    pub fn new(
        name: impl Into<String>,
        k: usize,
        m: usize,
        interest_mask: Vec<u8>,
        strategy: RestartStrategy,
        config: PsSemUcbConfig,
    ) -> Result<Self> {
        let core = UcbCore::new(k, m, config.p, config.delta, strategy, config.stride)?;
        Ok(PsSemUcb {
            name: name.into(),
            core,
            interest_mask,
            learner: config.learner,
            flag: true,
            init_cursor: 0,
            w_hat: None,
            buffer: FeedbackBuffer::new(k),
            oracle_restarts: None,
        })
    }

    /// PS-SEM-UCB-Gr with the oracle restart schedule from the true
    /// scenario: restarts exactly the changed groups at the true change
    /// rounds, with GLR detection disabled.
    pub fn with_oracle_restarts(
        name: impl Into<String>,
        scenario: &Scenario,
        config: PsSemUcbConfig,
    ) -> Result<Self> {
        let strategy = RestartStrategy::grouped(&scenario.grouping, scenario.arm_count)?;
        let mut policy = PsSemUcb::new(
            name,
            scenario.arm_count,
            scenario.super_arm_size,
            scenario.interest_mask.clone(),
            strategy,
            config,
        )?;
        let mut schedule: HashMap<usize, Vec<usize>> = HashMap::new();
        for (round, groups) in scenario.dist_change_events() {
            let arms = schedule.entry(round).or_default();
            for g in groups {
                arms.extend(scenario.grouping[g].iter().copied());
            }
        }
        policy.oracle_restarts = Some(schedule);
        policy.core.detection_enabled = false;
        Ok(policy)
    }

    pub fn flag(&self) -> bool {
        self.flag
    }

    pub fn estimate(&self) -> Option<&GraphEstimate> {
        self.w_hat.as_ref()
    }

    pub fn queue_len(&self) -> usize {
        self.core.omega.len()
    }

    /// Invariant check: outside GLDG phases and with an empty queue,
    /// every arm is either observed (n >= 1) or flagged for forced
    /// inclusion by the selection mask.
    pub fn assert_queue_discipline(&self, t: usize) -> Result<()> {
        if self.flag || !self.core.omega.is_empty() {
            return Ok(());
        }
        let (_, forced) = self.core.indices_and_mask(t);
        for (arm, &is_forced) in forced.iter().enumerate() {
            if self.core.n[arm] == 0 && !is_forced {
                return Err(CsbError::invalid(format!(
                    "arm {arm} has no observations, is not queued, and is not forced"
                )));
            }
        }
        Ok(())
    }
}

impl Policy for PsSemUcb {
    fn name(&self) -> &str {
        &self.name
    }

    fn select_action(&mut self, t: usize, rng: &mut ChaCha12Rng) -> Result<DecisionVector> {
        let _ = t;
        if self.flag {
            // Next initialization column: play one arm alone.
            return Ok(DecisionVector::from_indices(self.core.k, &[self.init_cursor]));
        }
        if let Some(x) = self.core.dequeue_action(rng) {
            return Ok(x);
        }
        let (u, forced) = self.core.indices_and_mask(t);
        let w_hat = &self
            .w_hat
            .as_ref()
            .expect("an estimate exists once the first GLDG phase completed")
            .w_hat;
        select_super_arm(&self.interest_mask, w_hat, &u, self.core.m, &forced)
    }

    fn observe(
        &mut self,
        t: usize,
        x: &DecisionVector,
        z: &[f64],
        y: &[f64],
        _rng: &mut ChaCha12Rng,
    ) -> Result<RoundEvents> {
        let mut events = RoundEvents::default();
        let (detections, restarted) = self.core.observe_plays(t, x, z)?;
        events.detections = detections;
        events.restarted = restarted;

        if let Some(schedule) = &self.oracle_restarts {
            if let Some(arms) = schedule.get(&t) {
                let arms = arms.clone();
                self.core.restart_arms(t, &arms);
                for a in arms {
                    if !events.restarted.contains(&a) {
                        events.restarted.push(a);
                    }
                }
                events.restarted.sort_unstable();
            }
        }

        // GLDG already plays a spanning set of arms, so the periodic
        // reload of the queue is suppressed until the phase ends.
        if !self.flag {
            self.core.forced_exploration_check(t);
        }

        let yv = DVector::from_column_slice(y);
        let zv = DVector::from_column_slice(z);
        if self.flag {
            events.gldg_active = true;
            self.buffer.push(yv, zv)?;
            self.init_cursor += 1;
            if self.init_cursor >= self.core.k {
                self.w_hat = Some(estimate_adjacency(&self.buffer, &self.learner, None)?);
                self.flag = false;
            }
        } else {
            self.buffer.push(yv.clone(), zv.clone())?;
            let current = self.w_hat.as_ref().expect("flag=0 implies an estimate");
            if residual_test(&current.w_hat, &yv, &zv, self.learner.epsilon_residual) {
                self.flag = true;
                self.init_cursor = 0;
                self.buffer.clear();
                events.graph_change = true;
            } else {
                self.w_hat = Some(estimate_adjacency(
                    &self.buffer,
                    &self.learner,
                    self.w_hat.as_ref(),
                )?);
            }
        }
        Ok(events)
    }

    fn graph_estimate(&self) -> Option<&DMatrix<f64>> {
        self.w_hat.as_ref().map(|g| &g.w_hat)
    }
}
