//! Shared UCB-with-restarts machinery: per-arm counters and means,
//! GLR detectors, the restart queue, and forced exploration.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand_chacha::ChaCha12Rng;

use crate::changepoint::{GlrDetector, ThresholdMode};
use crate::error::{CsbError, Result};
use crate::sem_core::DecisionVector;

/// Which arms restart together when a change fires.
#[derive(Debug, Clone)]
pub struct RestartStrategy {
    groups: Vec<Vec<usize>>,
    /// Group index of each arm.
    membership: Vec<usize>,
}

impl RestartStrategy {
    pub fn grouped(grouping: &[Vec<usize>], k: usize) -> Result<Self> {
        let mut membership = vec![usize::MAX; k];
        for (g, group) in grouping.iter().enumerate() {
            for &arm in group {
                if arm >= k || membership[arm] != usize::MAX {
                    return Err(CsbError::invalid("grouping must be a partition of the arms"));
                }
                membership[arm] = g;
            }
        }
        if membership.contains(&usize::MAX) {
            return Err(CsbError::invalid("grouping must cover every arm"));
        }
        Ok(RestartStrategy {
            groups: grouping.to_vec(),
            membership,
        })
    }

    /// Singleton groups: only the firing arm restarts.
    pub fn local(k: usize) -> Self {
        RestartStrategy {
            groups: (0..k).map(|i| vec![i]).collect(),
            membership: (0..k).collect(),
        }
    }

    /// One group of all arms: every detection restarts everything.
    pub fn global(k: usize) -> Self {
        RestartStrategy {
            groups: vec![(0..k).collect()],
            membership: vec![0; k],
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_of(&self, arm: usize) -> &[usize] {
        &self.groups[self.membership[arm]]
    }

    pub fn group_index_of(&self, arm: usize) -> usize {
        self.membership[arm]
    }
}

/// UCB index `mu_hat + sqrt((m+1) ln(t - tau) / n)`; the bonus vanishes
/// at `t - tau = 1`.
pub fn ucb_index(mu_hat: f64, n: u64, t: usize, tau: usize, m: usize) -> f64 {
    debug_assert!(n >= 1, "arms with n = 0 must be routed through the queue");
    debug_assert!(t > tau);
    let elapsed = (t - tau) as f64;
    mu_hat + ((m as f64 + 1.0) * elapsed.ln() / n as f64).sqrt()
}

/// Mutable per-arm learning state shared by the UCB policies.
pub struct UcbCore {
    pub k: usize,
    pub m: usize,
    /// Observation counts since each arm's last restart.
    pub n: Vec<u64>,
    pub mu_hat: Vec<f64>,
    /// Per-arm restart rounds.
    pub tau: Vec<usize>,
    /// Last detection/exploration anchor.
    pub tau_prime: usize,
    /// FIFO queue of arms pending forced play.
    pub omega: VecDeque<usize>,
    pub detectors: Vec<GlrDetector>,
    pub strategy: RestartStrategy,
    /// Forced-exploration period `floor(K / p)`.
    pub force_every: usize,
    /// When false, samples are still recorded but the GLR test never
    /// fires (used by the oracle-restart policy).
    pub detection_enabled: bool,
}

impl UcbCore {
    pub fn new(
        k: usize,
        m: usize,
        p: f64,
        delta: f64,
        strategy: RestartStrategy,
        stride: usize,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&p) || p == 0.0 {
            return Err(CsbError::invalid("exploration probability must lie in (0,1)"));
        }
        let detectors = (0..k)
            .map(|_| GlrDetector::with_stride(delta, ThresholdMode::Practical, stride))
            .collect::<Result<Vec<_>>>()?;
        Ok(UcbCore {
            k,
            m,
            n: vec![0; k],
            mu_hat: vec![0.0; k],
            tau: vec![0; k],
            tau_prime: 0,
            omega: VecDeque::new(),
            detectors,
            strategy,
            force_every: (k as f64 / p).floor() as usize,
            detection_enabled: true,
        })
    }

    /// Restarts every arm of the group containing `arm` at round `t` and
    /// queues the group for forced play. Returns the restarted arms.
    pub fn restart_group_of(&mut self, t: usize, arm: usize) -> Vec<usize> {
        let group: Vec<usize> = self.strategy.group_of(arm).to_vec();
        self.restart_arms(t, &group);
        group
    }

    pub fn restart_arms(&mut self, t: usize, arms: &[usize]) {
        let mut sorted = arms.to_vec();
        sorted.sort_unstable();
        for &a in &sorted {
            self.n[a] = 0;
            self.mu_hat[a] = 0.0;
            self.tau[a] = t;
            self.detectors[a].reset();
            if !self.omega.contains(&a) {
                self.omega.push_back(a);
            }
        }
        self.tau_prime = t;
    }

    /// Records the played arms' feedback, runs the detectors, and applies
    /// the restart strategy. Returns `(fired arms, restarted arms)`.
    pub fn observe_plays(
        &mut self,
        t: usize,
        x: &DecisionVector,
        z: &[f64],
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut detections = Vec::new();
        let mut restarted = Vec::new();
        for arm in x.ones() {
            let s = z[arm].clamp(0.0, 1.0);
            self.n[arm] += 1;
            self.mu_hat[arm] += (s - self.mu_hat[arm]) / self.n[arm] as f64;
            let fired = self.detectors[arm].push_sample(s)?;
            if fired && self.detection_enabled {
                detections.push(arm);
                for a in self.restart_group_of(t, arm) {
                    if !restarted.contains(&a) {
                        restarted.push(a);
                    }
                }
            }
        }
        restarted.sort_unstable();
        Ok((detections, restarted))
    }

    /// Uniform forced exploration: when `t - tau'` is a positive multiple
    /// of `floor(K/p)`, the queue is reloaded with every arm.
    pub fn forced_exploration_check(&mut self, t: usize) -> bool {
        if self.force_every == 0 || t <= self.tau_prime {
            return false;
        }
        if (t - self.tau_prime).is_multiple_of(self.force_every) {
            self.omega = (0..self.k).collect();
            true
        } else {
            false
        }
    }

    /// Dequeues one arm and completes a super arm of exactly `m` arms,
    /// draining further queued arms first and filling the rest uniformly
    /// at random.
    pub fn dequeue_action(&mut self, rng: &mut ChaCha12Rng) -> Option<DecisionVector> {
        let first = self.omega.pop_front()?;
        let mut chosen = vec![first];
        while chosen.len() < self.m {
            match self.omega.pop_front() {
                Some(a) => {
                    if !chosen.contains(&a) {
                        chosen.push(a);
                    }
                }
                None => break,
            }
        }
        if chosen.len() < self.m {
            let remaining: Vec<usize> = (0..self.k).filter(|a| !chosen.contains(a)).collect();
            let fill = self.m - chosen.len();
            for idx in sample(rng, remaining.len(), fill.min(remaining.len())) {
                chosen.push(remaining[idx]);
            }
        }
        Some(DecisionVector::from_indices(self.k, &chosen))
    }

    /// UCB indices plus the forced-inclusion mask for arms with no
    /// post-restart observation that are not queued.
    pub fn indices_and_mask(&self, t: usize) -> (Vec<f64>, Vec<bool>) {
        let mut u = vec![0.0; self.k];
        let mut forced = vec![false; self.k];
        for arm in 0..self.k {
            if self.n[arm] >= 1 {
                u[arm] = ucb_index(self.mu_hat[arm], self.n[arm], t, self.tau[arm], self.m);
            } else if !self.omega.contains(&arm) {
                forced[arm] = true;
            }
        }
        (u, forced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn core(k: usize, m: usize) -> UcbCore {
        UcbCore::new(k, m, 0.5, 0.05, RestartStrategy::local(k), 1).unwrap()
    }

    #[test]
    fn ucb_index_examples() {
        let u = ucb_index(0.5, 5, 11, 1, 4);
        assert!((u - (0.5 + (10.0_f64.ln()).sqrt())).abs() < 1e-12);
        assert!((u - 2.0174).abs() < 1e-4);
        // t - tau = 1: bonus vanishes.
        assert_eq!(ucb_index(0.3, 3, 5, 4, 4), 0.3);
        // Large n: bonus shrinks toward the mean.
        assert!(ucb_index(0.5, 1_000_000_000, 11, 1, 4) - 0.5 < 1e-3);
    }

    #[test]
    fn group_restart_resets_exactly_the_group() {
        let strategy =
            RestartStrategy::grouped(&[vec![0, 1], vec![2, 3, 4]], 5).unwrap();
        let mut core = UcbCore::new(5, 2, 0.5, 0.05, strategy, 1).unwrap();
        for arm in 0..5 {
            core.n[arm] = 10;
            core.mu_hat[arm] = 0.5;
        }
        let restarted = core.restart_group_of(7, 3);
        assert_eq!(restarted, vec![2, 3, 4]);
        assert_eq!(core.n, vec![10, 10, 0, 0, 0]);
        assert_eq!(core.tau, vec![0, 0, 7, 7, 7]);
        assert_eq!(core.tau_prime, 7);
        assert!(core.omega.iter().copied().eq([2, 3, 4]));
    }

    #[test]
    fn local_and_global_strategies() {
        assert_eq!(RestartStrategy::local(4).group_of(2), &[2]);
        assert_eq!(RestartStrategy::global(4).group_of(2), &[0, 1, 2, 3]);
    }

    #[test]
    fn forced_exploration_period() {
        let mut c = core(4, 2); // floor(4 / 0.5) = 8
        assert_eq!(c.force_every, 8);
        for t in 1..=7 {
            assert!(!c.forced_exploration_check(t));
        }
        assert!(c.forced_exploration_check(8));
        assert_eq!(c.omega.len(), 4);
        c.omega.clear();
        assert!(!c.forced_exploration_check(9));
        assert!(c.forced_exploration_check(16));
    }

    #[test]
    fn dequeue_fills_to_exactly_m() {
        let mut c = core(5, 3);
        c.omega.push_back(2);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let x = c.dequeue_action(&mut rng).unwrap();
        assert!(x.is_set(2));
        assert_eq!(x.count_ones(), 3);
        assert!(c.omega.is_empty());
    }

    #[test]
    fn dequeue_prefers_queued_arms() {
        let mut c = core(5, 2);
        c.omega.extend([4, 1, 3]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let x = c.dequeue_action(&mut rng).unwrap();
        assert!(x.is_set(4) && x.is_set(1));
        assert!(c.omega.iter().copied().eq([3]));
    }

    #[test]
    fn observe_updates_running_means() {
        let mut c = core(3, 2);
        let x = DecisionVector::from_indices(3, &[0, 2]);
        c.observe_plays(1, &x, &[0.4, 0.9, 0.8]).unwrap();
        c.observe_plays(2, &x, &[0.6, 0.9, 0.4]).unwrap();
        assert_eq!(c.n, vec![2, 0, 2]);
        assert!((c.mu_hat[0] - 0.5).abs() < 1e-12);
        assert!((c.mu_hat[2] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unobserved_unqueued_arm_is_forced() {
        let mut c = core(3, 2);
        let x = DecisionVector::from_indices(3, &[0, 1]);
        c.observe_plays(1, &x, &[0.4, 0.9, 0.8]).unwrap();
        let (_, forced) = c.indices_and_mask(2);
        assert_eq!(forced, vec![false, false, true]);
    }
}
