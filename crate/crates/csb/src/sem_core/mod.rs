//! Environment model: causal graph, SEM reward generation, expected
//! payoff, the optimal-action oracle, and piecewise-stationary regret.

mod generate;
mod graph;
mod scenario;
mod trace;
pub mod truncnorm;

pub use generate::{generate_synthetic_scenario, GeneratorParams};
pub use graph::{spectral_radius, topological_order, validate_dag, AdjacencyMatrix};
pub use scenario::{DistSegment, GraphSegment, Scenario};
pub use trace::{EpisodeTrace, RoundRecord};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CsbError, Result};

/// Feasible decision vector: a {0,1}^K selection of base arms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVector {
    bits: Vec<bool>,
}

impl DecisionVector {
    pub fn new(bits: Vec<bool>) -> Self {
        DecisionVector { bits }
    }

    pub fn zeros(k: usize) -> Self {
        DecisionVector { bits: vec![false; k] }
    }

    pub fn from_indices(k: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; k];
        for &i in indices {
            bits[i] = true;
        }
        DecisionVector { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_set(&self, arm: usize) -> bool {
        self.bits[arm]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.bits.len(),
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }),
        )
    }
}

/// One round of semi-bandit feedback from the SEM.
#[derive(Debug, Clone)]
pub struct RoundFeedback {
    /// Exogenous inputs `z = diag(b) x`; zero outside the played arms.
    pub z: DVector<f64>,
    /// Overall rewards solving `(I - W) y = z`.
    pub y: DVector<f64>,
    /// Scalar payoff `c^T y`, set once the interest mask is applied.
    pub payoff: Option<f64>,
}

/// Independent truncated-normal draws of the instantaneous rewards.
pub fn draw_instantaneous_rewards<R: Rng + ?Sized>(
    means: &[f64],
    noise_scale: f64,
    rng: &mut R,
) -> Vec<f64> {
    means
        .iter()
        .map(|&mu| truncnorm::sample(mu, noise_scale, rng))
        .collect()
}

/// Generates the round feedback for playing `x` with instantaneous
/// rewards `b` under graph `w`. The payoff field is left unset.
pub fn sem_output(w: &AdjacencyMatrix, b: &[f64], x: &DecisionVector) -> Result<RoundFeedback> {
    let k = w.k();
    if b.len() != k || x.len() != k {
        return Err(CsbError::invalid("dimension mismatch in sem_output"));
    }
    let z = DVector::from_iterator(
        k,
        (0..k).map(|i| if x.is_set(i) { b[i] } else { 0.0 }),
    );
    let y = w.solve(&z)?;
    Ok(RoundFeedback { z, y, payoff: None })
}

/// Payoff `c^T y` for the interest mask `c`.
pub fn payoff(c: &[u8], y: &DVector<f64>) -> f64 {
    c.iter()
        .zip(y.iter())
        .map(|(&ci, &yi)| ci as f64 * yi)
        .sum()
}

/// Expected payoff `c^T (I - W)^{-1} diag(mu) x` for post-truncation
/// means `mu`.
pub fn expected_payoff(
    c: &[u8],
    w: &AdjacencyMatrix,
    mu: &[f64],
    x: &DecisionVector,
) -> Result<f64> {
    let weights = path_weights(c, w)?;
    Ok(x.ones().map(|i| weights[i] * mu[i]).sum())
}

/// Per-arm path coefficients `omega^T = c^T (I - W)^{-1}`.
pub fn path_weights(c: &[u8], w: &AdjacencyMatrix) -> Result<DVector<f64>> {
    if c.len() != w.k() {
        return Err(CsbError::invalid("interest mask dimension mismatch"));
    }
    let cv = DVector::from_iterator(c.len(), c.iter().map(|&ci| ci as f64));
    w.solve_transpose(&cv)
}

/// Selects the (up to) `m` largest strictly positive scores, ties broken
/// by lowest index.
pub fn select_top_m(scores: &[f64], m: usize) -> DecisionVector {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must not be NaN")
            .then(a.cmp(&b))
    });
    let chosen: Vec<usize> = order
        .into_iter()
        .filter(|&i| scores[i] > 0.0)
        .take(m)
        .collect();
    DecisionVector::from_indices(scores.len(), &chosen)
}

/// Maximizer of the expected payoff over all feasible decision vectors,
/// computed by ranking `c^T (I - W)^{-1} diag(mu)`.
pub fn optimal_action(
    c: &[u8],
    w: &AdjacencyMatrix,
    mu: &[f64],
    m: usize,
) -> Result<(DecisionVector, f64)> {
    let weights = path_weights(c, w)?;
    let scores: Vec<f64> = (0..mu.len()).map(|i| weights[i] * mu[i]).collect();
    let x = select_top_m(&scores, m);
    let value = x.ones().map(|i| scores[i]).sum();
    Ok((x, value))
}

/// Running cumulative piecewise-stationary regret of a trace, recomputed
/// against the segment-active graph and post-truncation means.
pub fn cumulative_regret(trace: &EpisodeTrace, scenario: &Scenario) -> Result<Vec<f64>> {
    let oracle = RegretOracle::new(scenario)?;
    let mut out = Vec::with_capacity(trace.records.len());
    let mut acc = 0.0;
    for record in &trace.records {
        acc += oracle.instantaneous_regret(record.round, &record.action)?;
        out.push(acc);
    }
    Ok(out)
}

/// Caches per-segment optimal values and path weights for regret
/// accounting.
pub struct RegretOracle {
    scenario: Scenario,
    /// Path weights per graph segment.
    weights: Vec<DVector<f64>>,
    /// Post-truncation means per distribution segment.
    means: Vec<Vec<f64>>,
    /// Optimal expected payoff per (graph segment, dist segment).
    optimal: Vec<Vec<f64>>,
}

impl RegretOracle {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let weights: Vec<DVector<f64>> = scenario
            .graph_segments
            .iter()
            .map(|seg| path_weights(&scenario.interest_mask, &seg.graph))
            .collect::<Result<_>>()?;
        let means: Vec<Vec<f64>> = (0..scenario.dist_segments.len())
            .map(|i| scenario.truncated_means(i))
            .collect();
        let mut optimal = Vec::with_capacity(weights.len());
        for w in &weights {
            let mut per_dist = Vec::with_capacity(means.len());
            for mu in &means {
                let scores: Vec<f64> = (0..mu.len()).map(|i| w[i] * mu[i]).collect();
                let x = select_top_m(&scores, scenario.super_arm_size);
                per_dist.push(x.ones().map(|i| scores[i]).sum());
            }
            optimal.push(per_dist);
        }
        Ok(RegretOracle {
            scenario: scenario.clone(),
            weights,
            means,
            optimal,
        })
    }

    pub fn expected_payoff_at(&self, t: usize, x: &DecisionVector) -> f64 {
        let g = self.scenario.graph_index_at(t);
        let d = self.scenario.dist_index_at(t);
        x.ones()
            .map(|i| self.weights[g][i] * self.means[d][i])
            .sum()
    }

    pub fn optimal_value_at(&self, t: usize) -> f64 {
        let g = self.scenario.graph_index_at(t);
        let d = self.scenario.dist_index_at(t);
        self.optimal[g][d]
    }

    pub fn instantaneous_regret(&self, t: usize, x: &DecisionVector) -> Result<f64> {
        if x.len() != self.scenario.arm_count {
            return Err(CsbError::invalid("decision vector dimension mismatch"));
        }
        // The optimum is an argmax, so the gap is nonnegative up to
        // floating-point rounding.
        Ok((self.optimal_value_at(t) - self.expected_payoff_at(t, x)).max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn adj(k: usize, edges: &[(usize, usize, f64)]) -> AdjacencyMatrix {
        let mut m = DMatrix::zeros(k, k);
        for &(i, j, w) in edges {
            m[(i, j)] = w;
        }
        AdjacencyMatrix::new(m, true).unwrap()
    }

    #[test]
    fn sem_output_identity_case() {
        let w = AdjacencyMatrix::zeros(2);
        let x = DecisionVector::from_indices(2, &[0, 1]);
        let fb = sem_output(&w, &[0.4, 0.6], &x).unwrap();
        assert_eq!(fb.z.as_slice(), &[0.4, 0.6]);
        assert_eq!(fb.y.as_slice(), &[0.4, 0.6]);
    }

    #[test]
    fn sem_output_back_substitution() {
        let w = adj(2, &[(1, 0, 0.5)]);
        let x = DecisionVector::from_indices(2, &[0, 1]);
        let fb = sem_output(&w, &[1.0, 1.0], &x).unwrap();
        assert!((fb.y[0] - 1.0).abs() < 1e-12);
        assert!((fb.y[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn sem_output_three_nodes() {
        let w = adj(3, &[(2, 0, 0.5), (2, 1, 0.5)]);
        let x = DecisionVector::from_indices(3, &[0, 1, 2]);
        let fb = sem_output(&w, &[0.4, 0.6, 0.2], &x).unwrap();
        let expect = [0.4, 0.6, 0.7];
        for (got, want) in fb.y.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sem_output_masks_unplayed_arms() {
        let w = AdjacencyMatrix::zeros(3);
        let x = DecisionVector::from_indices(3, &[1]);
        let fb = sem_output(&w, &[0.4, 0.6, 0.2], &x).unwrap();
        assert_eq!(fb.z.as_slice(), &[0.0, 0.6, 0.0]);
    }

    #[test]
    fn payoff_examples() {
        let y = DVector::from_vec(vec![1.0, 1.5]);
        assert!((payoff(&[1, 1], &y) - 2.5).abs() < 1e-12);
        assert_eq!(payoff(&[0, 0], &y), 0.0);
        let y2 = DVector::from_vec(vec![9.0, 0.3]);
        assert!((payoff(&[0, 1], &y2) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn expected_payoff_examples() {
        let w = AdjacencyMatrix::zeros(3);
        let x = DecisionVector::from_indices(3, &[0, 2]);
        let v = expected_payoff(&[1, 1, 1], &w, &[0.9, 0.1, 0.5], &x).unwrap();
        assert!((v - 1.4).abs() < 1e-12);

        let x0 = DecisionVector::zeros(3);
        assert_eq!(
            expected_payoff(&[1, 1, 1], &w, &[0.9, 0.1, 0.5], &x0).unwrap(),
            0.0
        );

        // Causal flow: arm 0 contributes to node 1's overall reward.
        let w2 = adj(2, &[(1, 0, 1.0)]);
        let x1 = DecisionVector::from_indices(2, &[0]);
        let v2 = expected_payoff(&[0, 1], &w2, &[0.9, 0.1], &x1).unwrap();
        assert!((v2 - 0.9).abs() < 1e-12);
    }

    #[test]
    fn optimal_action_top_m() {
        let w = AdjacencyMatrix::zeros(3);
        let (x, v) = optimal_action(&[1, 1, 1], &w, &[0.9, 0.1, 0.5], 2).unwrap();
        assert_eq!(x, DecisionVector::from_indices(3, &[0, 2]));
        assert!((v - 1.4).abs() < 1e-12);
    }

    #[test]
    fn optimal_action_uses_causal_effect() {
        let w = adj(2, &[(1, 0, 1.0)]);
        let (x, v) = optimal_action(&[0, 1], &w, &[0.9, 0.1], 1).unwrap();
        assert_eq!(x, DecisionVector::from_indices(2, &[0]));
        assert!((v - 0.9).abs() < 1e-12);
    }

    #[test]
    fn optimal_action_zero_means() {
        let w = AdjacencyMatrix::zeros(3);
        let (x, v) = optimal_action(&[1, 1, 1], &w, &[0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(x, DecisionVector::zeros(3));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn select_top_m_tie_breaks_low_index() {
        let x = select_top_m(&[0.5, 0.5, 0.5], 2);
        assert_eq!(x, DecisionVector::from_indices(3, &[0, 1]));
    }
}
