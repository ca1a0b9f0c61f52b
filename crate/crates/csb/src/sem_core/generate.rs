use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::AdjacencyMatrix;
use super::scenario::{DistSegment, GraphSegment, Scenario};
use crate::error::{CsbError, Result};

/// Parameters for synthetic scenario generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub arm_count: usize,
    pub horizon: usize,
    pub super_arm_size: usize,
    pub group_sizes: Vec<usize>,
    pub graph_changes: usize,
    pub dist_changes: usize,
    pub edge_density: f64,
    pub weight_min: f64,
    pub weight_max: f64,
    pub noise_scale: f64,
}

impl GeneratorParams {
    /// The synthetic-study configuration: 18 arms in 3 groups of 6,
    /// m = 4, T = 25000, 4 graph and 4 distribution change-points,
    /// edge density 0.15, weights uniform in [0.1, 0.9].
    pub fn paper_defaults() -> Self {
        GeneratorParams {
            arm_count: 18,
            horizon: 25_000,
            super_arm_size: 4,
            group_sizes: vec![6, 6, 6],
            graph_changes: 4,
            dist_changes: 4,
            edge_density: 0.15,
            weight_min: 0.1,
            weight_max: 0.9,
            noise_scale: 0.05,
        }
    }

    fn validate(&self) -> Result<()> {
        let k = self.arm_count;
        if k == 0 {
            return Err(CsbError::invalid("arm_count must be positive"));
        }
        if self.super_arm_size == 0 || self.super_arm_size > k {
            return Err(CsbError::invalid("super_arm_size must be in 1..=K"));
        }
        if self.group_sizes.iter().sum::<usize>() != k || self.group_sizes.contains(&0) {
            return Err(CsbError::invalid(
                "group sizes must be positive and sum to arm_count",
            ));
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return Err(CsbError::invalid("edge_density must be in [0,1]"));
        }
        if !(0.0 <= self.weight_min && self.weight_min <= self.weight_max) {
            return Err(CsbError::invalid("weight range must satisfy 0 <= min <= max"));
        }
        if self.noise_scale < 0.0 {
            return Err(CsbError::invalid("noise_scale must be nonnegative"));
        }
        Ok(())
    }
}

/// Evenly spaced segment start rounds: `count` segments over `1..=horizon`.
fn segment_starts(horizon: usize, count: usize) -> Vec<usize> {
    (0..count).map(|i| 1 + i * horizon / count).collect()
}

/// Random DAG at the requested density. Edges only point from earlier to
/// later nodes of a random permutation, so the result is acyclic by
/// construction.
fn random_dag<R: Rng + ?Sized>(params: &GeneratorParams, rng: &mut R) -> AdjacencyMatrix {
    let k = params.arm_count;
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(rng);
    let mut w = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in (a + 1)..k {
            if rng.random::<f64>() < params.edge_density {
                let weight = rng.random_range(params.weight_min..=params.weight_max);
                // perm[a] influences perm[b].
                w[(perm[b], perm[a])] = weight;
            }
        }
    }
    AdjacencyMatrix::new(w, true).expect("construction is acyclic with zero diagonal")
}

/// Generates a random piecewise-stationary scenario.
///
/// Graph segments hold fresh random DAGs; distribution segments have equal
/// lengths, and at each breakpoint every arm of a randomly chosen subset
/// of groups receives a new uniform mean.
pub fn generate_synthetic_scenario<R: Rng + ?Sized>(
    params: &GeneratorParams,
    rng: &mut R,
) -> Result<Scenario> {
    params.validate()?;
    let k = params.arm_count;

    let graph_starts = segment_starts(params.horizon, params.graph_changes + 1);
    if graph_starts
        .windows(2)
        .any(|pair| pair[1] - pair[0] < k + 1)
    {
        return Err(CsbError::invalid(
            "graph changes too dense: segments must be at least K+1 rounds long",
        ));
    }
    let graph_segments: Vec<GraphSegment> = graph_starts
        .into_iter()
        .map(|start_round| GraphSegment {
            start_round,
            graph: random_dag(params, rng),
        })
        .collect();

    let mut grouping = Vec::with_capacity(params.group_sizes.len());
    let mut next_arm = 0;
    for &size in &params.group_sizes {
        grouping.push((next_arm..next_arm + size).collect::<Vec<_>>());
        next_arm += size;
    }

    let dist_starts = segment_starts(params.horizon, params.dist_changes + 1);
    if dist_starts.windows(2).any(|pair| pair[1] == pair[0]) {
        return Err(CsbError::invalid(
            "distribution changes too dense for the horizon",
        ));
    }
    let mut means: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mut dist_segments = Vec::with_capacity(dist_starts.len());
    for (i, start_round) in dist_starts.into_iter().enumerate() {
        if i > 0 {
            // Group-coordinated change: redraw the means of every arm in
            // a random nonempty subset of groups.
            let mut chosen: Vec<usize> = (0..grouping.len())
                .filter(|_| rng.random::<f64>() < 0.5)
                .collect();
            if chosen.is_empty() {
                chosen.push(rng.random_range(0..grouping.len()));
            }
            for g in chosen {
                for &arm in &grouping[g] {
                    means[arm] = rng.random::<f64>();
                }
            }
        }
        dist_segments.push(DistSegment {
            start_round,
            means: means.clone(),
            noise_scale: params.noise_scale,
        });
    }

    let scenario = Scenario {
        arm_count: k,
        horizon: params.horizon,
        super_arm_size: params.super_arm_size,
        interest_mask: vec![1; k],
        graph_segments,
        dist_segments,
        grouping,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem_core::validate_dag;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn small_params() -> GeneratorParams {
        GeneratorParams {
            arm_count: 6,
            horizon: 500,
            super_arm_size: 2,
            group_sizes: vec![3, 3],
            graph_changes: 2,
            dist_changes: 2,
            edge_density: 0.3,
            weight_min: 0.1,
            weight_max: 0.9,
            noise_scale: 0.05,
        }
    }

    #[test]
    fn zero_changes_gives_single_segments() {
        let mut params = small_params();
        params.graph_changes = 0;
        params.dist_changes = 0;
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let s = generate_synthetic_scenario(&params, &mut rng).unwrap();
        assert_eq!(s.graph_segments.len(), 1);
        assert_eq!(s.dist_segments.len(), 1);
    }

    #[test]
    fn paper_defaults_have_five_segments_each() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let s = generate_synthetic_scenario(&GeneratorParams::paper_defaults(), &mut rng).unwrap();
        assert_eq!(s.graph_segments.len(), 5);
        assert_eq!(s.dist_segments.len(), 5);
        assert_eq!(s.arm_count, 18);
        assert_eq!(s.super_arm_size, 4);
        assert_eq!(s.grouping.len(), 3);
    }

    #[test]
    fn generated_graphs_are_dags() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for seed_round in 0..20 {
            let _ = seed_round;
            let s = generate_synthetic_scenario(&small_params(), &mut rng).unwrap();
            for seg in &s.graph_segments {
                assert!(validate_dag(seg.graph.entries()).unwrap());
            }
        }
    }

    #[test]
    fn changes_are_group_coordinated() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let s = generate_synthetic_scenario(&small_params(), &mut rng).unwrap();
        for seg in 0..s.dist_segments.len() - 1 {
            let a = &s.dist_segments[seg].means;
            let b = &s.dist_segments[seg + 1].means;
            for group in &s.grouping {
                let changed: Vec<bool> = group.iter().map(|&arm| a[arm] != b[arm]).collect();
                // Either the whole group changed or none of it did
                // (a redrawn uniform mean is a.s. different).
                assert!(changed.iter().all(|&c| c) || changed.iter().all(|&c| !c));
            }
        }
    }

    #[test]
    fn infeasible_graph_density_rejected() {
        let mut params = small_params();
        params.horizon = 20;
        params.graph_changes = 4; // segments of ~4 rounds < K+1 = 7
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(generate_synthetic_scenario(&params, &mut rng).is_err());
    }
}
