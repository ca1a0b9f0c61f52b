use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::graph::AdjacencyMatrix;
use super::truncnorm;
use crate::error::{CsbError, Result};

/// A graph stationary segment: `graph` is active from `start_round` until
/// the next segment begins. Rounds are 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSegment {
    pub start_round: usize,
    pub graph: AdjacencyMatrix,
}

/// A distribution stationary segment: per-arm pre-truncation means and the
/// shared noise scale of the truncated-normal instantaneous rewards.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistSegment {
    pub start_round: usize,
    pub means: Vec<f64>,
    pub noise_scale: f64,
}

/// Full description of a piecewise-stationary environment.
///
/// Arms are 0-based in memory; the JSON form uses 1-based arm indices in
/// `grouping` (and rounds are 1-based everywhere).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRepr", into = "ScenarioRepr")]
pub struct Scenario {
    pub arm_count: usize,
    pub horizon: usize,
    pub super_arm_size: usize,
    /// Agent interest mask `c` in {0,1}^K.
    pub interest_mask: Vec<u8>,
    pub graph_segments: Vec<GraphSegment>,
    pub dist_segments: Vec<DistSegment>,
    /// Partition of the arms into disjoint groups.
    pub grouping: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioRepr {
    arm_count: usize,
    horizon: usize,
    super_arm_size: usize,
    interest_mask: Vec<u8>,
    graph_segments: Vec<GraphSegment>,
    dist_segments: Vec<DistSegment>,
    grouping: Vec<Vec<usize>>,
}

impl TryFrom<ScenarioRepr> for Scenario {
    type Error = CsbError;

    fn try_from(r: ScenarioRepr) -> Result<Self> {
        let grouping = r
            .grouping
            .into_iter()
            .map(|g| {
                g.into_iter()
                    .map(|a| {
                        if a == 0 || a > r.arm_count {
                            Err(CsbError::invalid(format!("arm index {a} out of range")))
                        } else {
                            Ok(a - 1)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let scenario = Scenario {
            arm_count: r.arm_count,
            horizon: r.horizon,
            super_arm_size: r.super_arm_size,
            interest_mask: r.interest_mask,
            graph_segments: r.graph_segments,
            dist_segments: r.dist_segments,
            grouping,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

impl From<Scenario> for ScenarioRepr {
    fn from(s: Scenario) -> Self {
        ScenarioRepr {
            arm_count: s.arm_count,
            horizon: s.horizon,
            super_arm_size: s.super_arm_size,
            interest_mask: s.interest_mask,
            graph_segments: s.graph_segments,
            dist_segments: s.dist_segments,
            grouping: s
                .grouping
                .into_iter()
                .map(|g| g.into_iter().map(|a| a + 1).collect())
                .collect(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let k = self.arm_count;
        if k == 0 {
            return Err(CsbError::invalid("arm_count must be positive"));
        }
        if self.horizon == 0 {
            return Err(CsbError::invalid("horizon must be positive"));
        }
        if self.super_arm_size == 0 || self.super_arm_size > k {
            return Err(CsbError::invalid("super_arm_size must be in 1..=K"));
        }
        if self.interest_mask.len() != k || self.interest_mask.iter().any(|&c| c > 1) {
            return Err(CsbError::invalid("interest_mask must be a {0,1}^K vector"));
        }
        if self.graph_segments.is_empty() || self.graph_segments[0].start_round != 1 {
            return Err(CsbError::invalid("graph segments must start at round 1"));
        }
        for pair in self.graph_segments.windows(2) {
            if pair[1].start_round <= pair[0].start_round {
                return Err(CsbError::invalid(
                    "graph segment starts must be strictly increasing",
                ));
            }
            // Leaves room for a full K-round graph-learning phase.
            if pair[1].start_round - pair[0].start_round < k + 1 {
                return Err(CsbError::invalid(format!(
                    "graph changes at rounds {} and {} are less than K+1 apart",
                    pair[0].start_round, pair[1].start_round
                )));
            }
        }
        for seg in &self.graph_segments {
            if seg.graph.k() != k {
                return Err(CsbError::invalid("graph segment dimension mismatch"));
            }
        }
        if self.dist_segments.is_empty() || self.dist_segments[0].start_round != 1 {
            return Err(CsbError::invalid("distribution segments must start at round 1"));
        }
        for pair in self.dist_segments.windows(2) {
            if pair[1].start_round <= pair[0].start_round {
                return Err(CsbError::invalid(
                    "distribution segment starts must be strictly increasing",
                ));
            }
        }
        for seg in &self.dist_segments {
            if seg.means.len() != k {
                return Err(CsbError::invalid("distribution segment dimension mismatch"));
            }
            if seg.means.iter().any(|&m| !(0.0..=1.0).contains(&m)) {
                return Err(CsbError::invalid("segment means must lie in [0,1]"));
            }
            if seg.noise_scale < 0.0 {
                return Err(CsbError::invalid("noise_scale must be nonnegative"));
            }
        }
        let mut seen = vec![false; k];
        for group in &self.grouping {
            if group.is_empty() {
                return Err(CsbError::invalid("groups must be nonempty"));
            }
            for &arm in group {
                if arm >= k || seen[arm] {
                    return Err(CsbError::invalid(
                        "grouping must be a partition of the arms",
                    ));
                }
                seen[arm] = true;
            }
        }
        if seen.iter().any(|&s| !s) {
            return Err(CsbError::invalid("grouping must cover every arm"));
        }
        Ok(())
    }

    /// Index of the graph segment active at round `t` (1-based).
    pub fn graph_index_at(&self, t: usize) -> usize {
        segment_index(self.graph_segments.iter().map(|s| s.start_round), t)
    }

    /// Index of the distribution segment active at round `t` (1-based).
    pub fn dist_index_at(&self, t: usize) -> usize {
        segment_index(self.dist_segments.iter().map(|s| s.start_round), t)
    }

    pub fn active_graph(&self, t: usize) -> &AdjacencyMatrix {
        &self.graph_segments[self.graph_index_at(t)].graph
    }

    pub fn active_dist(&self, t: usize) -> &DistSegment {
        &self.dist_segments[self.dist_index_at(t)]
    }

    /// Analytic post-truncation means of the given distribution segment.
    pub fn truncated_means(&self, dist_index: usize) -> Vec<f64> {
        let seg = &self.dist_segments[dist_index];
        seg.means
            .iter()
            .map(|&mu| truncnorm::mean(mu, seg.noise_scale))
            .collect()
    }

    pub fn interest_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.arm_count,
            self.interest_mask.iter().map(|&c| c as f64),
        )
    }

    pub fn group_of(&self, arm: usize) -> usize {
        self.grouping
            .iter()
            .position(|g| g.contains(&arm))
            .expect("validated grouping covers every arm")
    }

    /// Whether arm `k` has a different reward distribution in two
    /// consecutive distribution segments.
    fn arm_changes(&self, seg: usize, arm: usize) -> bool {
        let a = &self.dist_segments[seg];
        let b = &self.dist_segments[seg + 1];
        a.means[arm] != b.means[arm] || a.noise_scale != b.noise_scale
    }

    /// Number of distribution stationary segments for one group: one plus
    /// the number of breakpoints at which some arm of the group changes
    /// (simultaneous changes within the group count once).
    pub fn group_segment_count(&self, group_index: usize) -> usize {
        let group = &self.grouping[group_index];
        1 + (0..self.dist_segments.len().saturating_sub(1))
            .filter(|&seg| group.iter().any(|&arm| self.arm_changes(seg, arm)))
            .count()
    }

    /// Total number of group segments over all groups.
    pub fn total_group_segments(&self) -> usize {
        (0..self.grouping.len())
            .map(|g| self.group_segment_count(g))
            .sum()
    }

    /// Distribution breakpoints as `(start_round, changed group indices)`,
    /// skipping the initial segment.
    pub fn dist_change_events(&self) -> Vec<(usize, Vec<usize>)> {
        (0..self.dist_segments.len().saturating_sub(1))
            .map(|seg| {
                let groups = (0..self.grouping.len())
                    .filter(|&g| {
                        self.grouping[g].iter().any(|&arm| self.arm_changes(seg, arm))
                    })
                    .collect();
                (self.dist_segments[seg + 1].start_round, groups)
            })
            .collect()
    }

    pub fn graph_change_rounds(&self) -> Vec<usize> {
        self.graph_segments[1..]
            .iter()
            .map(|s| s.start_round)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

fn segment_index(starts: impl Iterator<Item = usize>, t: usize) -> usize {
    let mut idx = 0;
    for (i, start) in starts.enumerate() {
        if start <= t {
            idx = i;
        } else {
            break;
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    pub(crate) fn two_segment_scenario() -> Scenario {
        let g0 = AdjacencyMatrix::zeros(4);
        let mut w = DMatrix::zeros(4, 4);
        w[(1, 0)] = 0.5;
        let g1 = AdjacencyMatrix::new(w, true).unwrap();
        Scenario {
            arm_count: 4,
            horizon: 100,
            super_arm_size: 2,
            interest_mask: vec![1, 1, 1, 1],
            graph_segments: vec![
                GraphSegment { start_round: 1, graph: g0 },
                GraphSegment { start_round: 50, graph: g1 },
            ],
            dist_segments: vec![
                DistSegment {
                    start_round: 1,
                    means: vec![0.1, 0.2, 0.3, 0.4],
                    noise_scale: 0.0,
                },
                DistSegment {
                    start_round: 60,
                    means: vec![0.1, 0.2, 0.9, 0.4],
                    noise_scale: 0.0,
                },
            ],
            grouping: vec![vec![0, 1], vec![2, 3]],
        }
    }

    #[test]
    fn validates_and_round_trips() {
        let s = two_segment_scenario();
        s.validate().unwrap();
        let json = s.to_json().unwrap();
        let back = Scenario::from_json(&json).unwrap();
        assert_eq!(back.arm_count, 4);
        assert_eq!(back.grouping, s.grouping);
        // JSON carries 1-based arm indices.
        assert!(json.contains("\"grouping\""));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["grouping"][0][0], 1);
    }

    #[test]
    fn segment_lookup() {
        let s = two_segment_scenario();
        assert_eq!(s.graph_index_at(1), 0);
        assert_eq!(s.graph_index_at(49), 0);
        assert_eq!(s.graph_index_at(50), 1);
        assert_eq!(s.dist_index_at(59), 0);
        assert_eq!(s.dist_index_at(60), 1);
        assert_eq!(s.dist_index_at(100), 1);
    }

    #[test]
    fn group_segment_counts() {
        let s = two_segment_scenario();
        // Only arm 2 (group 1) changes.
        assert_eq!(s.group_segment_count(0), 1);
        assert_eq!(s.group_segment_count(1), 2);
        assert_eq!(s.total_group_segments(), 3);
        let events = s.dist_change_events();
        assert_eq!(events, vec![(60, vec![1])]);
    }

    #[test]
    fn simultaneous_changes_in_group_count_once() {
        let mut s = two_segment_scenario();
        s.dist_segments[1].means = vec![0.1, 0.2, 0.9, 0.8];
        assert_eq!(s.group_segment_count(1), 2);
    }

    #[test]
    fn stationary_scenario_has_one_segment_per_group() {
        let mut s = two_segment_scenario();
        s.dist_segments.truncate(1);
        assert_eq!(s.group_segment_count(0), 1);
        assert_eq!(s.group_segment_count(1), 1);
    }

    #[test]
    fn graph_gap_enforced() {
        let mut s = two_segment_scenario();
        s.graph_segments[1].start_round = 4; // < K+1 = 5
        assert!(s.validate().is_err());
    }

    #[test]
    fn overlapping_groups_rejected() {
        let mut s = two_segment_scenario();
        s.grouping = vec![vec![0, 1], vec![1, 2, 3]];
        assert!(s.validate().is_err());
    }
}
