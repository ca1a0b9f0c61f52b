use super::DecisionVector;

/// Per-round record of one episode.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub action: DecisionVector,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub payoff: f64,
    pub regret_increment: f64,
    /// Arms whose GLR detector fired this round.
    pub detections: Vec<usize>,
    /// Arms restarted this round (union over fired groups).
    pub restarted: Vec<usize>,
    /// A graph change was flagged by the residual test this round.
    pub graph_change: bool,
    /// The round was part of a graph-learning data-generation phase.
    pub gldg_active: bool,
    /// MSE of the current graph estimate against the active true graph,
    /// when the policy maintains an estimate.
    pub mse: Option<f64>,
}

/// Full record of one episode, one entry per round `1..=T`.
#[derive(Debug, Clone, Default)]
pub struct EpisodeTrace {
    pub records: Vec<RoundRecord>,
}

impl EpisodeTrace {
    pub fn with_capacity(t: usize) -> Self {
        EpisodeTrace {
            records: Vec::with_capacity(t),
        }
    }

    pub fn cumulative_regret_series(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.records
            .iter()
            .map(|r| {
                acc += r.regret_increment;
                acc
            })
            .collect()
    }
}
