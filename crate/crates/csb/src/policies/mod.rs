//! The PS-SEM-UCB policy family and baseline policies behind a single
//! interface: select an action, then observe the round's feedback.

mod baselines;
mod core;
mod registry;
mod sem_ucb;

pub use baselines::{CombinatorialThompson, CucbSw, GlrCucb};
pub use core::{ucb_index, RestartStrategy, UcbCore};
pub use registry::{build_policy, default_exploration_probability, PolicyParams};
pub use sem_ucb::{PsSemUcb, PsSemUcbConfig};

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha12Rng;

use crate::error::{CsbError, Result};
use crate::sem_core::DecisionVector;

/// Events reported by a policy for one observed round.
#[derive(Debug, Clone, Default)]
pub struct RoundEvents {
    /// Arms whose change-point detector fired.
    pub detections: Vec<usize>,
    /// Arms restarted this round.
    pub restarted: Vec<usize>,
    /// The residual test flagged a graph change.
    pub graph_change: bool,
    /// The round belonged to a graph-learning data-generation phase.
    pub gldg_active: bool,
}

/// A sequential decision-making policy.
pub trait Policy {
    fn name(&self) -> &str;

    /// Chooses the decision vector for round `t` (1-based).
    fn select_action(&mut self, t: usize, rng: &mut ChaCha12Rng) -> Result<DecisionVector>;

    /// Consumes the semi-bandit feedback of round `t`.
    fn observe(
        &mut self,
        t: usize,
        x: &DecisionVector,
        z: &[f64],
        y: &[f64],
        rng: &mut ChaCha12Rng,
    ) -> Result<RoundEvents>;

    /// Current adjacency estimate, for policies that learn the graph.
    fn graph_estimate(&self) -> Option<&DMatrix<f64>> {
        None
    }
}

/// Solves the per-round combinatorial optimization: ranks
/// `M^T = c^T (I - W)^{-1} diag(U)` and selects the `m` largest strictly
/// positive entries (ties to the lowest index). Arms flagged in
/// `forced` are included first regardless of their index value.
pub fn select_super_arm(
    c: &[u8],
    w_hat: &DMatrix<f64>,
    u: &[f64],
    m: usize,
    forced: &[bool],
) -> Result<DecisionVector> {
    let k = c.len();
    if w_hat.nrows() != k || w_hat.ncols() != k || u.len() != k || forced.len() != k {
        return Err(CsbError::invalid("select_super_arm dimension mismatch"));
    }
    let cv = DVector::from_iterator(k, c.iter().map(|&ci| ci as f64));
    let system = (DMatrix::identity(k, k) - w_hat).transpose();
    let weights = system
        .lu()
        .solve(&cv)
        .ok_or_else(|| CsbError::numeric("(I - W_hat) is singular"))?;
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(CsbError::numeric("non-finite path weights"));
    }

    let mut chosen: Vec<usize> = (0..k).filter(|&i| forced[i]).take(m).collect();
    if chosen.len() < m {
        let scores: Vec<f64> = (0..k)
            .map(|i| if forced[i] { 0.0 } else { weights[i] * u[i] })
            .collect();
        let mut order: Vec<usize> = (0..k).filter(|&i| !forced[i]).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .expect("scores must not be NaN")
                .then(a.cmp(&b))
        });
        chosen.extend(
            order
                .into_iter()
                .filter(|&i| scores[i] > 0.0)
                .take(m - chosen.len()),
        );
    }
    Ok(DecisionVector::from_indices(k, &chosen))
}
