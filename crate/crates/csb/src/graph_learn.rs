//! Online estimation of the SEM adjacency matrix from stacked feedback.
//!
//! The estimator minimizes `||Y - W Y - Z||_F^2` plus a sparsity penalty
//! (L1 or directed total variation) subject to a zero diagonal, via
//! proximal gradient descent with backtracking. The feedback buffer keeps
//! Gram-matrix caches so that appending a round and re-solving costs
//! `O(K^2)` and `O(K^3)` respectively, independent of the buffer length.

use nalgebra::{DMatrix, DVector};

use crate::error::{CsbError, Result};
use crate::sem_core::spectral_radius;

/// Sparsity penalty applied to the adjacency estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularizer {
    #[default]
    L1,
    /// Directed total variation: `sum_ij W[i,j] sum_h (Y[i,h] - Y[j,h])^+`,
    /// with the estimate constrained nonnegative. Used with cyclic graphs.
    Dtv,
}

#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub lambda1: f64,
    /// Temporal-smoothness weight on `||W - W_prev||_1`; 0 disables it.
    pub lambda2: f64,
    pub regularizer: Regularizer,
    pub allow_cycles: bool,
    pub max_iters: usize,
    /// Relative objective-decrease convergence tolerance.
    pub step_tolerance: f64,
    /// Graph-change residual tolerance.
    pub epsilon_residual: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            lambda1: 1e-4,
            lambda2: 0.0,
            regularizer: Regularizer::L1,
            allow_cycles: false,
            max_iters: 2000,
            step_tolerance: 1e-12,
            epsilon_residual: 1e-6,
        }
    }
}

/// Stacked feedback since the last graph reset: columns of overall
/// rewards `Y` and exogenous inputs `Z`, plus Gram caches.
#[derive(Debug, Clone)]
pub struct FeedbackBuffer {
    k: usize,
    y_cols: Vec<DVector<f64>>,
    z_cols: Vec<DVector<f64>>,
    /// `Y Y^T`
    gram_yy: DMatrix<f64>,
    /// `Z Y^T`
    gram_zy: DMatrix<f64>,
    /// `tr(Z Z^T)`
    zz: f64,
    /// `D[i,j] = sum_h (Y[i,h] - Y[j,h])^+` for the DTV penalty.
    dtv: DMatrix<f64>,
}

impl FeedbackBuffer {
    pub fn new(k: usize) -> Self {
        FeedbackBuffer {
            k,
            y_cols: Vec::new(),
            z_cols: Vec::new(),
            gram_yy: DMatrix::zeros(k, k),
            gram_zy: DMatrix::zeros(k, k),
            zz: 0.0,
            dtv: DMatrix::zeros(k, k),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.y_cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_cols.is_empty()
    }

    pub fn push(&mut self, y: DVector<f64>, z: DVector<f64>) -> Result<()> {
        if y.len() != self.k || z.len() != self.k {
            return Err(CsbError::invalid("feedback column dimension mismatch"));
        }
        self.gram_yy += &y * y.transpose();
        self.gram_zy += &z * y.transpose();
        self.zz += z.dot(&z);
        for i in 0..self.k {
            for j in 0..self.k {
                let diff = y[i] - y[j];
                if diff > 0.0 {
                    self.dtv[(i, j)] += diff;
                }
            }
        }
        self.y_cols.push(y);
        self.z_cols.push(z);
        Ok(())
    }

    pub fn clear(&mut self) {
        *self = FeedbackBuffer::new(self.k);
    }

    pub fn y_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.y_cols)
    }

    pub fn z_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.z_cols)
    }

    /// Data-fit term `||Y - W Y - Z||_F^2` evaluated through the caches.
    pub fn residual_norm_sq(&self, w: &DMatrix<f64>) -> f64 {
        let b = DMatrix::identity(self.k, self.k) - w;
        let ba = &b * &self.gram_yy;
        // tr(B A B^T) - 2 tr(B (ZY^T)^T) + tr(Z Z^T)
        let quad = (&ba * b.transpose()).trace();
        let cross = (&b * self.gram_zy.transpose()).trace();
        (quad - 2.0 * cross + self.zz).max(0.0)
    }

    fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let b = DMatrix::identity(self.k, self.k) - w;
        -2.0 * (&b * &self.gram_yy - &self.gram_zy)
    }

    fn lipschitz(&self) -> f64 {
        2.0 * spectral_radius(&self.gram_yy).max(f64::MIN_POSITIVE)
    }
}

/// Result of one adjacency solve.
#[derive(Debug, Clone)]
pub struct GraphEstimate {
    /// Zero-diagonal, entrywise nonnegative estimate.
    pub w_hat: DMatrix<f64>,
    /// Final value of the penalized objective.
    pub objective_value: f64,
    pub iterations: usize,
}

impl GraphEstimate {
    pub fn zeros(k: usize) -> Self {
        GraphEstimate {
            w_hat: DMatrix::zeros(k, k),
            objective_value: 0.0,
            iterations: 0,
        }
    }

    /// Row-major export for the JSON/CSV experiment outputs.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.w_hat.nrows())
            .map(|i| (0..self.w_hat.ncols()).map(|j| self.w_hat[(i, j)]).collect())
            .collect()
    }
}

/// The K-column initialization design for graph identification: column
/// `t'` plays exactly arm `t'` alone, a feasible decision vector for any
/// super-arm budget `m >= 1`.
pub fn build_init_matrix(k: usize, m: usize) -> DMatrix<f64> {
    debug_assert!(m >= 1);
    DMatrix::identity(k, k)
}

/// Directed total variation penalty `sum_ij W[i,j] sum_h (Y[i,h]-Y[j,h])^+`.
pub fn dtv_penalty(w: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let k = w.nrows();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if w[(i, j)] != 0.0 {
                let mut hinge = 0.0;
                for h in 0..y.ncols() {
                    let diff = y[(i, h)] - y[(j, h)];
                    if diff > 0.0 {
                        hinge += diff;
                    }
                }
                total += w[(i, j)] * hinge;
            }
        }
    }
    total
}

/// Graph-change test: true iff `||y - W_hat y - z||_2^2 > epsilon`.
pub fn residual_test(
    w_hat: &DMatrix<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    epsilon_residual: f64,
) -> bool {
    let residual = y - w_hat * y - z;
    residual.norm_squared() > epsilon_residual
}

fn penalty_value(w: &DMatrix<f64>, config: &LearnerConfig, buffer: &FeedbackBuffer, prev: Option<&DMatrix<f64>>) -> f64 {
    let mut value = match config.regularizer {
        Regularizer::L1 => config.lambda1 * w.iter().map(|v| v.abs()).sum::<f64>(),
        Regularizer::Dtv => {
            config.lambda1 * w.iter().zip(buffer.dtv.iter()).map(|(a, d)| a * d).sum::<f64>()
        }
    };
    if let (Some(prev), true) = (prev, config.lambda2 > 0.0) {
        value += config.lambda2 * (w - prev).iter().map(|v| v.abs()).sum::<f64>();
    }
    value
}

/// Exact minimizer of `0.5 (x - v)^2 + a |x| + b |x - c|`.
fn prox_abs_pair(v: f64, a: f64, b: f64, c: f64) -> f64 {
    let phi = |x: f64| 0.5 * (x - v) * (x - v) + a * x.abs() + b * (x - c).abs();
    let candidates = [v - a - b, v - a + b, v + a + b, v + a - b, 0.0, c];
    let mut best = 0.0;
    let mut best_val = phi(0.0);
    for x in candidates {
        let val = phi(x);
        if val < best_val {
            best_val = val;
            best = x;
        }
    }
    best
}

/// Exact minimizer of `0.5 (x - v)^2 + d x + b |x - c|` over `x >= 0`.
fn prox_linear_pair(v: f64, d: f64, b: f64, c: f64) -> f64 {
    let phi = |x: f64| 0.5 * (x - v) * (x - v) + d * x + b * (x - c).abs();
    let candidates = [
        (v - d - b).max(0.0),
        (v - d + b).max(0.0),
        0.0,
        c.max(0.0),
    ];
    let mut best = 0.0;
    let mut best_val = phi(0.0);
    for x in candidates {
        let val = phi(x);
        if val < best_val {
            best_val = val;
            best = x;
        }
    }
    best
}

fn prox_step(
    w: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    step: f64,
    config: &LearnerConfig,
    buffer: &FeedbackBuffer,
    prev: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let k = w.nrows();
    let mut next = DMatrix::zeros(k, k);
    let l2 = step * config.lambda2;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let v = w[(i, j)] - step * grad[(i, j)];
            let c = prev.map_or(0.0, |p| p[(i, j)]);
            next[(i, j)] = match config.regularizer {
                Regularizer::L1 => {
                    let l1 = step * config.lambda1;
                    if l2 > 0.0 && prev.is_some() {
                        prox_abs_pair(v, l1, l2, c)
                    } else if v > l1 {
                        v - l1
                    } else if v < -l1 {
                        v + l1
                    } else {
                        0.0
                    }
                }
                Regularizer::Dtv => {
                    let d = step * config.lambda1 * buffer.dtv[(i, j)];
                    if l2 > 0.0 && prev.is_some() {
                        prox_linear_pair(v, d, l2, c)
                    } else {
                        (v - d).max(0.0)
                    }
                }
            };
        }
    }
    next
}

/// Solves the penalized least-squares problem for the adjacency matrix.
///
/// Proximal gradient with backtracking; the diagonal is held at zero by
/// the prox step and negative entries are clamped to zero in the returned
/// estimate.
pub fn estimate_adjacency(
    buffer: &FeedbackBuffer,
    config: &LearnerConfig,
    warm_start: Option<&GraphEstimate>,
) -> Result<GraphEstimate> {
    if buffer.is_empty() {
        return Err(CsbError::invalid("cannot estimate a graph from an empty buffer"));
    }
    let k = buffer.k();
    let prev = warm_start.map(|g| &g.w_hat);
    let smoothness_prev = if config.lambda2 > 0.0 { prev } else { None };

    let mut w = prev.cloned().unwrap_or_else(|| DMatrix::zeros(k, k));
    for i in 0..k {
        w[(i, i)] = 0.0;
    }
    let mut objective = buffer.residual_norm_sq(&w) + penalty_value(&w, config, buffer, smoothness_prev);
    let base_step = 1.0 / buffer.lipschitz();
    let mut iterations = 0;

    // FISTA with monotone restart: extrapolate from the last two iterates
    // and drop the momentum whenever the objective would increase.
    let mut momentum = 1.0_f64;
    let mut w_prev_iter = w.clone();

    for _ in 0..config.max_iters {
        iterations += 1;
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        let v = &w + (&w - &w_prev_iter) * beta;
        let v_fit = buffer.residual_norm_sq(&v);
        let grad = buffer.gradient(&v);
        let mut step = base_step;
        let next = loop {
            let candidate = prox_step(&v, &grad, step, config, buffer, smoothness_prev);
            let candidate_fit = buffer.residual_norm_sq(&candidate);
            let diff = &candidate - &v;
            // Sufficient-decrease condition for the smooth part.
            let model = v_fit + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if candidate_fit <= model + 1e-12 * v_fit.abs().max(1.0) {
                break candidate;
            }
            step *= 0.5;
            if step < base_step * 1e-12 {
                break candidate;
            }
        };
        let next_objective =
            buffer.residual_norm_sq(&next) + penalty_value(&next, config, buffer, smoothness_prev);
        if next_objective > objective {
            if beta == 0.0 {
                // A plain proximal step cannot improve: converged.
                break;
            }
            // Restart momentum from the best iterate so far.
            momentum = 1.0;
            w_prev_iter = w.clone();
            continue;
        }
        let decrease = objective - next_objective;
        w_prev_iter = std::mem::replace(&mut w, next);
        momentum = next_momentum;
        let converged = decrease <= config.step_tolerance * objective.abs().max(1e-300);
        objective = next_objective;
        if converged {
            break;
        }
    }

    let w_hat = w.map(|v| v.max(0.0));
    Ok(GraphEstimate {
        w_hat,
        objective_value: objective,
        iterations,
    })
}

/// Grid search for the sparsity weight: fits on the train buffer for each
/// grid value and returns the one minimizing the one-step reconstruction
/// error on the validation buffer (ties favor the smaller value).
pub fn grid_search_lambda(
    train: &FeedbackBuffer,
    validation: &FeedbackBuffer,
    grid: &[f64],
    config: &LearnerConfig,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(CsbError::invalid("lambda grid must be nonempty"));
    }
    let mut best = grid[0];
    let mut best_score = f64::INFINITY;
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("grid values must not be NaN"));
    for lambda in sorted {
        let mut cfg = config.clone();
        cfg.lambda1 = lambda;
        let estimate = estimate_adjacency(train, &cfg, None)?;
        let score = validation.residual_norm_sq(&estimate.w_hat);
        if score < best_score {
            best_score = score;
            best = lambda;
        }
    }
    Ok(best)
}
