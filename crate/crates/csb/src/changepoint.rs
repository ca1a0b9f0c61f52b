//! Per-arm Generalized Likelihood Ratio change-point detection for
//! reward streams bounded in `[0, 1]`.
//!
//! The detector keeps every sample since its last reset and tests, at
//! each push, whether some two-segment split of the stream is better
//! explained by two Bernoulli means than by one:
//! `sup_a a*kl(mean(1..a), mean(1..n)) + (n-a)*kl(mean(a+1..n), mean(1..n))`
//! against the threshold `gamma(n, delta)`.

use crate::error::{CsbError, Result};

/// Threshold function variant for the GLR test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// `ln(3 n sqrt(n) / delta)` — the variant used in all experiments.
    #[default]
    Practical,
    /// Conservative theoretical threshold,
    /// `2 T(ln(3 n sqrt(n) / delta) / 2) + 6 ln(1 + ln n)` with
    /// `T(x) = x + 4 ln(1 + x + sqrt(2x))`.
    Theoretical,
}

/// Binary relative entropy `kl(x, y)` between Bernoulli means, with the
/// convention `0 log 0 = 0`. `y` must be strictly inside `(0, 1)`.
pub fn kl_bernoulli(x: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(CsbError::invalid("kl_bernoulli: x must lie in [0,1]"));
    }
    if y <= 0.0 || y >= 1.0 {
        return Err(CsbError::invalid("kl_bernoulli: y must lie in (0,1)"));
    }
    let mut kl = 0.0;
    if x > 0.0 {
        kl += x * (x / y).ln();
    }
    if x < 1.0 {
        kl += (1.0 - x) * ((1.0 - x) / (1.0 - y)).ln();
    }
    Ok(kl.max(0.0))
}

/// GLR detection threshold `gamma(n, delta)`.
pub fn glr_threshold(n: usize, delta: f64, mode: ThresholdMode) -> f64 {
    let n = n as f64;
    let practical = (3.0 * n * n.sqrt() / delta).ln();
    match mode {
        ThresholdMode::Practical => practical,
        ThresholdMode::Theoretical => {
            let x = practical / 2.0;
            let calibrated = x + 4.0 * (1.0 + x + (2.0 * x).sqrt()).ln();
            2.0 * calibrated + 6.0 * (1.0 + n.ln()).ln()
        }
    }
}

/// Single-arm GLR detector state.
#[derive(Debug, Clone)]
pub struct GlrDetector {
    samples: Vec<f64>,
    /// `prefix_sums[i]` = sum of the first `i` samples.
    prefix_sums: Vec<f64>,
    delta: f64,
    mode: ThresholdMode,
    /// Test every `stride`-th split point (1 = exact scan).
    stride: usize,
}

impl GlrDetector {
    pub fn new(delta: f64, mode: ThresholdMode) -> Result<Self> {
        Self::with_stride(delta, mode, 1)
    }

    pub fn with_stride(delta: f64, mode: ThresholdMode, stride: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) || delta == 0.0 {
            return Err(CsbError::invalid("delta must lie in (0,1)"));
        }
        if stride == 0 {
            return Err(CsbError::invalid("stride must be positive"));
        }
        Ok(GlrDetector {
            samples: Vec::new(),
            prefix_sums: vec![0.0],
            delta,
            mode,
            stride,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn mean(&self, from: usize, to: usize) -> f64 {
        // Mean of samples[from..to], half-open, 0-based.
        (self.prefix_sums[to] - self.prefix_sums[from]) / (to - from) as f64
    }

    /// The GLR statistic: supremum over tested split points. Defined as 0
    /// when fewer than two samples are held or all samples are identical
    /// (overall mean in {0, 1} included).
    pub fn statistic(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let overall = self.mean(0, n);
        if overall <= 0.0 || overall >= 1.0 {
            return 0.0;
        }
        let mut sup = 0.0;
        let mut alpha = 1;
        while alpha < n {
            let left = self.mean(0, alpha);
            let right = self.mean(alpha, n);
            let stat = alpha as f64 * kl_unchecked(left, overall)
                + (n - alpha) as f64 * kl_unchecked(right, overall);
            if stat > sup {
                sup = stat;
            }
            alpha += self.stride;
        }
        sup
    }

    /// Runs the test on the currently held samples.
    pub fn test(&self) -> bool {
        let n = self.samples.len();
        if n < 2 {
            return false;
        }
        self.statistic() >= glr_threshold(n, self.delta, self.mode)
    }

    /// Appends a sample and reports whether a change fired.
    pub fn push_sample(&mut self, s: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&s) {
            return Err(CsbError::invalid("samples must lie in [0,1]"));
        }
        self.samples.push(s);
        self.prefix_sums
            .push(self.prefix_sums.last().unwrap() + s);
        Ok(self.test())
    }

    /// Clears the sample buffer; the confidence level is retained.
    pub fn reset(&mut self) {
        self.samples.clear();
        self.prefix_sums.clear();
        self.prefix_sums.push(0.0);
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

// Interior overall mean is guaranteed by the caller; segment means may
// still hit {0, 1}, which the 0 log 0 convention handles.
fn kl_unchecked(x: f64, y: f64) -> f64 {
    let mut kl = 0.0;
    if x > 0.0 {
        kl += x * (x / y).ln();
    }
    if x < 1.0 {
        kl += (1.0 - x) * ((1.0 - x) / (1.0 - y)).ln();
    }
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn kl_examples() {
        assert_eq!(kl_bernoulli(0.5, 0.5).unwrap(), 0.0);
        assert!((kl_bernoulli(0.0, 0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        // kl(0.2, 0.8) = 0.6 ln 4
        assert!((kl_bernoulli(0.2, 0.8).unwrap() - 0.6 * 4.0_f64.ln()).abs() < 1e-12);
        assert!(kl_bernoulli(0.3, 0.0).is_err());
        assert!(kl_bernoulli(0.3, 1.0).is_err());
        assert!(kl_bernoulli(1.5, 0.5).is_err());
    }

    #[test]
    fn threshold_examples() {
        let g = glr_threshold(2, 0.05, ThresholdMode::Practical);
        assert!((g - (3.0 * 2.0 * 2.0_f64.sqrt() / 0.05).ln()).abs() < 1e-12);
        assert!((g - 5.1341).abs() < 1e-4);
        let g100 = glr_threshold(100, 0.01, ThresholdMode::Practical);
        assert!((g100 - (3.0e5_f64).ln()).abs() < 1e-12);
        assert!((g100 - 12.6115).abs() < 1e-4);
    }

    #[test]
    fn threshold_monotone() {
        for mode in [ThresholdMode::Practical, ThresholdMode::Theoretical] {
            assert!(glr_threshold(10, 0.05, mode) < glr_threshold(11, 0.05, mode));
            assert!(glr_threshold(10, 0.05, mode) > glr_threshold(10, 0.1, mode));
        }
    }

    #[test]
    fn theoretical_dominates_practical() {
        for n in [2usize, 10, 100, 10_000] {
            assert!(
                glr_threshold(n, 0.05, ThresholdMode::Theoretical)
                    > glr_threshold(n, 0.05, ThresholdMode::Practical)
            );
        }
    }

    #[test]
    fn constant_stream_never_fires() {
        let mut d = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        for _ in 0..10 {
            assert!(!d.push_sample(0.5).unwrap());
        }
        assert_eq!(d.statistic(), 0.0);
    }

    #[test]
    fn two_sample_statistic_below_threshold() {
        let mut d = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        d.push_sample(0.0).unwrap();
        let fired = d.push_sample(1.0).unwrap();
        assert!(!fired);
        // Statistic is 2 ln 2 at the only split.
        assert!((d.statistic() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn strong_shift_fires() {
        let mut d = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        let mut fired = false;
        for _ in 0..300 {
            fired |= d.push_sample(0.0).unwrap();
        }
        assert!(!fired);
        for _ in 0..300 {
            fired |= d.push_sample(1.0).unwrap();
        }
        assert!(fired);
        // At the balanced split the statistic is 600 ln 2.
        assert!((d.statistic() - 600.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert!(d.statistic() >= glr_threshold(600, 0.05, ThresholdMode::Practical));
    }

    #[test]
    fn degenerate_overall_mean_gives_zero_statistic() {
        let mut d = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        for _ in 0..50 {
            d.push_sample(1.0).unwrap();
        }
        assert_eq!(d.statistic(), 0.0);
        assert!(!d.test());
    }

    #[test]
    fn out_of_range_sample_rejected() {
        let mut d = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        assert!(d.push_sample(1.5).is_err());
        assert!(d.push_sample(-0.1).is_err());
    }

    #[test]
    fn reset_clears_state_and_is_idempotent() {
        let mut d = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        for _ in 0..20 {
            d.push_sample(0.3).unwrap();
        }
        d.reset();
        assert!(!d.test());
        assert_eq!(d.len(), 0);
        d.reset();
        assert_eq!(d.len(), 0);
        assert!(!d.push_sample(0.9).unwrap()); // n < 2
    }

    #[test]
    fn statistic_matches_naive_recomputation() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut d = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        for _ in 0..200 {
            d.push_sample(rng.random::<f64>()).unwrap();
        }
        let naive = naive_statistic(d.samples());
        assert!((d.statistic() - naive).abs() < 1e-9);
    }

    #[test]
    fn statistic_invariant_under_reversal() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let samples: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
        let mut fwd = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        let mut rev = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        for &s in &samples {
            fwd.push_sample(s).unwrap();
        }
        for &s in samples.iter().rev() {
            rev.push_sample(s).unwrap();
        }
        assert!((fwd.statistic() - rev.statistic()).abs() < 1e-9);
    }

    #[test]
    fn stride_statistic_lower_bounds_exact() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let samples: Vec<f64> =
            (0..300).map(|i| if i < 150 { rng.random::<f64>() * 0.4 } else { 0.6 + rng.random::<f64>() * 0.4 }).collect();
        let mut exact = GlrDetector::new(0.05, ThresholdMode::Practical).unwrap();
        let mut strided = GlrDetector::with_stride(0.05, ThresholdMode::Practical, 7).unwrap();
        for &s in &samples {
            exact.push_sample(s).unwrap();
            strided.push_sample(s).unwrap();
        }
        assert!(strided.statistic() <= exact.statistic() + 1e-12);
        assert!(strided.statistic() > 0.0);
    }

    /// Naive oracle: recompute the statistic from raw samples without
    /// prefix sums.
    fn naive_statistic(samples: &[f64]) -> f64 {
        let n = samples.len();
        let overall = samples.iter().sum::<f64>() / n as f64;
        if overall <= 0.0 || overall >= 1.0 {
            return 0.0;
        }
        let mut sup: f64 = 0.0;
        for alpha in 1..n {
            let left = samples[..alpha].iter().sum::<f64>() / alpha as f64;
            let right = samples[alpha..].iter().sum::<f64>() / (n - alpha) as f64;
            let stat = alpha as f64 * kl_unchecked(left, overall)
                + (n - alpha) as f64 * kl_unchecked(right, overall);
            sup = sup.max(stat);
        }
        sup
    }
}
