//! Per-coordinate normal distribution truncated to `[0, 1]`.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Inverse-CDF sample of a normal with location `mu` and scale `sigma`,
/// truncated to `[0, 1]`. `sigma == 0` degenerates to `mu`.
pub fn sample<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> f64 {
    debug_assert!((0.0..=1.0).contains(&mu));
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return mu;
    }
    let std = standard();
    let lo = std.cdf((0.0 - mu) / sigma);
    let hi = std.cdf((1.0 - mu) / sigma);
    let u: f64 = rng.random();
    let q = std.inverse_cdf(lo + u * (hi - lo));
    (mu + sigma * q).clamp(0.0, 1.0)
}

/// Analytic mean of the truncated distribution:
/// `mu + sigma * (phi(a) - phi(b)) / (Phi(b) - Phi(a))` with
/// `a = -mu/sigma`, `b = (1-mu)/sigma`.
pub fn mean(mu: f64, sigma: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&mu));
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 {
        return mu;
    }
    let std = standard();
    let a = (0.0 - mu) / sigma;
    let b = (1.0 - mu) / sigma;
    let mass = std.cdf(b) - std.cdf(a);
    (mu + sigma * (pdf(a) - pdf(b)) / mass).clamp(0.0, 1.0)
}

fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_scale_is_degenerate() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(sample(0.3, 0.0, &mut rng), 0.3);
        assert_eq!(sample(0.7, 0.0, &mut rng), 0.7);
        assert_eq!(mean(0.3, 0.0), 0.3);
    }

    #[test]
    fn samples_stay_in_unit_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let s = sample(0.9, 0.5, &mut rng);
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn symmetric_truncation_keeps_mean() {
        // Interval [0, 1] symmetric around mu = 0.5.
        assert!((mean(0.5, 0.1) - 0.5).abs() < 1e-12);
        // Monte-Carlo check within 3 standard errors.
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let n = 200_000;
        let sum: f64 = (0..n).map(|_| sample(0.5, 0.1, &mut rng)).sum();
        let se = 0.1 / (n as f64).sqrt();
        assert!((sum / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn asymmetric_truncation_shifts_mean_inward() {
        // mu close to 1: truncation pulls the mean below mu.
        let m = mean(0.95, 0.2);
        assert!(m < 0.95 && m > 0.5);
        // Monte-Carlo agreement.
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 200_000;
        let sum: f64 = (0..n).map(|_| sample(0.95, 0.2, &mut rng)).sum();
        assert!((sum / n as f64 - m).abs() < 3.0 * 0.2 / (n as f64).sqrt());
    }
}
