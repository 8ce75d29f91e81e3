//! Continuous power-law maximum-likelihood fitting.

use serde::Serialize;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub x_min: f64,
    pub n_tail: usize,
    /// Largest gap between the tail's empirical CDF and the fitted CDF.
    pub ks_distance: f64,
}

impl PowerLawFit {
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.x_min {
            0.0
        } else {
            1.0 - (x / self.x_min).powf(1.0 - self.alpha)
        }
    }
}

/// Fits `alpha` over samples `>= x_min` with the closed-form MLE
/// `1 + n / sum(ln(x / x_min))`.
pub fn fit_power_law(samples: &[f64], x_min: f64) -> Result<PowerLawFit, MetricsError> {
    if !(x_min.is_finite() && x_min > 0.0) {
        return Err(MetricsError::InvalidInput(format!("x_min must be positive (got {x_min})")));
    }
    if let Some(bad) = samples.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(MetricsError::InvalidInput(format!("sample {bad} is not a positive real")));
    }
    let mut tail: Vec<f64> = samples.iter().copied().filter(|&x| x >= x_min).collect();
    let n = tail.len();
    if n < 2 {
        return Err(MetricsError::InsufficientData(format!(
            "power-law fit needs at least 2 samples >= x_min, got {n}"
        )));
    }
    let log_sum: f64 = tail.iter().map(|x| (x / x_min).ln()).sum();
    if log_sum <= 0.0 {
        return Err(MetricsError::DegenerateTail);
    }
    let alpha = 1.0 + n as f64 / log_sum;
    tail.sort_by(f64::total_cmp);
    let mut fit = PowerLawFit { alpha, x_min, n_tail: n, ks_distance: 0.0 };
    fit.ks_distance = ks_distance(&tail, &fit);
    Ok(fit)
}

/// Sup-distance between the empirical CDF of sorted `tail` and `fit`,
/// checked on both sides of every step (ties form a single step).
fn ks_distance(tail: &[f64], fit: &PowerLawFit) -> f64 {
    let n = tail.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < tail.len() {
        let mut j = i + 1;
        while j < tail.len() && tail[j] == tail[i] {
            j += 1;
        }
        let model = fit.cdf(tail[i]);
        d = d.max((model - i as f64 / n).abs()).max((j as f64 / n - model).abs());
        i = j;
    }
    d.min(1.0)
}

/// Chooses `x_min` among the distinct sample values by minimizing the KS
/// distance, keeping at least `min_tail` samples in the tail. Quadratic in
/// the number of distinct values.
pub fn fit_power_law_scan(samples: &[f64], min_tail: usize) -> Result<PowerLawFit, MetricsError> {
    let mut candidates: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite() && *x > 0.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best: Option<PowerLawFit> = None;
    for x_min in candidates {
        let fit = match fit_power_law(samples, x_min) {
            Ok(f) if f.n_tail >= min_tail.max(2) => f,
            Ok(_) | Err(MetricsError::InsufficientData(_)) | Err(MetricsError::DegenerateTail) => break,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|b| fit.ks_distance < b.ks_distance) {
            best = Some(fit);
        }
    }
    best.ok_or_else(|| MetricsError::InsufficientData("no x_min leaves a usable tail".into()))
}

/// Fits integer counts `>= count_min` by shifting the continuous threshold to
/// `count_min - 0.5`, the usual continuity approximation for discrete data.
pub fn fit_count_power_law(counts: &[u64], count_min: u64) -> Result<PowerLawFit, MetricsError> {
    if count_min < 1 {
        return Err(MetricsError::InvalidInput("count_min must be at least 1".into()));
    }
    let samples: Vec<f64> = counts.iter().filter(|&&c| c >= count_min).map(|&c| c as f64).collect();
    fit_power_law(&samples, count_min as f64 - 0.5)
}

/// Least-squares slope of `rating_count` on download midpoint through the origin.
pub fn downloads_ratings_slope(points: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if points.len() < 2 {
        return Err(MetricsError::InsufficientData(format!("slope needs at least 2 points, got {}", points.len())));
    }
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    if sxx == 0.0 {
        return Err(MetricsError::Undefined("all download values are zero".into()));
    }
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inverse_cdf_samples(alpha: f64, x_min: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                x_min * (1.0 - u).powf(-1.0 / (alpha - 1.0))
            })
            .collect()
    }

    #[test]
    fn hand_evaluated_mle() {
        let fit = fit_power_law(&[1.0, 1.0, 1.0, 2.0, 3.0], 1.0).unwrap();
        let expected = 1.0 + 5.0 / (2f64.ln() + 3f64.ln());
        assert!((fit.alpha - expected).abs() < 1e-12);
        assert!((fit.alpha - 3.790_553).abs() < 1e-6);
        assert_eq!(fit.n_tail, 5);
        assert!(fit.ks_distance > 0.0 && fit.ks_distance <= 1.0);
    }

    #[test]
    fn ks_of_hand_example() {
        // tail {1,1,1,2,3}: at x=1 the model CDF is 0 while the ECDF jumps to 0.6
        let fit = fit_power_law(&[1.0, 1.0, 1.0, 2.0, 3.0], 1.0).unwrap();
        let f2 = fit.cdf(2.0);
        let f3 = fit.cdf(3.0);
        let expected = [0.6, (f2 - 0.6).abs(), (0.8 - f2).abs(), (f3 - 0.8).abs(), (1.0 - f3).abs()]
            .into_iter()
            .fold(0.0f64, f64::max);
        assert!((fit.ks_distance - expected).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_short_tails() {
        assert_eq!(fit_power_law(&[4.0, 4.0, 4.0], 4.0), Err(MetricsError::DegenerateTail));
        assert!(matches!(fit_power_law(&[4.0], 1.0), Err(MetricsError::InsufficientData(_))));
        assert!(matches!(fit_power_law(&[4.0, 5.0], 0.0), Err(MetricsError::InvalidInput(_))));
        assert!(matches!(fit_power_law(&[-4.0, 5.0], 1.0), Err(MetricsError::InvalidInput(_))));
    }

    #[test]
    fn recovers_alpha_from_inverse_cdf_samples() {
        let samples = inverse_cdf_samples(2.5, 1.0, 100_000, 7);
        let fit = fit_power_law(&samples, 1.0).unwrap();
        assert!((2.45..=2.55).contains(&fit.alpha), "alpha {}", fit.alpha);
        assert!(fit.ks_distance < 0.01);
    }

    #[test]
    fn lighter_tails_give_larger_alpha() {
        // x^c for c < 1 compresses the tail
        let base = inverse_cdf_samples(2.0, 1.0, 5_000, 3);
        let mut prev = f64::INFINITY;
        for c in [0.5, 0.8, 1.0, 1.5, 2.0] {
            let s: Vec<f64> = base.iter().map(|x| x.powf(c)).collect();
            let a = fit_power_law(&s, 1.0).unwrap().alpha;
            assert!(a > 1.0);
            assert!(a < prev, "alpha should shrink as tails get heavier");
            prev = a;
        }
    }

    #[test]
    fn scan_finds_threshold_of_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut samples: Vec<f64> = (0..3_000).map(|_| rng.random_range(1.0..10.0)).collect();
        samples.extend(inverse_cdf_samples(2.5, 10.0, 3_000, 12));
        let fit = fit_power_law_scan(&samples, 50).unwrap();
        assert!(fit.x_min >= 8.0 && fit.x_min <= 14.0, "x_min {}", fit.x_min);
        assert!((fit.alpha - 2.5).abs() < 0.2);
    }

    #[test]
    fn slope_through_origin() {
        let pts: Vec<_> = (1..10).map(|i| (i as f64, 0.5 * i as f64)).collect();
        assert!((downloads_ratings_slope(&pts).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(downloads_ratings_slope(&[(0.0, 1.0), (0.0, 2.0)]), Err(MetricsError::Undefined(_))));
    }

    proptest::proptest! {
        #[test]
        fn alpha_always_exceeds_one(samples in proptest::collection::vec(1.0f64..1e6, 2..200)) {
            let x_min = samples.iter().copied().fold(f64::INFINITY, f64::min);
            if let Ok(fit) = fit_power_law(&samples, x_min) {
                proptest::prop_assert!(fit.alpha > 1.0);
            }
        }

        #[test]
        fn heavier_tails_give_smaller_alpha(
            seed in 0u64..1_000,
            alpha in 1.5f64..3.5,
            c1 in 0.2f64..3.0,
            dc in 0.05f64..2.0,
        ) {
            let base = inverse_cdf_samples(alpha, 1.0, 500, seed);
            let fit = |c: f64| {
                let s: Vec<f64> = base.iter().map(|x| x.powf(c)).collect();
                fit_power_law(&s, 1.0).unwrap().alpha
            };
            proptest::prop_assert!(fit(c1) > fit(c1 + dc));
        }
    }
}
