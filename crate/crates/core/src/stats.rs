//! Exact binomial intervals.

use statrs::function::beta::{beta_reg, inv_beta_reg};

/// Clopper-Pearson interval at confidence `level` for `hits` successes in
/// `trials` trials.
pub fn clopper_pearson(hits: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials > 0 && hits <= trials, "need 0 <= hits <= trials, trials > 0");
    assert!(level > 0.0 && level < 1.0);
    let alpha = 1.0 - level;
    let (x, n) = (hits as f64, trials as f64);
    let low = if hits == 0 {
        0.0
    } else {
        inv_beta_reg(x, n - x + 1.0, alpha / 2.0)
    };
    let high = if hits == trials {
        1.0
    } else {
        inv_beta_reg(x + 1.0, n - x, 1.0 - alpha / 2.0)
    };
    (low, high)
}

/// `P(X ≤ k)` for `X ~ Binomial(trials, p)`.
pub fn binomial_cdf(k: u64, trials: u64, p: f64) -> f64 {
    if k >= trials || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    // P(X ≤ k) = I_{1−p}(n − k, k + 1)
    beta_reg((trials - k) as f64, (k + 1) as f64, 1.0 - p)
}

/// Central acceptance region `[low, high]` of hit counts with at least
/// `level` probability under `Binomial(trials, p)`: each tail outside the
/// region has probability at most `(1 − level)/2`.
pub fn binomial_acceptance(p: f64, trials: u64, level: f64) -> (u64, u64) {
    let tail = (1.0 - level) / 2.0;
    // largest low with P(X < low) ≤ tail
    let low = search(trials, |k| k == 0 || binomial_cdf(k - 1, trials, p) <= tail);
    // smallest high with P(X > high) ≤ tail
    let high = trials - search(trials, |j| 1.0 - binomial_cdf(trials - j, trials, p) <= tail);
    (low, high)
}

/// Largest `k ∈ [0, trials]` with `ok(k)`, for a predicate that holds on a prefix.
fn search(trials: u64, ok: impl Fn(u64) -> bool) -> u64 {
    let (mut lo, mut hi) = (0u64, trials);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_reference_values() {
        // scipy.stats.beta.ppf
        let (lo, hi) = clopper_pearson(5, 100, 0.95);
        assert!((lo - 0.016431879182052155).abs() < 1e-10, "{lo}");
        assert!((hi - 0.11283491110546275).abs() < 1e-10, "{hi}");
        assert_eq!(clopper_pearson(0, 10, 0.95).0, 0.0);
        assert!((clopper_pearson(0, 10, 0.95).1 - 0.3084971078187608).abs() < 1e-10);
        assert_eq!(clopper_pearson(10, 10, 0.95).1, 1.0);
    }

    #[test]
    fn cdf_matches_direct_sum() {
        let (n, p) = (20u64, 0.3f64);
        let mut pmf_sum = 0.0;
        let mut choose = 1.0f64;
        for k in 0..=n {
            if k > 0 {
                choose *= (n - k + 1) as f64 / k as f64;
            }
            pmf_sum += choose * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            assert!((binomial_cdf(k, n, p) - pmf_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn acceptance_region_tails() {
        let (n, p, level) = (100_000u64, 0.01, 0.999);
        let (lo, hi) = binomial_acceptance(p, n, level);
        assert!(lo < 1000 && hi > 1000);
        assert!(binomial_cdf(lo - 1, n, p) <= 0.0005);
        assert!(binomial_cdf(lo, n, p) > 0.0005);
        assert!(1.0 - binomial_cdf(hi, n, p) <= 0.0005);
        assert!(1.0 - binomial_cdf(hi - 1, n, p) > 0.0005);
        assert_eq!(binomial_acceptance(0.0, 50, 0.999), (0, 0));
        assert_eq!(binomial_acceptance(1.0, 50, 0.999), (50, 50));
    }
}
