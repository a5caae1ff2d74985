//! Small statistical toolbox backing the verification battery: Kolmogorov–
//! Smirnov tests (asymptotic p-values with the Stephens small-sample
//! correction), a chi-square independence test, and binomial confidence
//! intervals (normal approximation with a Wilson fallback at low counts).

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Kolmogorov distribution survival function
/// Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²), clamped to [0, 1].
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    /// Sup-distance between the compared distribution functions.
    pub statistic: f64,
    /// Asymptotic p-value with the Stephens correction.
    pub p_value: f64,
    /// Effective sample size entering the asymptotics.
    pub n_effective: f64,
}

fn ks_p_value(statistic: f64, n_effective: f64) -> f64 {
    let sqrt_n = n_effective.sqrt();
    kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic)
}

/// Two-sample KS test. Panics if either sample is empty.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> KsResult {
    assert!(!xs.is_empty() && !ys.is_empty(), "empty KS sample");
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64) * (m as f64) / (n as f64 + m as f64);
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n_effective: n_eff,
    }
}

/// One-sample KS test of `xs` against the continuous CDF `cdf`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    assert!(!xs.is_empty(), "empty KS sample");
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (k, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
        n_effective: n,
    }
}

/// Result of a chi-square independence test on a contingency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Smallest expected cell count — the usual validity diagnostic.
    pub min_expected: f64,
}

/// Pearson chi-square test of independence for a rows × cols count table.
/// Empty rows/columns are dropped; returns `None` when fewer than two rows
/// or columns remain (no test possible).
pub fn chi_square_independence(table: &[Vec<u64>]) -> Option<ChiSquareResult> {
    let n_cols = table.first()?.len();
    let row_kept: Vec<usize> = (0..table.len())
        .filter(|&r| table[r].iter().sum::<u64>() > 0)
        .collect();
    let col_kept: Vec<usize> = (0..n_cols)
        .filter(|&c| table.iter().map(|row| row[c]).sum::<u64>() > 0)
        .collect();
    if row_kept.len() < 2 || col_kept.len() < 2 {
        return None;
    }
    let row_sums: Vec<f64> = row_kept
        .iter()
        .map(|&r| col_kept.iter().map(|&c| table[r][c] as f64).sum())
        .collect();
    let col_sums: Vec<f64> = col_kept
        .iter()
        .map(|&c| row_kept.iter().map(|&r| table[r][c] as f64).sum())
        .collect();
    let total: f64 = row_sums.iter().sum();
    let mut statistic = 0.0;
    let mut min_expected = f64::INFINITY;
    for (a, &r) in row_kept.iter().enumerate() {
        for (b, &c) in col_kept.iter().enumerate() {
            let expected = row_sums[a] * col_sums[b] / total;
            min_expected = min_expected.min(expected);
            let diff = table[r][c] as f64 - expected;
            statistic += diff * diff / expected;
        }
    }
    let dof = (row_kept.len() - 1) * (col_kept.len() - 1);
    let p_value = ChiSquared::new(dof as f64)
        .map(|d| 1.0 - d.cdf(statistic))
        .unwrap_or(1.0);
    Some(ChiSquareResult {
        statistic,
        dof,
        p_value,
        min_expected,
    })
}

/// Two-sided standard-normal quantile for a given confidence level, e.g.
/// `z_for_level(0.95) ≈ 1.96`.
pub fn z_for_level(level: f64) -> f64 {
    let level = level.clamp(0.0, 1.0 - 1e-12);
    Normal::standard().inverse_cdf(0.5 * (1.0 + level))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    assert!(n > 0, "empty sample");
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Normal-approximation interval p̂ ± z·SE, clamped to [0, 1].
pub fn normal_interval(p_hat: f64, stderr: f64, z: f64) -> (f64, f64) {
    ((p_hat - z * stderr).max(0.0), (p_hat + z * stderr).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_sf_matches_reference_values() {
        // 2·(e^{−2} − e^{−8} + e^{−18} − …) at λ = 1.
        assert!((kolmogorov_sf(1.0) - 0.2699996716773545).abs() < 1e-9);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(0.2) > 0.999999);
        assert!(kolmogorov_sf(3.0) < 1e-7);
    }

    #[test]
    fn ks_two_sample_accepts_identical_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..3000).map(|_| rng.random::<f64>()).collect();
        let r = ks_two_sample(&xs, &ys);
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn ks_two_sample_rejects_a_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let ys: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() + 0.15).collect();
        let r = ks_two_sample(&xs, &ys);
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
    }

    #[test]
    fn ks_two_sample_handles_ties() {
        // Heavily tied samples from the same discrete law should not reject.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..3000)
            .map(|_| (rng.random::<f64>() * 5.0).floor())
            .collect();
        let ys: Vec<f64> = (0..3000)
            .map(|_| (rng.random::<f64>() * 5.0).floor())
            .collect();
        let r = ks_two_sample(&xs, &ys);
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
    }

    #[test]
    fn ks_one_sample_accepts_uniform_draws_and_rejects_squared_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let uniform_cdf = |x: f64| x.clamp(0.0, 1.0);
        assert!(ks_one_sample(&xs, uniform_cdf).p_value > 0.01);
        let squared: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!(ks_one_sample(&squared, uniform_cdf).p_value < 1e-10);
    }

    #[test]
    fn chi_square_detects_dependence_and_tolerates_independence() {
        // Independent rows: both split destinations ~1:1.
        let same = vec![vec![500u64, 520], vec![480, 470]];
        let r = chi_square_independence(&same).unwrap();
        assert!(r.p_value > 0.01);
        assert_eq!(r.dof, 1);
        // Dependent rows: opposite preferences.
        let diff = vec![vec![800u64, 200], vec![210, 790]];
        let r = chi_square_independence(&diff).unwrap();
        assert!(r.p_value < 1e-12);
    }

    #[test]
    fn chi_square_degenerate_tables_yield_none() {
        assert!(chi_square_independence(&[vec![5, 5]]).is_none());
        // A zero column collapses the table to one effective column.
        assert!(chi_square_independence(&[vec![5, 0], vec![7, 0]]).is_none());
        assert!(chi_square_independence(&[]).is_none());
    }

    #[test]
    fn z_quantiles_match_the_usual_table() {
        assert!((z_for_level(0.95) - 1.959964).abs() < 1e-5);
        assert!((z_for_level(0.99) - 2.575829).abs() < 1e-5);
    }

    #[test]
    fn wilson_interval_matches_a_hand_computed_case() {
        // k = 5, n = 20, z = 1.96: center 0.29028, half-width 0.17842.
        let (lo, hi) = wilson_interval(5, 20, 1.96);
        assert!((lo - 0.111862).abs() < 1e-4, "lo = {lo}");
        assert!((hi - 0.468708).abs() < 1e-4, "hi = {hi}");
        // Degenerate counts stay inside [0, 1] and have positive width.
        let (lo, hi) = wilson_interval(0, 50, 2.0);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.2);
    }

    #[test]
    fn wilson_and_normal_intervals_agree_for_large_counts() {
        let n = 100_000u64;
        let k = 25_000u64;
        let p = k as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let (wl, wh) = wilson_interval(k, n, 1.96);
        let (nl, nh) = normal_interval(p, se, 1.96);
        assert!((wl - nl).abs() < 1e-4);
        assert!((wh - nh).abs() < 1e-4);
    }
}
