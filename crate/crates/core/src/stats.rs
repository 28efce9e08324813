//! Rank-sum testing, effect sizes, bootstrap intervals and multiple-comparison
//! correction.

use crate::rng;
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Exact null distribution is enumerated when `n1 * n2` is at most this.
pub const EXACT_LIMIT: usize = 400;

pub const DEFAULT_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub u_statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub method: PValueMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    pub cohens_d: f64,
    pub cles: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub resamples: usize,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

fn nonempty(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Empty(format!("sample `{name}` is empty")));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("sample `{name}` has non-finite values")));
    }
    Ok(())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n - 1` denominator; exactly 0 for constant samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&v| v == xs[0]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Average (mid) ranks, 1-based.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Mann-Whitney U test.
///
/// `U = #{a_i > b_j} + 0.5 #{a_i = b_j}`. The p-value comes from the exact
/// permutation distribution of the (tie-aware) rank sum when
/// `n1 * n2 <= 400`, else from the normal approximation with tie-corrected
/// variance and continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    nonempty("a", a)?;
    nonempty("b", b)?;
    let (n1, n2) = (a.len(), b.len());
    let combined: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&combined);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;

    let (p_value, method) = if n1 * n2 <= EXACT_LIMIT {
        (exact_p(&ranks, n1, rank_sum), PValueMethod::Exact)
    } else {
        (normal_p(&combined, u, n1, n2), PValueMethod::NormalApprox)
    };
    Ok(TestResult {
        u_statistic: u,
        p_value: p_value.clamp(0.0, 1.0),
        n1,
        n2,
        method,
    })
}

fn exact_p(ranks: &[f64], n1: usize, rank_sum: f64) -> f64 {
    // Doubled midranks are integers, so rank sums can index a table.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=n1).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    let n = ranks.len();
    let center = (n1 * (n + 1)) as i64;
    let observed = ((2.0 * rank_sum).round() as i64 - center).abs();
    let (mut extreme, mut total) = (0.0, 0.0);
    for (s, &c) in counts[n1].iter().enumerate() {
        total += c;
        if (s as i64 - center).abs() >= observed {
            extreme += c;
        }
    }
    extreme / total
}

fn normal_p(combined: &[f64], u: f64, n1: usize, n2: usize) -> f64 {
    let n = (n1 + n2) as f64;
    let mut sorted = combined.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let n1n2 = (n1 * n2) as f64;
    let var = n1n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - n1n2 / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2)
}

/// `(mean(a) - mean(b)) / pooled_sd` with the degrees-of-freedom pooled
/// variance. Zero pooled variance yields 0 for equal means, else a signed infinity.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    nonempty("a", a)?;
    nonempty("b", b)?;
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let diff = mean(a) - mean(b);
    let dof = n1 + n2 - 2.0;
    let pooled = if dof > 0.0 {
        (((n1 - 1.0) * variance(a) + (n2 - 1.0) * variance(b)) / dof).sqrt()
    } else {
        0.0
    };
    Ok(if pooled > 0.0 {
        diff / pooled
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    })
}

/// Common-language effect size `P(A > B) + 0.5 P(A = B)` over all cross pairs.
pub fn cles(a: &[f64], b: &[f64]) -> Result<f64> {
    nonempty("a", a)?;
    nonempty("b", b)?;
    let mut sorted_b = b.to_vec();
    sorted_b.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &x in a {
        let below = sorted_b.partition_point(|&v| v < x);
        let not_above = sorted_b.partition_point(|&v| v <= x);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (a.len() * b.len()) as f64)
}

pub fn effect_sizes(a: &[f64], b: &[f64]) -> Result<EffectSizes> {
    Ok(EffectSizes {
        cohens_d: cohens_d(a, b)?,
        cles: cles(a, b)?,
    })
}

/// Linear interpolation between order statistics (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for `statistic`.
///
/// Resample `i` draws from sub-stream `i` of `seed`, so the interval is the
/// same for any number of worker threads.
pub fn bootstrap_ci<F>(samples: &[f64], statistic: F, level: f64, resamples: usize, seed: u64) -> Result<Interval>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if samples.len() < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 samples"));
    }
    if !(level > 0.0 && level < 1.0) || resamples == 0 {
        return Err(Error::invalid("bootstrap needs level in (0, 1) and resamples >= 1"));
    }
    let n = samples.len();
    let mut stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, i| {
                let mut rng = rng::substream(seed, i as u64);
                for slot in buf.iter_mut() {
                    *slot = samples[rng.random_range(0..n)];
                }
                statistic(buf)
            },
        )
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        lo: quantile_sorted(&stats, tail),
        hi: quantile_sorted(&stats, 1.0 - tail),
        level,
        resamples,
    })
}

pub fn bonferroni_threshold(alpha: f64, m: usize) -> f64 {
    alpha / m.max(1) as f64
}

/// `p_i < alpha / m` for each of the `m` p-values.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let threshold = bonferroni_threshold(alpha, p_values.len());
    p_values.iter().map(|&p| p < threshold).collect()
}

/// Mean after dropping `floor(trim * n)` values from each tail.
pub fn trimmed_mean(samples: &[f64], trim_fraction: f64) -> Result<f64> {
    nonempty("samples", samples)?;
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(Error::invalid("trim fraction must lie in [0, 0.5)"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (trim_fraction * sorted.len() as f64).floor() as usize;
    Ok(mean(&sorted[k..sorted.len() - k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force U over all cross pairs.
    fn u_brute(a: &[f64], b: &[f64]) -> f64 {
        let mut u = 0.0;
        for x in a {
            for y in b {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        u
    }

    #[test]
    fn u_separated() {
        let r = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.u_statistic, 9.0);
        // Exact: only 1 of C(6,3) = 20 arrangements is this extreme on each side.
        assert!((r.p_value - 0.1).abs() < 1e-12, "{}", r.p_value);
        assert_eq!(r.method, PValueMethod::Exact);
    }

    #[test]
    fn u_identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.u_statistic, 8.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn u_single_pair() {
        assert_eq!(mann_whitney_u(&[1.0], &[2.0]).unwrap().u_statistic, 0.0);
        assert!(mann_whitney_u(&[], &[2.0]).is_err());
    }

    #[test]
    fn exact_and_normal_roughly_agree() {
        let a: Vec<f64> = (0..20).map(|i| i as f64 * 0.7).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 * 0.5 + 3.0).collect();
        let exact = mann_whitney_u(&a, &b).unwrap();
        let mut combined = a.clone();
        combined.extend(&b);
        let approx = normal_p(&combined, exact.u_statistic, 20, 20);
        assert!((exact.p_value - approx).abs() < 0.02, "{} vs {approx}", exact.p_value);
    }

    #[test]
    fn large_samples_use_normal_approx() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 60.0).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.method, PValueMethod::NormalApprox);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn cohens_d_cases() {
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), 0.0);
        // Means differ by 1, both variances 1 -> d = 1.
        assert!((cohens_d(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        // a = (0, 2): mean 1, var 2; b = (0, 0): mean 0, var 0.
        // pooled = sqrt((1 * 2 + 1 * 0) / 2) = 1, so d = 1.
        assert!((cohens_d(&[0.0, 2.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cles_cases() {
        let a = [0.3, 0.1, 0.2];
        assert_eq!(cles(&a, &a).unwrap(), 0.5);
        assert_eq!(cles(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
        let (x, y) = ([1.0, 2.0, 2.0, 7.0], [2.0, 3.0, 0.5]);
        let u = mann_whitney_u(&x, &y).unwrap().u_statistic;
        assert!((cles(&x, &y).unwrap() - u / 12.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_constant_and_seeded() {
        let c = bootstrap_ci(&[2.0; 10], mean, 0.95, 500, 1).unwrap();
        assert_eq!((c.lo, c.hi), (2.0, 2.0));
        let xs: Vec<f64> = (0..30).map(|i| (i * i % 17) as f64).collect();
        let a = bootstrap_ci(&xs, mean, 0.95, 500, 9).unwrap();
        assert_eq!(a, bootstrap_ci(&xs, mean, 0.95, 500, 9).unwrap());
        assert!(a.lo <= a.hi);
        assert!(bootstrap_ci(&[1.0], mean, 0.95, 10, 0).is_err());
    }

    #[test]
    fn bootstrap_covers_true_mean() {
        use rand_distr::{Distribution, StandardNormal};
        let mut covered = 0;
        for trial in 0..200u64 {
            let mut rng = rng::seeded(10_000 + trial);
            let xs: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
            let ci = bootstrap_ci(&xs, mean, 0.95, 2000, trial).unwrap();
            if ci.contains(0.0) {
                covered += 1;
            }
        }
        assert!(covered >= 180, "covered {covered}/200");
    }

    #[test]
    fn bonferroni_cases() {
        assert!((bonferroni_threshold(0.001, 24) - 4.1666666666666665e-5).abs() < 1e-18);
        assert_eq!(bonferroni(&[0.04], 0.05), vec![true]);
        assert_eq!(bonferroni(&[1.0; 5], 0.05), vec![false; 5]);
    }

    #[test]
    fn trimmed_mean_cases() {
        let xs = [4.0, 1.0, 3.0, 8.0];
        assert_eq!(trimmed_mean(&xs, 0.0).unwrap(), 4.0);
        assert_eq!(trimmed_mean(&[0.0, 1.0, 2.0, 100.0], 0.25).unwrap(), 1.5);
    }

    #[test]
    fn trimmed_mean_matches_mean_on_symmetric_data() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng::seeded(77);
        let xs: Vec<f64> = (0..20_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let gap = (trimmed_mean(&xs, 0.1).unwrap() - mean(&xs)).abs();
        assert!(gap < 0.02, "{gap}");
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    proptest! {
        #[test]
        fn u_matches_brute_force_and_is_antisymmetric(
            a in proptest::collection::vec(-5i32..5, 1..15),
            b in proptest::collection::vec(-5i32..5, 1..15),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_u(&a, &b).unwrap();
            let ba = mann_whitney_u(&b, &a).unwrap();
            prop_assert!((ab.u_statistic - u_brute(&a, &b)).abs() < 1e-9);
            prop_assert!((ab.u_statistic + ba.u_statistic - (a.len() * b.len()) as f64).abs() < 1e-9);
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-9);
        }

        #[test]
        fn p_value_invariant_under_monotone_transform(
            a in proptest::collection::vec(-10.0f64..10.0, 2..30),
            b in proptest::collection::vec(-10.0f64..10.0, 2..30),
        ) {
            let g = |v: &f64| v.exp() * 3.0 + 1.0;
            let p = mann_whitney_u(&a, &b).unwrap().p_value;
            let ga: Vec<f64> = a.iter().map(g).collect();
            let gb: Vec<f64> = b.iter().map(g).collect();
            prop_assert!((p - mann_whitney_u(&ga, &gb).unwrap().p_value).abs() < 1e-12);
        }

        #[test]
        fn cohens_d_flips_sign(
            a in proptest::collection::vec(-10.0f64..10.0, 2..20),
            b in proptest::collection::vec(-10.0f64..10.0, 2..20),
        ) {
            let ab = cohens_d(&a, &b).unwrap();
            let ba = cohens_d(&b, &a).unwrap();
            prop_assert!((ab + ba).abs() < 1e-12);
        }
    }
}
