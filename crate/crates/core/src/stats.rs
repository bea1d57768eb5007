//! Streaming moment accumulators and the test statistics used throughout the
//! crate: two-sample and one-sample Kolmogorov–Smirnov, chi-square
//! goodness-of-fit, and one-sided variance comparisons.
//!
//! `Moments` merges associatively, so chunked accumulation gives the same
//! result in any chunk partition as long as chunks are merged in a fixed
//! order. That is what keeps estimator output independent of worker count.

use alloc::vec::Vec;

use crate::math;

/// Upper-tail standard normal quantile at 0.95.
pub const Z_95: f64 = 1.6448536269514722;
/// Upper-tail standard normal quantile at 0.99.
pub const Z_99: f64 = 2.3263478740408408;
/// Two-sided 95% half-width multiplier.
pub const Z_TWO_SIDED_95: f64 = 1.959963984540054;

/// Running mean and central moments up to order four.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    /// Combine two accumulators; exact in the same sense as pushing the
    /// concatenated samples in order (up to float rounding of the merge).
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        Moments {
            n: self.n + other.n,
            mean,
            m2,
            m3,
            m4,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n as f64 - 1.0)
        }
    }

    pub fn std_dev(&self) -> f64 {
        math::sqrt(self.variance())
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            math::sqrt(self.variance() / self.n as f64)
        }
    }

    /// Fourth central moment estimate.
    pub fn fourth_central(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.m4 / self.n as f64
        }
    }

    /// Large-sample variance of the sample variance, `(mu4 - s^4)/n`.
    pub fn variance_of_variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let s2 = self.variance();
        let v = (self.fourth_central() - s2 * s2) / self.n as f64;
        v.max(0.0)
    }
}

/// One-sided z statistic for the claim `scale_a * Var_a < Var_b`.
///
/// Positive values support the claim; compare against [`Z_95`] or [`Z_99`].
pub fn variance_less_than_z(a: &Moments, scale_a: f64, b: &Moments) -> f64 {
    let diff = b.variance() - scale_a * a.variance();
    let se = math::sqrt(scale_a * scale_a * a.variance_of_variance() + b.variance_of_variance());
    if se == 0.0 {
        if diff > 0.0 {
            f64::INFINITY
        } else if diff < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    } else {
        diff / se
    }
}

/// Two-sample Kolmogorov–Smirnov statistic. Sorts its inputs in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        let diff = math::abs(i as f64 / na - j as f64 / nb);
        if diff > d {
            d = diff;
        }
    }
    d
}

/// Asymptotic two-sample KS rejection threshold at level `alpha`.
pub fn ks_two_sample_threshold(n: usize, m: usize, alpha: f64) -> f64 {
    let c = math::sqrt(-math::ln(alpha / 2.0) / 2.0);
    c * math::sqrt((n + m) as f64 / (n as f64 * m as f64))
}

/// One-sample KS statistic against a continuous CDF. Sorts input in place.
pub fn ks_one_sample<F: Fn(f64) -> f64>(data: &mut [f64], cdf: F) -> f64 {
    assert!(!data.is_empty());
    data.sort_unstable_by(f64::total_cmp);
    let n = data.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in data.iter().enumerate() {
        let f = cdf(x);
        let lo = math::abs(f - i as f64 / n);
        let hi = math::abs((i + 1) as f64 / n - f);
        d = d.max(lo).max(hi);
    }
    d
}

/// Asymptotic one-sample KS rejection threshold at level `alpha`.
pub fn ks_one_sample_threshold(n: usize, alpha: f64) -> f64 {
    math::sqrt(-math::ln(alpha / 2.0) / 2.0) / math::sqrt(n as f64)
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn reg_gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series representation
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if math::abs(term) < math::abs(sum) * 1e-16 {
                break;
            }
        }
        sum * math::exp(-x + a * math::ln(x) - math::ln_gamma(a))
    } else {
        1.0 - reg_gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).
pub fn reg_gamma_q(a: f64, x: f64) -> f64 {
    if x < a + 1.0 {
        1.0 - reg_gamma_p(a, x)
    } else {
        reg_gamma_q_cf(a, x)
    }
}

// Lentz continued fraction, valid for x >= a + 1.
fn reg_gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if math::abs(d) < tiny {
            d = tiny;
        }
        c = b + an / c;
        if math::abs(c) < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if math::abs(del - 1.0) < 1e-16 {
            break;
        }
    }
    h * math::exp(-x + a * math::ln(x) - math::ln_gamma(a))
}

/// Survival function of the chi-square distribution with `dof` degrees.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    reg_gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Pearson chi-square statistic for observed counts against expected counts.
/// Bins with expected count below `min_expected` are pooled into a tail bin.
/// Returns (statistic, degrees of freedom).
pub fn chi_square_stat(observed: &[u64], expected: &[f64], min_expected: f64) -> (f64, usize) {
    assert_eq!(observed.len(), expected.len());
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pool_obs = 0.0;
    let mut pool_exp = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        pool_obs += o as f64;
        pool_exp += e;
        if pool_exp >= min_expected {
            bins.push((pool_obs, pool_exp));
            pool_obs = 0.0;
            pool_exp = 0.0;
        }
    }
    if pool_exp > 0.0 {
        if let Some(last) = bins.last_mut() {
            last.0 += pool_obs;
            last.1 += pool_exp;
        } else {
            bins.push((pool_obs, pool_exp));
        }
    }
    let stat = bins
        .iter()
        .map(|&(o, e)| {
            let d = o - e;
            d * d / e
        })
        .sum();
    (stat, bins.len().saturating_sub(1))
}

/// Chi-square goodness-of-fit test: true when the data are consistent with
/// the expected counts at significance level `alpha`.
pub fn chi_square_gof_passes(observed: &[u64], expected: &[f64], alpha: f64) -> bool {
    let (stat, dof) = chi_square_stat(observed, expected, 5.0);
    if dof == 0 {
        return true;
    }
    chi_square_sf(stat, dof) >= alpha
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / math::sqrt(va * vb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_two_pass() {
        let data: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sin() * 3.0).collect();
        let mut acc = Moments::new();
        for &x in &data {
            acc.push(x);
        }
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        let var = data.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (data.len() as f64 - 1.0);
        let mu4 = data
            .iter()
            .map(|x| (x - mean) * (x - mean) * (x - mean) * (x - mean))
            .sum::<f64>()
            / data.len() as f64;
        assert!((acc.mean() - mean).abs() < 1e-12);
        assert!((acc.variance() - var).abs() < 1e-12);
        assert!((acc.fourth_central() - mu4).abs() < 1e-9);
    }

    #[test]
    fn moments_merge_equals_sequential() {
        let data: Vec<f64> = (0..997).map(|i| ((i * 13 % 89) as f64).cos() * 2.5 + 1.0).collect();
        let mut whole = Moments::new();
        for &x in &data {
            whole.push(x);
        }
        for split in [1, 100, 500, 996] {
            let (l, r) = data.split_at(split);
            let mut a = Moments::new();
            let mut b = Moments::new();
            l.iter().for_each(|&x| a.push(x));
            r.iter().for_each(|&x| b.push(x));
            let m = a.merge(&b);
            assert_eq!(m.count(), whole.count());
            assert!((m.mean() - whole.mean()).abs() < 1e-12);
            assert!((m.variance() - whole.variance()).abs() < 1e-10);
            assert!((m.fourth_central() - whole.fourth_central()).abs() < 1e-8);
        }
    }

    #[test]
    fn gamma_p_plus_q_is_one() {
        for &(a, x) in &[(0.5, 0.3), (2.0, 1.0), (3.5, 7.0), (10.0, 3.0), (8.0, 30.0)] {
            let p = reg_gamma_p(a, x);
            let q = reg_gamma_q(a, x);
            assert!((p + q - 1.0).abs() < 1e-12, "a={a} x={x}: p={p} q={q}");
        }
    }

    #[test]
    fn chi_square_sf_reference_values() {
        // chi2 with 2 dof is Exp(1/2): sf(x) = exp(-x/2)
        for x in [0.5, 1.0, 3.0, 10.0] {
            assert!((chi_square_sf(x, 2) - (-x / 2.0f64).exp()).abs() < 1e-12);
        }
        // 97.5th percentile of chi2(1) is 5.02389; sf there is 0.025
        assert!((chi_square_sf(5.023886187314888, 1) - 0.025).abs() < 1e-9);
    }

    #[test]
    fn ks_two_sample_identical_samples_zero() {
        let mut a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let mut b = a.clone();
        assert_eq!(ks_two_sample(&mut a, &mut b), 0.0);
    }

    #[test]
    fn ks_two_sample_disjoint_is_one() {
        let mut a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut b: Vec<f64> = (100..150).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&mut a, &mut b), 1.0);
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        // Points at (i + 0.5)/n have D = 0.5/n against U[0,1].
        let n = 100;
        let mut data: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_one_sample(&mut data, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }
}
