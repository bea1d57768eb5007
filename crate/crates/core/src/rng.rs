//! Deterministic, splittable random streams.
//!
//! Every stream is identified by a master seed plus a hierarchical
//! [`StreamId`] (experiment, sample index, role tag). The generator is
//! counter-based: draw `i` of a stream is a fixed mix of `key + i*gamma`, so
//! streams can be created in any order, on any worker, and always produce the
//! same sequence. Couplings that need shared randomness simply clone a stream;
//! couplings that need independence use distinct ids.

use crate::math;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline(always)]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Well-known role tags for the third component of a [`StreamId`].
pub mod role {
    /// Primary path simulation.
    pub const MAIN: u64 = 0;
    /// Partner path in an independent coupling.
    pub const PARTNER: u64 = 1;
    /// Environment (modulating process) realization.
    pub const ENV: u64 = 2;
}

/// Hierarchical stream identity: (experiment, sample index, role tag).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub experiment: u64,
    pub sample: u64,
    pub role: u64,
}

impl StreamId {
    pub fn new(experiment: u64, sample: u64, role: u64) -> Self {
        Self {
            experiment,
            sample,
            role,
        }
    }

    pub fn with_role(self, role: u64) -> Self {
        Self { role, ..self }
    }
}

/// Counts of logical variates drawn from a stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DrawCounter {
    pub exponentials: u64,
    pub uniforms: u64,
    pub poissons: u64,
}

impl DrawCounter {
    pub fn total(&self) -> u64 {
        self.exponentials + self.uniforms + self.poissons
    }

    pub fn add(&mut self, other: &DrawCounter) {
        self.exponentials += other.exponentials;
        self.uniforms += other.uniforms;
        self.poissons += other.poissons;
    }
}

/// A deterministic stream of unit exponentials, uniforms, and Poisson counts.
#[derive(Clone, Debug)]
pub struct RandomStream {
    state: u64,
    id: StreamId,
    counter: DrawCounter,
}

impl RandomStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut key = mix64(seed ^ 0xA076_1D64_78BD_642F);
        key = mix64(key.wrapping_add(id.experiment).wrapping_add(0xE703_7ED1_A0B4_28DB));
        key = mix64(key.wrapping_add(id.sample).wrapping_add(0x8EBC_6AF0_9C88_C6E3));
        key = mix64(key.wrapping_add(id.role).wrapping_add(0x5891_89C4_4574_2F2D));
        Self {
            state: key,
            id,
            counter: DrawCounter::default(),
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn counter(&self) -> DrawCounter {
        self.counter
    }

    #[inline(always)]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn draw_uniform(&mut self) -> f64 {
        self.counter.uniforms += 1;
        (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Unit exponential via inversion of a uniform on `(0, 1]`.
    #[inline]
    pub fn draw_unit_exponential(&mut self) -> f64 {
        self.counter.exponentials += 1;
        let u = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0);
        -math::ln(u)
    }

    /// Poisson variate: multiplication method below mean 10, transformed
    /// rejection (PTRS) above.
    pub fn draw_poisson(&mut self, mean: f64) -> u64 {
        debug_assert!(mean >= 0.0 && mean.is_finite());
        if mean <= 0.0 {
            return 0;
        }
        self.counter.poissons += 1;
        if mean < 10.0 {
            self.poisson_inversion(mean)
        } else {
            self.poisson_ptrs(mean)
        }
    }

    fn poisson_inversion(&mut self, mean: f64) -> u64 {
        let limit = math::exp(-mean);
        let mut prod = (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
        let mut k = 0u64;
        while prod > limit {
            prod *= (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
            k += 1;
        }
        k
    }

    // Hoermann's transformed rejection with squeeze (PTRS), valid for mean >= 10.
    fn poisson_ptrs(&mut self, mean: f64) -> u64 {
        let slam = math::sqrt(mean);
        let loglam = math::ln(mean);
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = ((self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)) - 0.5;
            let v = (self.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
            let us = 0.5 - math::abs(u);
            let k = math::floor((2.0 * a / us + b) * u + mean + 0.43);
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if math::ln(v * inv_alpha / (a / (us * us) + b))
                <= k * loglam - mean - math::ln_factorial(k as u64)
            {
                return k as u64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn identical_id_means_identical_sequence() {
        let id = StreamId::new(0, 0, role::MAIN);
        let mut a = RandomStream::new(42, id);
        let mut b = RandomStream::new(42, id);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut a = RandomStream::new(42, id);
        let mut b = RandomStream::new(42, id);
        for _ in 0..100 {
            assert_eq!(
                a.draw_unit_exponential().to_bits(),
                b.draw_unit_exponential().to_bits()
            );
        }
    }

    #[test]
    fn distinct_ids_differ() {
        let mut base = RandomStream::new(7, StreamId::new(0, 0, 0));
        for id in [
            StreamId::new(1, 0, 0),
            StreamId::new(0, 1, 0),
            StreamId::new(0, 0, 1),
        ] {
            let mut other = RandomStream::new(7, id);
            let same = (0..64).filter(|_| base.next_u64() == other.next_u64()).count();
            assert_eq!(same, 0);
            base = RandomStream::new(7, StreamId::new(0, 0, 0));
        }
        let mut reseeded = RandomStream::new(8, StreamId::new(0, 0, 0));
        let same = (0..64).filter(|_| base.next_u64() == reseeded.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn uniform_range_and_moments() {
        let mut s = RandomStream::new(42, StreamId::new(0, 0, role::MAIN));
        let n = 1_000_000;
        let mut acc = stats::Moments::new();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for _ in 0..n {
            let u = s.draw_uniform();
            min = min.min(u);
            max = max.max(u);
            acc.push(u);
        }
        assert!(min >= 0.0 && max < 1.0);
        // 3 sigma / sqrt(n) with sigma = 1/sqrt(12)
        assert!((acc.mean() - 0.5).abs() < 0.000_866, "mean {}", acc.mean());
        assert_eq!(s.counter().uniforms, n);
    }

    #[test]
    fn exponential_moments_and_ks() {
        let mut s = RandomStream::new(42, StreamId::new(0, 1, role::MAIN));
        let mut acc = stats::Moments::new();
        for _ in 0..1_000_000 {
            let e = s.draw_unit_exponential();
            assert!(e > 0.0);
            acc.push(e);
        }
        assert!((acc.mean() - 1.0).abs() < 0.003, "mean {}", acc.mean());

        let mut s = RandomStream::new(42, StreamId::new(0, 2, role::MAIN));
        let n = 100_000;
        let mut data: alloc::vec::Vec<f64> =
            (0..n).map(|_| s.draw_unit_exponential()).collect();
        let d = stats::ks_one_sample(&mut data, |x| 1.0 - (-x).exp());
        let crit = stats::ks_one_sample_threshold(n, 0.001);
        assert!(d < crit, "KS {d} vs {crit}");
    }

    #[test]
    fn poisson_zero_mean_and_moments() {
        let mut s = RandomStream::new(42, StreamId::new(0, 3, role::MAIN));
        assert_eq!(s.draw_poisson(0.0), 0);

        let mut acc = stats::Moments::new();
        for _ in 0..1_000_000 {
            acc.push(s.draw_poisson(4.0) as f64);
        }
        assert!((acc.mean() - 4.0).abs() < 0.006, "mean {}", acc.mean());
        assert!((acc.variance() - 4.0).abs() < 0.03, "var {}", acc.variance());
    }

    #[test]
    fn poisson_chi_square_small_mean() {
        let mut s = RandomStream::new(42, StreamId::new(0, 4, role::MAIN));
        let n = 100_000usize;
        let mean = 4.0;
        let mut observed = [0u64; 16];
        for _ in 0..n {
            let k = s.draw_poisson(mean) as usize;
            observed[k.min(15)] += 1;
        }
        let mut expected = [0.0f64; 16];
        let mut cum = 0.0;
        for (k, e) in expected.iter_mut().enumerate().take(15) {
            let p = (-mean + k as f64 * mean.ln() - math::ln_factorial(k as u64)).exp();
            *e = p * n as f64;
            cum += p;
        }
        expected[15] = (1.0 - cum) * n as f64;
        assert!(stats::chi_square_gof_passes(&observed, &expected, 0.001));
    }

    #[test]
    fn poisson_chi_square_large_mean() {
        let mut s = RandomStream::new(42, StreamId::new(0, 5, role::MAIN));
        let n = 100_000usize;
        let mean = 50.0;
        let lo = 10usize;
        let hi = 95usize;
        let mut observed = vec![0u64; hi - lo + 2];
        for _ in 0..n {
            let k = s.draw_poisson(mean) as usize;
            let idx = k.clamp(lo, hi + 1) - lo;
            observed[idx] += 1;
        }
        let mut expected = vec![0.0f64; hi - lo + 2];
        let mut cum = 0.0;
        for k in lo..=hi {
            let p = (-mean + k as f64 * mean.ln() - math::ln_factorial(k as u64)).exp();
            expected[k - lo] = p * n as f64;
            cum += p;
        }
        // everything outside [lo, hi] pooled into the last cell (left tail is
        // negligible at this mean)
        expected[hi - lo + 1] = (1.0 - cum) * n as f64;
        assert!(stats::chi_square_gof_passes(&observed, &expected, 0.001));

        let mut acc = stats::Moments::new();
        let mut s = RandomStream::new(9, StreamId::new(0, 6, role::MAIN));
        for _ in 0..200_000 {
            acc.push(s.draw_poisson(50.0) as f64);
        }
        assert!((acc.mean() - 50.0).abs() < 0.05, "mean {}", acc.mean());
        assert!((acc.variance() - 50.0).abs() < 1.0, "var {}", acc.variance());
    }

    #[test]
    fn streams_uncorrelated() {
        let n = 100_000;
        let mut pairs = Vec::new();
        for i in 0..4u64 {
            for j in (i + 1)..4u64 {
                pairs.push((i, j));
            }
        }
        for (i, j) in pairs {
            let mut a = RandomStream::new(1234, StreamId::new(9, i, role::MAIN));
            let mut b = RandomStream::new(1234, StreamId::new(9, j, role::MAIN));
            let xs: Vec<f64> = (0..n).map(|_| a.draw_uniform()).collect();
            let ys: Vec<f64> = (0..n).map(|_| b.draw_uniform()).collect();
            let r = stats::correlation(&xs, &ys);
            assert!(r.abs() < 0.01, "streams {i},{j}: r = {r}");
        }
    }
}
