//! The modulating environment: a finite-state Markov process whose current
//! value scales a channel's rate.
//!
//! Environment realizations are generated up front on `[0, T]` and then read
//! as a frozen piecewise-constant function of time while trajectories are
//! simulated against them.

use alloc::vec::Vec;
use core::fmt;

use crate::rng::RandomStream;

/// Definition of the modulating process: levels, embedded-chain transition
/// probabilities, and the starting level.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentSpec {
    levels: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    initial: usize,
}

/// Errors constructing an [`EnvironmentSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum EnvError {
    Empty,
    BadMatrixShape,
    RowNotStochastic { row: usize },
    NonzeroDiagonal { row: usize },
    InitialOutOfRange,
    NegativeLevel { index: usize },
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::Empty => write!(f, "environment needs at least one level"),
            EnvError::BadMatrixShape => write!(f, "transition matrix shape mismatch"),
            EnvError::RowNotStochastic { row } => {
                write!(f, "transition row {row} does not sum to 1")
            }
            EnvError::NonzeroDiagonal { row } => {
                write!(f, "transition row {row} has nonzero diagonal")
            }
            EnvError::InitialOutOfRange => write!(f, "initial level index out of range"),
            EnvError::NegativeLevel { index } => write!(f, "level {index} is negative"),
        }
    }
}

impl core::error::Error for EnvError {}

impl EnvironmentSpec {
    pub fn new(
        levels: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        initial: usize,
    ) -> Result<Self, EnvError> {
        if levels.is_empty() {
            return Err(EnvError::Empty);
        }
        if let Some(i) = levels.iter().position(|&v| v < 0.0) {
            return Err(EnvError::NegativeLevel { index: i });
        }
        if initial >= levels.len() {
            return Err(EnvError::InitialOutOfRange);
        }
        if levels.len() > 1 {
            if transitions.len() != levels.len() {
                return Err(EnvError::BadMatrixShape);
            }
            for (r, row) in transitions.iter().enumerate() {
                if row.len() != levels.len() {
                    return Err(EnvError::BadMatrixShape);
                }
                if row[r] != 0.0 {
                    return Err(EnvError::NonzeroDiagonal { row: r });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(EnvError::RowNotStochastic { row: r });
                }
            }
        }
        Ok(Self { levels, transitions, initial })
    }

    /// A constant environment pinned at one value.
    pub fn constant(level: f64) -> Self {
        Self { levels: alloc::vec![level], transitions: Vec::new(), initial: 0 }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Largest level; the global bound used by modulated rates.
    pub fn max_level(&self) -> f64 {
        self.levels.iter().copied().fold(0.0, f64::max)
    }

    /// Generate a realization on `[0, horizon]`: unit exponential holding
    /// times, next level chosen from the transition row.
    pub fn simulate(&self, horizon: f64, stream: &mut RandomStream) -> EnvironmentPath {
        let mut switch_times = Vec::new();
        let mut values = Vec::new();
        let mut level = self.initial;
        values.push(self.levels[level]);
        if self.levels.len() > 1 {
            let mut t = stream.draw_unit_exponential();
            while t <= horizon {
                let u = stream.draw_uniform();
                let row = &self.transitions[level];
                let mut cum = 0.0;
                let mut next = row.len() - 1;
                for (j, &p) in row.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        next = j;
                        break;
                    }
                }
                level = next;
                switch_times.push(t);
                values.push(self.levels[level]);
                t += stream.draw_unit_exponential();
            }
        }
        EnvironmentPath { switch_times, values, horizon, level_max: self.max_level() }
    }
}

/// One realization of the environment: a right-continuous piecewise-constant
/// function on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentPath {
    switch_times: Vec<f64>,
    values: Vec<f64>,
    horizon: f64,
    level_max: f64,
}

impl EnvironmentPath {
    /// A degenerate constant path (useful for tests).
    pub fn constant(value: f64, horizon: f64) -> Self {
        Self { switch_times: Vec::new(), values: alloc::vec![value], horizon, level_max: value }
    }

    /// Largest level of the generating state space, the global bound used by
    /// modulated rates.
    pub fn level_max(&self) -> f64 {
        self.level_max
    }

    /// Override the claimed level maximum. Only useful for exercising the
    /// simulators' certificate-violation handling; a claim below the real
    /// maximum produces invalid bounds.
    pub fn with_claimed_level_max(mut self, level_max: f64) -> Self {
        self.level_max = level_max;
        self
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Value at time `t` (right-continuous).
    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        // switch lists are short; partition_point is a binary search
        let idx = self.switch_times.partition_point(|&s| s <= t);
        self.values[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{role, StreamId};
    use crate::stats;

    fn three_level() -> EnvironmentSpec {
        EnvironmentSpec::new(
            alloc::vec![0.5, 1.5, 5.0],
            alloc::vec![
                alloc::vec![0.0, 0.5, 0.5],
                alloc::vec![0.5, 0.0, 0.5],
                alloc::vec![0.5, 0.5, 0.0],
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn validation_errors() {
        assert_eq!(
            EnvironmentSpec::new(alloc::vec![], alloc::vec![], 0).unwrap_err(),
            EnvError::Empty
        );
        let bad_diag = EnvironmentSpec::new(
            alloc::vec![1.0, 2.0],
            alloc::vec![alloc::vec![0.5, 0.5], alloc::vec![1.0, 0.0]],
            0,
        );
        assert_eq!(bad_diag.unwrap_err(), EnvError::NonzeroDiagonal { row: 0 });
        let bad_row = EnvironmentSpec::new(
            alloc::vec![1.0, 2.0],
            alloc::vec![alloc::vec![0.0, 0.9], alloc::vec![1.0, 0.0]],
            0,
        );
        assert_eq!(bad_row.unwrap_err(), EnvError::RowNotStochastic { row: 0 });
    }

    #[test]
    fn degenerate_one_level_is_constant() {
        let spec = EnvironmentSpec::constant(2.5);
        let mut s = RandomStream::new(1, StreamId::new(0, 0, role::ENV));
        let path = spec.simulate(10.0, &mut s);
        assert!(path.switch_times().is_empty());
        assert_eq!(path.value_at(0.0), 2.5);
        assert_eq!(path.value_at(9.9), 2.5);
    }

    #[test]
    fn first_transition_frequencies() {
        // from level 0 (value 0.5) the next value is 1.5 or 5 with equal odds
        let spec = three_level();
        let n = 100_000;
        let mut to_mid = 0u64;
        for i in 0..n {
            let mut s = RandomStream::new(77, StreamId::new(0, i, role::ENV));
            let path = spec.simulate(100.0, &mut s);
            assert_eq!(path.values()[0], 0.5);
            match path.values().get(1) {
                Some(&1.5) => to_mid += 1,
                Some(&5.0) => {}
                other => panic!("unexpected second value {other:?}"),
            }
        }
        // 3 sigma of Binomial(n, 1/2)
        let tol = 3.0 * 0.5 * (n as f64).sqrt();
        assert!((to_mid as f64 - n as f64 / 2.0).abs() < tol, "{to_mid}");
    }

    #[test]
    fn switch_count_is_poisson() {
        // unit exponential holding times make the number of switches by T
        // Poisson(T)
        let spec = three_level();
        let horizon = 2.0;
        let n = 100_000usize;
        let mut observed = [0u64; 12];
        for i in 0..n {
            let mut s = RandomStream::new(3, StreamId::new(1, i as u64, role::ENV));
            let path = spec.simulate(horizon, &mut s);
            observed[path.switch_times().len().min(11)] += 1;
        }
        let mut expected = [0.0f64; 12];
        let mut cum = 0.0;
        for (k, e) in expected.iter_mut().enumerate().take(11) {
            let p = (-horizon + k as f64 * horizon.ln() - crate::math::ln_factorial(k as u64))
                .exp();
            *e = p * n as f64;
            cum += p;
        }
        expected[11] = (1.0 - cum) * n as f64;
        assert!(stats::chi_square_gof_passes(&observed, &expected, 0.001));
    }

    #[test]
    fn lookup_is_right_continuous() {
        let path = EnvironmentPath {
            switch_times: alloc::vec![1.0, 2.0],
            values: alloc::vec![10.0, 20.0, 30.0],
            horizon: 3.0,
            level_max: 30.0,
        };
        assert_eq!(path.value_at(0.0), 10.0);
        assert_eq!(path.value_at(1.0), 20.0);
        assert_eq!(path.value_at(1.999), 20.0);
        assert_eq!(path.value_at(2.0), 30.0);
    }
}
