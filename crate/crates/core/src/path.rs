//! Right-continuous piecewise-constant trajectories and the observer
//! interface the simulators report through.
//!
//! Simulators push events to a [`PathObserver`] instead of materializing
//! paths, so estimators over millions of events run in constant memory; the
//! [`Recorder`] observer rebuilds a full [`TrajectoryPath`] when one is
//! wanted.

use alloc::vec::Vec;

/// A complete simulated path: jump times, firing channels, and the state
/// after each jump. Phantom (thinning-rejected) events are not recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPath {
    pub initial_state: Vec<i64>,
    pub t_end: f64,
    pub jump_times: Vec<f64>,
    /// Zero-based channel index per jump.
    pub channel_indices: Vec<usize>,
    states: Vec<i64>,
    species: usize,
}

impl TrajectoryPath {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    pub fn species_count(&self) -> usize {
        self.species
    }

    /// State after jump `i`.
    pub fn state_after(&self, i: usize) -> &[i64] {
        &self.states[i * self.species..(i + 1) * self.species]
    }

    pub fn final_state(&self) -> &[i64] {
        if self.jump_times.is_empty() {
            &self.initial_state
        } else {
            self.state_after(self.jump_count() - 1)
        }
    }

    /// State at an arbitrary time in `[0, t_end]` (right-continuous).
    pub fn state_at(&self, t: f64) -> &[i64] {
        let idx = self.jump_times.partition_point(|&s| s <= t);
        if idx == 0 {
            &self.initial_state
        } else {
            self.state_after(idx - 1)
        }
    }

    pub fn states_iter(&self) -> impl Iterator<Item = &[i64]> {
        self.states.chunks_exact(self.species)
    }
}

/// Receiver for simulation events. States passed by reference are only valid
/// during the call.
pub trait PathObserver {
    fn on_start(&mut self, _x0: &[i64]) {}
    fn on_jump(&mut self, _t: f64, _channel: usize, _x_after: &[i64]) {}
    /// Aggregated state change at a leap-step boundary (tau-leap paths only).
    fn on_batch(&mut self, _t: f64, _x_after: &[i64]) {}
    fn on_end(&mut self, _t_end: f64, _x_final: &[i64]) {}
}

/// Observer that ignores everything.
pub struct NullObserver;

impl PathObserver for NullObserver {}

/// Channel marker used by [`Recorder`] for aggregated tau-leap updates.
pub const BATCH_CHANNEL: usize = usize::MAX;

/// Observer that rebuilds the full trajectory. Aggregated tau-leap updates
/// are recorded with [`BATCH_CHANNEL`] as the channel index.
#[derive(Default)]
pub struct Recorder {
    initial: Vec<i64>,
    times: Vec<f64>,
    channels: Vec<usize>,
    states: Vec<i64>,
    t_end: f64,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_path(self) -> TrajectoryPath {
        let species = self.initial.len();
        TrajectoryPath {
            initial_state: self.initial,
            t_end: self.t_end,
            jump_times: self.times,
            channel_indices: self.channels,
            states: self.states,
            species,
        }
    }
}

impl PathObserver for Recorder {
    fn on_start(&mut self, x0: &[i64]) {
        self.initial = x0.to_vec();
    }

    fn on_jump(&mut self, t: f64, channel: usize, x_after: &[i64]) {
        self.times.push(t);
        self.channels.push(channel);
        self.states.extend_from_slice(x_after);
    }

    fn on_batch(&mut self, t: f64, x_after: &[i64]) {
        self.times.push(t);
        self.channels.push(BATCH_CHANNEL);
        self.states.extend_from_slice(x_after);
    }

    fn on_end(&mut self, t_end: f64, _x: &[i64]) {
        self.t_end = t_end;
    }
}

/// Observer sampling one species on a fixed time grid.
pub struct GridSampler {
    grid: Vec<f64>,
    species: usize,
    values: Vec<f64>,
    cursor: usize,
    last: f64,
}

impl GridSampler {
    pub fn new(grid: Vec<f64>, species: usize) -> Self {
        debug_assert!(grid.windows(2).all(|w| w[0] <= w[1]));
        let n = grid.len();
        Self { grid, species, values: Vec::with_capacity(n), cursor: 0, last: 0.0 }
    }

    /// Grid values after the run completes.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    fn fill_before(&mut self, t: f64) {
        while self.cursor < self.grid.len() && self.grid[self.cursor] < t {
            self.values.push(self.last);
            self.cursor += 1;
        }
    }
}

impl PathObserver for GridSampler {
    fn on_start(&mut self, x0: &[i64]) {
        self.last = x0[self.species] as f64;
        self.values.clear();
        self.cursor = 0;
    }

    fn on_jump(&mut self, t: f64, _channel: usize, x_after: &[i64]) {
        self.fill_before(t);
        self.last = x_after[self.species] as f64;
    }

    fn on_batch(&mut self, t: f64, x_after: &[i64]) {
        self.fill_before(t);
        self.last = x_after[self.species] as f64;
    }

    fn on_end(&mut self, t_end: f64, x: &[i64]) {
        self.fill_before(t_end);
        self.last = x[self.species] as f64;
        // grid points at exactly t_end take the final state
        while self.cursor < self.grid.len() {
            self.values.push(self.last);
            self.cursor += 1;
        }
    }
}

/// Observer recording the final state only.
#[derive(Default)]
pub struct Endpoint {
    state: Vec<i64>,
}

impl Endpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &[i64] {
        &self.state
    }
}

impl PathObserver for Endpoint {
    fn on_end(&mut self, _t: f64, x: &[i64]) {
        self.state = x.to_vec();
    }
}

/// Observer recording the first time a species hits zero.
pub struct FirstZero {
    species: usize,
    pub hit_time: Option<f64>,
}

impl FirstZero {
    pub fn new(species: usize) -> Self {
        Self { species, hit_time: None }
    }

    /// Indicator of the hit happening strictly before `deadline`.
    pub fn hit_before(&self, deadline: f64) -> bool {
        matches!(self.hit_time, Some(t) if t < deadline)
    }
}

impl PathObserver for FirstZero {
    fn on_start(&mut self, x0: &[i64]) {
        self.hit_time = if x0[self.species] == 0 { Some(0.0) } else { None };
    }

    fn on_jump(&mut self, t: f64, _channel: usize, x_after: &[i64]) {
        if self.hit_time.is_none() && x_after[self.species] == 0 {
            self.hit_time = Some(t);
        }
    }
}

/// Fan a simulation out to two observers.
pub struct Tee<'a, A: PathObserver, B: PathObserver>(pub &'a mut A, pub &'a mut B);

impl<A: PathObserver, B: PathObserver> PathObserver for Tee<'_, A, B> {
    fn on_start(&mut self, x0: &[i64]) {
        self.0.on_start(x0);
        self.1.on_start(x0);
    }

    fn on_jump(&mut self, t: f64, channel: usize, x_after: &[i64]) {
        self.0.on_jump(t, channel, x_after);
        self.1.on_jump(t, channel, x_after);
    }

    fn on_batch(&mut self, t: f64, x_after: &[i64]) {
        self.0.on_batch(t, x_after);
        self.1.on_batch(t, x_after);
    }

    fn on_end(&mut self, t_end: f64, x: &[i64]) {
        self.0.on_end(t_end, x);
        self.1.on_end(t_end, x);
    }
}

/// Counters describing one simulation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimCounters {
    /// Candidate events proposed by thinning (accepted + phantom).
    pub candidates: u64,
    /// Recorded jumps (state changes).
    pub jumps: u64,
    /// Thinning rejections (the phantom channel fired).
    pub phantoms: u64,
    /// Window/certificate escapes (time advanced with no candidate).
    pub escapes: u64,
    /// Species clipped at zero while applying a tau-leap batch.
    pub clips: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_path() -> TrajectoryPath {
        let mut r = Recorder::new();
        r.on_start(&[5, 0]);
        r.on_jump(1.0, 0, &[6, 0]);
        r.on_jump(2.5, 1, &[6, 1]);
        r.on_end(4.0, &[6, 1]);
        r.into_path()
    }

    #[test]
    fn recorder_roundtrip() {
        let p = demo_path();
        assert_eq!(p.jump_count(), 2);
        assert_eq!(p.initial_state, &[5, 0]);
        assert_eq!(p.state_after(0), &[6, 0]);
        assert_eq!(p.final_state(), &[6, 1]);
        assert_eq!(p.t_end, 4.0);
    }

    #[test]
    fn state_at_is_right_continuous() {
        let p = demo_path();
        assert_eq!(p.state_at(0.0), &[5, 0]);
        assert_eq!(p.state_at(0.999), &[5, 0]);
        assert_eq!(p.state_at(1.0), &[6, 0]);
        assert_eq!(p.state_at(2.5), &[6, 1]);
        assert_eq!(p.state_at(4.0), &[6, 1]);
    }

    #[test]
    fn grid_sampler_piecewise_constant() {
        let mut g = GridSampler::new(alloc::vec![0.0, 0.5, 1.0, 2.0, 2.5, 4.0], 0);
        g.on_start(&[5, 0]);
        g.on_jump(1.0, 0, &[6, 0]);
        g.on_jump(2.5, 1, &[7, 0]);
        g.on_end(4.0, &[7, 0]);
        assert_eq!(g.values(), &[5.0, 5.0, 6.0, 6.0, 7.0, 7.0]);
    }

    #[test]
    fn first_zero_records_first_hit_only() {
        let mut f = FirstZero::new(1);
        f.on_start(&[3, 2]);
        f.on_jump(1.0, 0, &[3, 1]);
        f.on_jump(2.0, 0, &[3, 0]);
        f.on_jump(3.0, 1, &[3, 1]);
        f.on_jump(4.0, 0, &[3, 0]);
        assert_eq!(f.hit_time, Some(2.0));
        assert!(f.hit_before(10.0));
        assert!(!f.hit_before(1.5));
    }
}
