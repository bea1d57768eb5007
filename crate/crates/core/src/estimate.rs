//! Monte Carlo estimators built on the couplings: centered finite-difference
//! parametric sensitivities and unbiased multilevel expectation estimation.
//!
//! All sampling is chunked: per-sample streams derive from (seed, level tag,
//! sample index), chunks of samples are evaluated independently, and chunk
//! accumulators merge in chunk order. The result is bit-identical for any
//! worker count, which the [`Executor`] abstraction exploits.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::coupling::{couple_pair_with, CouplingStrategy};
use crate::exact::{simulate_extrande_with, ExtrandeOptions, SimError};
use crate::models::System;
use crate::network::ModelError;
use crate::path::{Endpoint, FirstZero, GridSampler, PathObserver};
use crate::rng::{role, DrawCounter, RandomStream, StreamId};
use crate::stats::{Moments, Z_TWO_SIDED_95};
use crate::tau::{couple_exact_tau_with, couple_tau_leap_pair_with, simulate_tau_leap_with};

/// Samples per work unit; chunk results merge in chunk order so the final
/// reduction is independent of how chunks were scheduled.
const CHUNK: u64 = 64;

/// Runs indexed work units, returning results in index order.
pub trait Executor: Sync {
    fn map_collect<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T>;
}

/// Single-threaded executor.
pub struct SerialExecutor;

impl Executor for SerialExecutor {
    fn map_collect<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        (0..n).map(f).collect()
    }
}

/// Path functional evaluated per sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Functional {
    /// Value of one species at the horizon.
    Endpoint { species: usize },
    /// Values of one species on a time grid.
    Grid { species: usize, grid: Vec<f64> },
    /// Indicator that a species hits zero strictly before `deadline`.
    ExtinctionBefore { species: usize, deadline: f64 },
}

impl Functional {
    pub fn dimension(&self) -> usize {
        match self {
            Functional::Grid { grid, .. } => grid.len(),
            _ => 1,
        }
    }

    /// Coordinate labels for report rows: grid times, or the horizon.
    pub fn coordinates(&self, horizon: f64) -> Vec<f64> {
        match self {
            Functional::Grid { grid, .. } => grid.clone(),
            _ => vec![horizon],
        }
    }
}

// Observer evaluating a functional on one path.
enum Probe {
    Endpoint { species: usize, obs: Endpoint },
    Grid(GridSampler),
    Zero { deadline: f64, obs: FirstZero },
}

impl Probe {
    fn new(f: &Functional) -> Probe {
        match f {
            Functional::Endpoint { species } => {
                Probe::Endpoint { species: *species, obs: Endpoint::new() }
            }
            Functional::Grid { species, grid } => {
                Probe::Grid(GridSampler::new(grid.clone(), *species))
            }
            Functional::ExtinctionBefore { species, deadline } => {
                Probe::Zero { deadline: *deadline, obs: FirstZero::new(*species) }
            }
        }
    }

    fn write_values(&self, out: &mut [f64]) {
        match self {
            Probe::Endpoint { species, obs } => out[0] = obs.state()[*species] as f64,
            Probe::Grid(g) => out.copy_from_slice(g.values()),
            Probe::Zero { deadline, obs } => {
                out[0] = if obs.hit_before(*deadline) { 1.0 } else { 0.0 }
            }
        }
    }
}

impl PathObserver for Probe {
    fn on_start(&mut self, x0: &[i64]) {
        match self {
            Probe::Endpoint { obs, .. } => obs.on_start(x0),
            Probe::Grid(g) => g.on_start(x0),
            Probe::Zero { obs, .. } => obs.on_start(x0),
        }
    }

    fn on_jump(&mut self, t: f64, channel: usize, x: &[i64]) {
        match self {
            Probe::Endpoint { obs, .. } => obs.on_jump(t, channel, x),
            Probe::Grid(g) => g.on_jump(t, channel, x),
            Probe::Zero { obs, .. } => obs.on_jump(t, channel, x),
        }
    }

    fn on_batch(&mut self, t: f64, x: &[i64]) {
        match self {
            Probe::Endpoint { obs, .. } => obs.on_batch(t, x),
            Probe::Grid(g) => g.on_batch(t, x),
            Probe::Zero { obs, .. } => obs.on_batch(t, x),
        }
    }

    fn on_end(&mut self, t: f64, x: &[i64]) {
        match self {
            Probe::Endpoint { obs, .. } => obs.on_end(t, x),
            Probe::Grid(g) => g.on_end(t, x),
            Probe::Zero { obs, .. } => obs.on_end(t, x),
        }
    }
}

/// One reported quantity.
#[derive(Clone, Copy, Debug, Default)]
pub struct PointStat {
    pub estimate: f64,
    pub variance: f64,
    pub half_width: f64,
    pub n: u64,
}

impl PointStat {
    fn from_moments(m: &Moments) -> PointStat {
        PointStat {
            estimate: m.mean(),
            variance: m.variance(),
            half_width: Z_TWO_SIDED_95 * m.sem(),
            n: m.count(),
        }
    }
}

/// Report of a scalar or grid estimator.
#[derive(Clone, Debug, Default)]
pub struct EstimatorReport {
    /// (coordinate, stat) pairs: grid times for grid functionals, the horizon
    /// otherwise.
    pub points: Vec<(f64, PointStat)>,
    pub draws: DrawCounter,
    pub clips: u64,
    /// Filled by callers that can measure time.
    pub wall_seconds: Option<f64>,
}

impl EstimatorReport {
    pub fn scalar(&self) -> &PointStat {
        &self.points[0].1
    }
}

/// A centered finite-difference sensitivity job over a parameterized model
/// family.
pub struct SensitivityJob<'a, F: Fn(f64) -> Result<System, ModelError> + Sync> {
    pub family: &'a F,
    pub theta: f64,
    pub h: f64,
    pub functional: Functional,
    pub coupling: CouplingStrategy,
    pub n: u64,
    /// Certification window for the simulators; `None` certifies to the
    /// horizon.
    pub window: Option<f64>,
}

// Accumulator carried per chunk and merged in chunk order.
struct ChunkAccum {
    moments: Vec<Moments>,
    draws: DrawCounter,
    clips: u64,
}

impl ChunkAccum {
    fn new(dim: usize) -> Self {
        Self { moments: vec![Moments::new(); dim], draws: DrawCounter::default(), clips: 0 }
    }

    fn merge(&self, other: &ChunkAccum) -> Self {
        debug_assert_eq!(self.moments.len(), other.moments.len());
        let mut out = ChunkAccum {
            moments: self
                .moments
                .iter()
                .zip(&other.moments)
                .map(|(a, b)| a.merge(b))
                .collect(),
            draws: self.draws,
            clips: self.clips + other.clips,
        };
        out.draws.add(&other.draws);
        out
    }
}

fn chunk_ranges(n: u64) -> usize {
    n.div_ceil(CHUNK) as usize
}

fn chunk_span(chunk: usize, n: u64) -> core::ops::Range<u64> {
    let lo = chunk as u64 * CHUNK;
    lo..(lo + CHUNK).min(n)
}

fn merge_chunks(
    chunks: Vec<Result<ChunkAccum, SimError>>,
    dim: usize,
) -> Result<ChunkAccum, SimError> {
    let mut acc = ChunkAccum::new(dim);
    for c in chunks {
        acc = acc.merge(&c?);
    }
    Ok(acc)
}

/// Experiment tags separating the random streams of different estimators.
pub mod experiment {
    pub const SENSITIVITY: u64 = 1;
    pub const DIRECT: u64 = 2;
    /// Multilevel levels use `MLMC_BASE + level index`; the corrector level
    /// is `MLMC_BASE + tau level count`.
    pub const MLMC_BASE: u64 = 16;
}

/// Mean and variance of the per-pair difference quotient
/// `(f(X^{theta+h/2}) - f(X^{theta-h/2})) / h` over `n` coupled pairs.
pub fn estimate_sensitivity<F: Fn(f64) -> Result<System, ModelError> + Sync>(
    job: &SensitivityJob<'_, F>,
    seed: u64,
    exec: &impl Executor,
) -> Result<EstimatorReport, SimError> {
    assert!(job.h > 0.0, "perturbation must be positive");
    let sys_x = (job.family)(job.theta + job.h / 2.0)?;
    let sys_z = (job.family)(job.theta - job.h / 2.0)?;
    let dim = job.functional.dimension();
    let opts = ExtrandeOptions { window: job.window };
    let horizon = sys_x.horizon;

    let chunks = exec.map_collect(chunk_ranges(job.n), |chunk| -> Result<ChunkAccum, SimError> {
        let mut acc = ChunkAccum::new(dim);
        let mut vx = vec![0.0f64; dim];
        let mut vz = vec![0.0f64; dim];
        for i in chunk_span(chunk, job.n) {
            let main = RandomStream::new(seed, StreamId::new(experiment::SENSITIVITY, i, role::MAIN));
            let partner =
                RandomStream::new(seed, StreamId::new(experiment::SENSITIVITY, i, role::PARTNER));
            let env = sys_x.environment.as_ref().map(|spec| {
                let mut es =
                    RandomStream::new(seed, StreamId::new(experiment::SENSITIVITY, i, role::ENV));
                let path = spec.simulate(horizon, &mut es);
                acc.draws.add(&es.counter());
                path
            });
            let mut probe_x = Probe::new(&job.functional);
            let mut probe_z = Probe::new(&job.functional);
            let outcome = couple_pair_with(
                job.coupling,
                &sys_x.network,
                &sys_z.network,
                env.as_ref(),
                &sys_x.initial,
                &sys_z.initial,
                horizon,
                main,
                partner,
                opts,
                &mut probe_x,
                &mut probe_z,
            )?;
            probe_x.write_values(&mut vx);
            probe_z.write_values(&mut vz);
            for ((m, &x), &z) in acc.moments.iter_mut().zip(&vx).zip(&vz) {
                m.push((x - z) / job.h);
            }
            acc.draws.add(&outcome.draws);
            acc.clips += outcome.counters_x.clips + outcome.counters_z.clips;
        }
        Ok(acc)
    });
    let acc = merge_chunks(chunks, dim)?;
    Ok(EstimatorReport {
        points: job
            .functional
            .coordinates(horizon)
            .into_iter()
            .zip(acc.moments.iter().map(PointStat::from_moments))
            .collect(),
        draws: acc.draws,
        clips: acc.clips,
        wall_seconds: None,
    })
}

/// Plain Monte Carlo over exact thinning paths with a fixed sample count.
pub fn estimate_direct_n(
    sys: &System,
    functional: &Functional,
    n: u64,
    seed: u64,
    exec: &impl Executor,
) -> Result<EstimatorReport, SimError> {
    let dim = functional.dimension();
    let chunks = exec.map_collect(chunk_ranges(n), |chunk| -> Result<ChunkAccum, SimError> {
        let mut acc = ChunkAccum::new(dim);
        let mut vals = vec![0.0f64; dim];
        for i in chunk_span(chunk, n) {
            let mut main = RandomStream::new(seed, StreamId::new(experiment::DIRECT, i, role::MAIN));
            let env = sys.environment.as_ref().map(|spec| {
                let mut es = RandomStream::new(seed, StreamId::new(experiment::DIRECT, i, role::ENV));
                let path = spec.simulate(sys.horizon, &mut es);
                acc.draws.add(&es.counter());
                path
            });
            let mut probe = Probe::new(functional);
            simulate_extrande_with(
                &sys.network,
                env.as_ref(),
                &sys.initial,
                sys.horizon,
                &mut main,
                ExtrandeOptions::default(),
                &mut probe,
            )?;
            probe.write_values(&mut vals);
            for (m, &v) in acc.moments.iter_mut().zip(&vals) {
                m.push(v);
            }
            acc.draws.add(&main.counter());
        }
        Ok(acc)
    });
    let acc = merge_chunks(chunks, dim)?;
    Ok(EstimatorReport {
        points: functional
            .coordinates(sys.horizon)
            .into_iter()
            .zip(acc.moments.iter().map(PointStat::from_moments))
            .collect(),
        draws: acc.draws,
        clips: acc.clips,
        wall_seconds: None,
    })
}

/// Plain Monte Carlo over exact thinning paths, sampling until the standard
/// error of the (scalar) estimate falls below `target_sd` or the budget is
/// exhausted. Returns the report and whether the target was reached.
pub fn estimate_direct(
    sys: &System,
    functional: &Functional,
    target_sd: f64,
    max_samples: u64,
    seed: u64,
    exec: &impl Executor,
) -> Result<(EstimatorReport, bool), SimError> {
    assert_eq!(functional.dimension(), 1, "target-sd sampling needs a scalar functional");
    assert!(target_sd > 0.0);
    let mut acc = ChunkAccum::new(1);
    let mut n_done = 0u64;
    let mut n_goal = 128u64.min(max_samples);
    let mut converged = false;
    while !converged {
        let first_chunk = n_done.div_ceil(CHUNK) as usize;
        let last_chunk = chunk_ranges(n_goal);
        let chunks = exec.map_collect(last_chunk - first_chunk, |c| -> Result<ChunkAccum, SimError> {
            let chunk = first_chunk + c;
            let mut acc = ChunkAccum::new(1);
            let mut vals = [0.0f64];
            for i in chunk_span(chunk, n_goal) {
                if i < n_done {
                    continue;
                }
                let mut main =
                    RandomStream::new(seed, StreamId::new(experiment::DIRECT, i, role::MAIN));
                let env = sys.environment.as_ref().map(|spec| {
                    let mut es =
                        RandomStream::new(seed, StreamId::new(experiment::DIRECT, i, role::ENV));
                    let path = spec.simulate(sys.horizon, &mut es);
                    acc.draws.add(&es.counter());
                    path
                });
                let mut probe = Probe::new(functional);
                simulate_extrande_with(
                    &sys.network,
                    env.as_ref(),
                    &sys.initial,
                    sys.horizon,
                    &mut main,
                    ExtrandeOptions::default(),
                    &mut probe,
                )?;
                probe.write_values(&mut vals);
                acc.moments[0].push(vals[0]);
                acc.draws.add(&main.counter());
            }
            Ok(acc)
        });
        let fresh = merge_chunks(chunks, 1)?;
        acc = acc.merge(&fresh);
        n_done = n_goal;
        let sem = acc.moments[0].sem();
        if sem <= target_sd && n_done >= 128 {
            converged = true;
        } else if n_done >= max_samples {
            break;
        } else {
            let var = acc.moments[0].variance();
            let needed = crate::math::ceil(var / (target_sd * target_sd) * 1.1) as u64 + 16;
            n_goal = needed.clamp(n_done + 64, (n_done * 4).max(256)).min(max_samples);
        }
    }
    Ok((
        EstimatorReport {
            points: vec![(sys.horizon, PointStat::from_moments(&acc.moments[0]))],
            draws: acc.draws,
            clips: acc.clips,
            wall_seconds: None,
        },
        converged,
    ))
}

/// Multilevel configuration. Level steps refine geometrically from
/// `coarsest_step` by `refinement`; the unbiasing corrector couples an exact
/// path to the finest approximate level.
#[derive(Clone, Debug)]
pub struct MlmcConfig {
    /// Refinement factor M.
    pub refinement: u32,
    /// Step of the coarsest approximate level; must divide the horizon.
    pub coarsest_step: f64,
    /// Number of approximate levels (at least 1).
    pub tau_levels: u32,
    pub horizon: f64,
    /// Target standard deviation of the combined estimator.
    pub target_sd: f64,
    /// Channels excluded from the Euler discretization.
    pub exact_channels: Vec<usize>,
    /// Pilot samples per level.
    pub pilot: u64,
    /// Per-level sample budget.
    pub max_samples: u64,
}

impl MlmcConfig {
    /// Geometric-level constructor: steps `T * M^{-l}` for
    /// `l in [coarsest_level, finest_level]`.
    pub fn from_levels(
        refinement: u32,
        coarsest_level: u32,
        finest_level: u32,
        horizon: f64,
        target_sd: f64,
    ) -> Self {
        assert!(finest_level >= coarsest_level);
        let coarsest_step = horizon / crate::math::powi(refinement as f64, coarsest_level as i32);
        MlmcConfig {
            refinement,
            coarsest_step,
            tau_levels: finest_level - coarsest_level + 1,
            horizon,
            target_sd,
            exact_channels: Vec::new(),
            pilot: 100,
            max_samples: 100_000_000,
        }
    }

    /// Step of approximate level `idx` (0 = coarsest).
    pub fn step_at(&self, idx: u32) -> f64 {
        self.coarsest_step / crate::math::powi(self.refinement as f64, idx as i32)
    }

    pub fn finest_step(&self) -> f64 {
        self.step_at(self.tau_levels - 1)
    }
}

/// One level of a multilevel report.
#[derive(Clone, Debug)]
pub struct LevelStat {
    pub label: String,
    pub stat: PointStat,
    pub draws: DrawCounter,
}

/// Multilevel estimator report.
#[derive(Clone, Debug)]
pub struct MlmcReport {
    pub levels: Vec<LevelStat>,
    pub estimate: f64,
    /// Standard deviation of the combined estimator.
    pub sd: f64,
    pub half_width: f64,
    pub draws: DrawCounter,
    pub clips: u64,
    pub converged: bool,
    pub wall_seconds: Option<f64>,
}

// One level's sampling state during estimation.
struct LevelRun {
    label: String,
    experiment: u64,
    kind: LevelKind,
    acc: ChunkAccum,
    n: u64,
}

enum LevelKind {
    Plain { step: f64 },
    Pair { coarse_step: f64 },
    Corrector { step: f64 },
}

/// Unbiased multilevel estimation of an endpoint expectation: coarse plain
/// samples, pairwise level corrections, and an exact-vs-finest corrector,
/// each with independent streams, with sample counts allocated by the
/// measured variance/cost profile until the combined standard deviation
/// reaches the target.
pub fn estimate_mlmc(
    sys: &System,
    functional: &Functional,
    cfg: &MlmcConfig,
    seed: u64,
    exec: &impl Executor,
) -> Result<MlmcReport, SimError> {
    if !matches!(functional, Functional::Endpoint { .. }) {
        return Err(SimError::Model(ModelError::BadParameter {
            what: "multilevel estimation supports endpoint functionals",
        }));
    }
    assert!(cfg.tau_levels >= 1);
    let mut levels: Vec<LevelRun> = Vec::new();
    levels.push(LevelRun {
        label: String::from("tau0"),
        experiment: experiment::MLMC_BASE,
        kind: LevelKind::Plain { step: cfg.coarsest_step },
        acc: ChunkAccum::new(1),
        n: 0,
    });
    for idx in 1..cfg.tau_levels {
        let mut label = String::from("tau");
        push_u32(&mut label, idx);
        levels.push(LevelRun {
            label,
            experiment: experiment::MLMC_BASE + idx as u64,
            kind: LevelKind::Pair { coarse_step: cfg.step_at(idx - 1) },
            acc: ChunkAccum::new(1),
            n: 0,
        });
    }
    levels.push(LevelRun {
        label: String::from("corrector"),
        experiment: experiment::MLMC_BASE + cfg.tau_levels as u64,
        kind: LevelKind::Corrector { step: cfg.finest_step() },
        acc: ChunkAccum::new(1),
        n: 0,
    });

    // pilot pass, then variance/cost-guided allocation
    for lvl in levels.iter_mut() {
        grow_level(sys, functional, cfg, seed, exec, lvl, cfg.pilot.min(cfg.max_samples))?;
    }
    let eps2 = cfg.target_sd * cfg.target_sd;
    let mut converged = false;
    for _round in 0..64 {
        let combined: f64 = levels
            .iter()
            .map(|l| l.acc.moments[0].variance() / l.n as f64)
            .sum();
        if combined <= eps2 {
            converged = true;
            break;
        }
        // n_l proportional to sqrt(V_l / C_l), scaled to hit the target
        let weight: f64 = levels
            .iter()
            .map(|l| {
                let v = l.acc.moments[0].variance();
                let c = cost_per_sample(l);
                crate::math::sqrt(v * c)
            })
            .sum();
        let mut grew = false;
        let goals: Vec<u64> = levels
            .iter()
            .map(|l| {
                let v = l.acc.moments[0].variance();
                let c = cost_per_sample(l);
                if v <= 0.0 {
                    return l.n;
                }
                let ideal = weight * crate::math::sqrt(v / c) / eps2;
                (crate::math::ceil(ideal) as u64).clamp(l.n, cfg.max_samples)
            })
            .collect();
        for (lvl, goal) in levels.iter_mut().zip(goals) {
            if goal > lvl.n {
                let target = goal.min(lvl.n.saturating_mul(4).max(lvl.n + 256));
                grow_level(sys, functional, cfg, seed, exec, lvl, target)?;
                grew = true;
            }
        }
        if !grew {
            // allocation is capped but the target is unmet; grow the worst
            // contributor until the budget is truly exhausted
            let worst = levels
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    let va = a.1.acc.moments[0].variance() / a.1.n as f64;
                    let vb = b.1.acc.moments[0].variance() / b.1.n as f64;
                    va.total_cmp(&vb)
                })
                .map(|(i, _)| i)
                .unwrap();
            let lvl = &mut levels[worst];
            if lvl.n >= cfg.max_samples {
                break;
            }
            let target = (lvl.n * 2).min(cfg.max_samples);
            grow_level(sys, functional, cfg, seed, exec, lvl, target)?;
        }
    }
    let combined_var: f64 = levels
        .iter()
        .map(|l| l.acc.moments[0].variance() / l.n as f64)
        .sum();
    if combined_var <= eps2 {
        converged = true;
    }
    let estimate: f64 = levels.iter().map(|l| l.acc.moments[0].mean()).sum();
    let mut draws = DrawCounter::default();
    let mut clips = 0;
    for l in &levels {
        draws.add(&l.acc.draws);
        clips += l.acc.clips;
    }
    Ok(MlmcReport {
        levels: levels
            .iter()
            .map(|l| LevelStat {
                label: l.label.clone(),
                stat: PointStat::from_moments(&l.acc.moments[0]),
                draws: l.acc.draws,
            })
            .collect(),
        estimate,
        sd: crate::math::sqrt(combined_var),
        half_width: Z_TWO_SIDED_95 * crate::math::sqrt(combined_var),
        draws,
        clips,
        converged,
        wall_seconds: None,
    })
}

fn push_u32(s: &mut String, mut v: u32) {
    let mut digits = [0u8; 10];
    let mut i = 0;
    loop {
        digits[i] = b'0' + (v % 10) as u8;
        v /= 10;
        i += 1;
        if v == 0 {
            break;
        }
    }
    while i > 0 {
        i -= 1;
        s.push(digits[i] as char);
    }
}

fn cost_per_sample(l: &LevelRun) -> f64 {
    if l.n == 0 {
        return 1.0;
    }
    (l.acc.draws.total() as f64 / l.n as f64).max(1.0)
}

// Extend a level to `target` samples.
fn grow_level(
    sys: &System,
    functional: &Functional,
    cfg: &MlmcConfig,
    seed: u64,
    exec: &impl Executor,
    lvl: &mut LevelRun,
    target: u64,
) -> Result<(), SimError> {
    if target <= lvl.n {
        return Ok(());
    }
    let n_done = lvl.n;
    let first_chunk = n_done.div_ceil(CHUNK) as usize;
    let last_chunk = target.div_ceil(CHUNK) as usize;
    let experiment = lvl.experiment;
    let kind = &lvl.kind;
    let chunks = exec.map_collect(last_chunk - first_chunk, |c| -> Result<ChunkAccum, SimError> {
        let chunk = first_chunk + c;
        let mut acc = ChunkAccum::new(1);
        let mut vx = [0.0f64];
        let mut vz = [0.0f64];
        for i in chunk_span(chunk, target) {
            if i < n_done {
                continue;
            }
            let mut main = RandomStream::new(seed, StreamId::new(experiment, i, role::MAIN));
            let env = sys.environment.as_ref().map(|spec| {
                let mut es = RandomStream::new(seed, StreamId::new(experiment, i, role::ENV));
                let path = spec.simulate(sys.horizon, &mut es);
                acc.draws.add(&es.counter());
                path
            });
            match kind {
                LevelKind::Plain { step } => {
                    let mut probe = Probe::new(functional);
                    let counters = simulate_tau_leap_with(
                        &sys.network,
                        env.as_ref(),
                        &sys.initial,
                        sys.horizon,
                        *step,
                        &cfg.exact_channels,
                        &mut main,
                        &mut probe,
                    )?;
                    probe.write_values(&mut vx);
                    acc.moments[0].push(vx[0]);
                    acc.clips += counters.clips;
                }
                LevelKind::Pair { coarse_step } => {
                    let mut probe_f = Probe::new(functional);
                    let mut probe_c = Probe::new(functional);
                    let outcome = couple_tau_leap_pair_with(
                        &sys.network,
                        env.as_ref(),
                        &sys.initial,
                        sys.horizon,
                        *coarse_step,
                        cfg.refinement,
                        &cfg.exact_channels,
                        &mut main,
                        &mut probe_f,
                        &mut probe_c,
                    )?;
                    probe_f.write_values(&mut vx);
                    probe_c.write_values(&mut vz);
                    acc.moments[0].push(vx[0] - vz[0]);
                    acc.clips += outcome.counters_x.clips + outcome.counters_z.clips;
                }
                LevelKind::Corrector { step } => {
                    let mut probe_x = Probe::new(functional);
                    let mut probe_z = Probe::new(functional);
                    let outcome = couple_exact_tau_with(
                        &sys.network,
                        env.as_ref(),
                        &sys.initial,
                        sys.horizon,
                        *step,
                        &cfg.exact_channels,
                        &mut main,
                        &mut probe_x,
                        &mut probe_z,
                    )?;
                    probe_x.write_values(&mut vx);
                    probe_z.write_values(&mut vz);
                    acc.moments[0].push(vx[0] - vz[0]);
                    acc.clips += outcome.counters_x.clips + outcome.counters_z.clips;
                }
            }
            acc.draws.add(&main.counter());
        }
        Ok(acc)
    });
    let merged = merge_chunks(chunks, 1)?;
    lvl.acc = lvl.acc.merge(&merged);
    lvl.n = target;
    Ok(())
}
