//! Coupled generation of two trajectories that share reaction vectors but
//! differ in their propensities.
//!
//! Four strategies, in increasing order of coupling strength on the models
//! this crate ships:
//!
//! - `Independent`: two unrelated thinning runs.
//! - `Crn` (common random numbers): both processes replay the identical draw
//!   sequence through their own thinning loops.
//! - `ExtrandeThinning`: one candidate clock at a joint bound; a single
//!   uniform classifies both processes against their own cumulative
//!   partitions, so the pair often jumps at the same instant but not
//!   necessarily through the same channel.
//! - `Stacked`:each channel owns a strip of height equal to the larger of the
//!   two per-channel bounds; a candidate selects a strip first, then each
//!   process fires only if the uniform falls under its own rate inside that
//!   strip. Simultaneous firings therefore always share the channel, and
//!   happen at rate `min(rate_x, rate_z)` within the strip.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::EnvironmentPath;
use crate::exact::{simulate_extrande_with, ExtrandeOptions, SimError};
use crate::network::{PropensityCache, ReactionNetwork, State};
use crate::path::{PathObserver, Recorder, SimCounters, TrajectoryPath};
use crate::rng::{DrawCounter, RandomStream};

/// Strategy selector for pair generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CouplingStrategy {
    Independent,
    Crn,
    ExtrandeThinning,
    Stacked,
}

impl CouplingStrategy {
    pub const ALL: [CouplingStrategy; 4] = [
        CouplingStrategy::Independent,
        CouplingStrategy::Crn,
        CouplingStrategy::ExtrandeThinning,
        CouplingStrategy::Stacked,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CouplingStrategy::Independent => "independent",
            CouplingStrategy::Crn => "crn",
            CouplingStrategy::ExtrandeThinning => "thinning",
            CouplingStrategy::Stacked => "stacked",
        }
    }
}

/// One candidate event of a jointly simulated pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SharedEvent {
    pub t: f64,
    pub channel_x: Option<usize>,
    pub channel_z: Option<usize>,
}

/// A coupled pair of recorded paths.
#[derive(Clone, Debug)]
pub struct CoupledPair {
    pub path_x: TrajectoryPath,
    pub path_z: TrajectoryPath,
    pub strategy: CouplingStrategy,
    /// Candidate-event log for the jointly simulated strategies.
    pub shared_event_log: Option<Vec<SharedEvent>>,
}

/// Receiver for joint pair events. `fired_*` is `None` when that component
/// did not transition at the candidate time.
pub trait PairObserver {
    fn on_start(&mut self, _x0: &[i64], _z0: &[i64]) {}
    fn on_event(
        &mut self,
        _t: f64,
        _fired_x: Option<usize>,
        _fired_z: Option<usize>,
        _x: &[i64],
        _z: &[i64],
    ) {
    }
    fn on_end(&mut self, _t_end: f64, _x: &[i64], _z: &[i64]) {}
}

/// Adapter feeding a joint simulation into two per-component observers.
pub struct SplitPair<'a, A: PathObserver, B: PathObserver> {
    pub x: &'a mut A,
    pub z: &'a mut B,
}

impl<A: PathObserver, B: PathObserver> PairObserver for SplitPair<'_, A, B> {
    fn on_start(&mut self, x0: &[i64], z0: &[i64]) {
        self.x.on_start(x0);
        self.z.on_start(z0);
    }

    fn on_event(
        &mut self,
        t: f64,
        fired_x: Option<usize>,
        fired_z: Option<usize>,
        x: &[i64],
        z: &[i64],
    ) {
        if let Some(k) = fired_x {
            self.x.on_jump(t, k, x);
        }
        if let Some(k) = fired_z {
            self.z.on_jump(t, k, z);
        }
    }

    fn on_end(&mut self, t_end: f64, x: &[i64], z: &[i64]) {
        self.x.on_end(t_end, x);
        self.z.on_end(t_end, z);
    }
}

/// Cost and event counters for one generated pair.
#[derive(Clone, Copy, Debug, Default)]
pub struct PairOutcome {
    pub counters_x: SimCounters,
    pub counters_z: SimCounters,
    pub draws: DrawCounter,
}

// Relative slack absorbing float rounding in bound checks.
const BOUND_SLACK: f64 = 1e-9;

/// Two independent thinning runs. The streams must have distinct ids.
#[allow(clippy::too_many_arguments)]
pub fn couple_independent_with(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    env_x: Option<&EnvironmentPath>,
    env_z: Option<&EnvironmentPath>,
    x0: &State,
    z0: &State,
    t_end: f64,
    mut stream_x: RandomStream,
    mut stream_z: RandomStream,
    opts: ExtrandeOptions,
    obs_x: &mut impl PathObserver,
    obs_z: &mut impl PathObserver,
) -> Result<PairOutcome, SimError> {
    if stream_x.id() == stream_z.id() {
        return Err(SimError::StreamsNotDistinct);
    }
    let counters_x = simulate_extrande_with(net_x, env_x, x0, t_end, &mut stream_x, opts, obs_x)?;
    let counters_z = simulate_extrande_with(net_z, env_z, z0, t_end, &mut stream_z, opts, obs_z)?;
    let mut draws = stream_x.counter();
    draws.add(&stream_z.counter());
    Ok(PairOutcome { counters_x, counters_z, draws })
}

/// Common random numbers: both processes replay the identical draw sequence
/// through their own thinning loops. With identical networks and initial
/// states the two paths are bit-identical.
#[allow(clippy::too_many_arguments)]
pub fn couple_crn_with(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    z0: &State,
    t_end: f64,
    stream: RandomStream,
    opts: ExtrandeOptions,
    obs_x: &mut impl PathObserver,
    obs_z: &mut impl PathObserver,
) -> Result<PairOutcome, SimError> {
    let mut stream_x = stream.clone();
    let mut stream_z = stream;
    let counters_x = simulate_extrande_with(net_x, env, x0, t_end, &mut stream_x, opts, obs_x)?;
    let counters_z = simulate_extrande_with(net_z, env, z0, t_end, &mut stream_z, opts, obs_z)?;
    let mut draws = stream_x.counter();
    draws.add(&stream_z.counter());
    Ok(PairOutcome { counters_x, counters_z, draws })
}

#[inline]
fn classify(y: f64, rates: &[f64]) -> Option<usize> {
    let mut cum = 0.0;
    for (k, &r) in rates.iter().enumerate() {
        cum += r;
        if y < cum {
            return Some(k);
        }
    }
    None
}

/// Joint thinning: one candidate clock at a bound dominating both totals;
/// one uniform classifies each process against its own partition.
#[allow(clippy::too_many_arguments)]
pub fn couple_extrande_thinning_with(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    z0: &State,
    t_end: f64,
    stream: &mut RandomStream,
    opts: ExtrandeOptions,
    obs: &mut impl PairObserver,
) -> Result<PairOutcome, SimError> {
    let env_max = env.map_or(0.0, |e| e.level_max());
    if (net_x.requires_environment() || net_z.requires_environment()) && env.is_none() {
        return Err(SimError::MissingEnvironment);
    }
    let mut x = x0.counts().to_vec();
    let mut z = z0.counts().to_vec();
    let mut cache_x = PropensityCache::new(net_x);
    let mut cache_z = PropensityCache::new(net_z);
    cache_x.refresh(net_x, &x, env_max);
    cache_z.refresh(net_z, &z, env_max);
    let mut rates_x = vec![0.0f64; net_x.channel_count()];
    let mut rates_z = vec![0.0f64; net_z.channel_count()];
    let mut out = PairOutcome::default();
    let base_draws = stream.counter();
    obs.on_start(&x, &z);
    let mut t = 0.0f64;
    loop {
        let win_end = match opts.window {
            Some(w) => (t + w).min(t_end),
            None => t_end,
        };
        let bound = cache_x.bound_total().max(cache_z.bound_total());
        if bound <= 0.0 {
            if win_end >= t_end {
                break;
            }
            t = win_end;
            out.counters_x.escapes += 1;
            out.counters_z.escapes += 1;
            continue;
        }
        let dt = stream.draw_unit_exponential() / bound;
        if t + dt > win_end {
            if win_end >= t_end {
                break;
            }
            t = win_end;
            out.counters_x.escapes += 1;
            out.counters_z.escapes += 1;
            continue;
        }
        t += dt;
        out.counters_x.candidates += 1;
        out.counters_z.candidates += 1;
        let total_x = cache_x.rates_into(net_x, t, env, &mut rates_x);
        let total_z = cache_z.rates_into(net_z, t, env, &mut rates_z);
        let limit = bound * (1.0 + BOUND_SLACK);
        if total_x > limit || total_z > limit {
            let (rates, bounds) = if total_x > limit {
                (&rates_x, cache_x.bounds())
            } else {
                (&rates_z, cache_z.bounds())
            };
            let channel = worst_channel(rates, bounds);
            return Err(SimError::BoundViolation {
                channel,
                t,
                rate: rates[channel],
                bound: bounds[channel],
            });
        }
        let y = stream.draw_uniform() * bound;
        let mu = classify(y, &rates_x);
        let nu = classify(y, &rates_z);
        if let Some(k) = mu {
            net_x.apply_change(k, &mut x)?;
            cache_x.refresh_fired(net_x, k, &x, env_max);
            out.counters_x.jumps += 1;
        } else {
            out.counters_x.phantoms += 1;
        }
        if let Some(k) = nu {
            net_z.apply_change(k, &mut z)?;
            cache_z.refresh_fired(net_z, k, &z, env_max);
            out.counters_z.jumps += 1;
        } else {
            out.counters_z.phantoms += 1;
        }
        obs.on_event(t, mu, nu, &x, &z);
    }
    obs.on_end(t_end, &x, &z);
    let mut draws = stream.counter();
    draws.exponentials -= base_draws.exponentials;
    draws.uniforms -= base_draws.uniforms;
    draws.poissons -= base_draws.poissons;
    out.draws = draws;
    Ok(out)
}

/// Stacked coupling: per-channel strips of height
/// `max(bound_x_k, bound_z_k)`; a candidate picks a strip, then each process
/// fires only if the in-strip offset falls under its own rate, so
/// simultaneous firings share the channel by construction.
#[allow(clippy::too_many_arguments)]
pub fn couple_stacked_with(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    z0: &State,
    t_end: f64,
    stream: &mut RandomStream,
    opts: ExtrandeOptions,
    obs: &mut impl PairObserver,
) -> Result<PairOutcome, SimError> {
    assert_eq!(
        net_x.channel_count(),
        net_z.channel_count(),
        "stacked coupling requires matching channel lists"
    );
    let env_max = env.map_or(0.0, |e| e.level_max());
    if (net_x.requires_environment() || net_z.requires_environment()) && env.is_none() {
        return Err(SimError::MissingEnvironment);
    }
    let k_count = net_x.channel_count();
    let mut x = x0.counts().to_vec();
    let mut z = z0.counts().to_vec();
    let mut cache_x = PropensityCache::new(net_x);
    let mut cache_z = PropensityCache::new(net_z);
    cache_x.refresh(net_x, &x, env_max);
    cache_z.refresh(net_z, &z, env_max);
    let mut strip = vec![0.0f64; k_count];
    let mut out = PairOutcome::default();
    let base_draws = stream.counter();
    obs.on_start(&x, &z);
    let mut t = 0.0f64;
    loop {
        let win_end = match opts.window {
            Some(w) => (t + w).min(t_end),
            None => t_end,
        };
        let mut bound_total = 0.0;
        for k in 0..k_count {
            let b = cache_x.bounds()[k].max(cache_z.bounds()[k]);
            strip[k] = b;
            bound_total += b;
        }
        if bound_total <= 0.0 {
            if win_end >= t_end {
                break;
            }
            t = win_end;
            out.counters_x.escapes += 1;
            out.counters_z.escapes += 1;
            continue;
        }
        let dt = stream.draw_unit_exponential() / bound_total;
        if t + dt > win_end {
            if win_end >= t_end {
                break;
            }
            t = win_end;
            out.counters_x.escapes += 1;
            out.counters_z.escapes += 1;
            continue;
        }
        t += dt;
        out.counters_x.candidates += 1;
        out.counters_z.candidates += 1;
        let y = stream.draw_uniform() * bound_total;
        let mut cum = 0.0;
        let mut mu = k_count - 1;
        for (k, &b) in strip.iter().enumerate() {
            cum += b;
            if y < cum {
                mu = k;
                break;
            }
        }
        let offset = y - (cum - strip[mu]);
        let rate_x = cache_x.rate_of(net_x, mu, t, env);
        let rate_z = cache_z.rate_of(net_z, mu, t, env);
        let limit = strip[mu] * (1.0 + BOUND_SLACK);
        if rate_x > limit || rate_z > limit {
            return Err(SimError::BoundViolation {
                channel: mu,
                t,
                rate: rate_x.max(rate_z),
                bound: strip[mu],
            });
        }
        let fired_x = offset < rate_x;
        let fired_z = offset < rate_z;
        if fired_x {
            net_x.apply_change(mu, &mut x)?;
            cache_x.refresh_fired(net_x, mu, &x, env_max);
            out.counters_x.jumps += 1;
        } else {
            out.counters_x.phantoms += 1;
        }
        if fired_z {
            net_z.apply_change(mu, &mut z)?;
            cache_z.refresh_fired(net_z, mu, &z, env_max);
            out.counters_z.jumps += 1;
        } else {
            out.counters_z.phantoms += 1;
        }
        obs.on_event(t, fired_x.then_some(mu), fired_z.then_some(mu), &x, &z);
    }
    obs.on_end(t_end, &x, &z);
    let mut draws = stream.counter();
    draws.exponentials -= base_draws.exponentials;
    draws.uniforms -= base_draws.uniforms;
    draws.poissons -= base_draws.poissons;
    out.draws = draws;
    Ok(out)
}

fn worst_channel(rates: &[f64], bounds: &[f64]) -> usize {
    let mut worst = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for (k, (&r, &b)) in rates.iter().zip(bounds).enumerate() {
        let excess = r - b;
        if excess > worst_excess {
            worst_excess = excess;
            worst = k;
        }
    }
    worst
}

/// Dispatch one coupled pair under `strategy`, feeding per-component
/// observers. `stream_partner` is consumed only by the independent strategy.
#[allow(clippy::too_many_arguments)]
pub fn couple_pair_with(
    strategy: CouplingStrategy,
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    z0: &State,
    t_end: f64,
    stream_main: RandomStream,
    stream_partner: RandomStream,
    opts: ExtrandeOptions,
    obs_x: &mut impl PathObserver,
    obs_z: &mut impl PathObserver,
) -> Result<PairOutcome, SimError> {
    match strategy {
        CouplingStrategy::Independent => couple_independent_with(
            net_x,
            net_z,
            env,
            env,
            x0,
            z0,
            t_end,
            stream_main,
            stream_partner,
            opts,
            obs_x,
            obs_z,
        ),
        CouplingStrategy::Crn => couple_crn_with(
            net_x,
            net_z,
            env,
            x0,
            z0,
            t_end,
            stream_main,
            opts,
            obs_x,
            obs_z,
        ),
        CouplingStrategy::ExtrandeThinning => {
            let mut stream = stream_main;
            couple_extrande_thinning_with(
                net_x,
                net_z,
                env,
                x0,
                z0,
                t_end,
                &mut stream,
                opts,
                &mut SplitPair { x: obs_x, z: obs_z },
            )
        }
        CouplingStrategy::Stacked => {
            let mut stream = stream_main;
            couple_stacked_with(
                net_x,
                net_z,
                env,
                x0,
                z0,
                t_end,
                &mut stream,
                opts,
                &mut SplitPair { x: obs_x, z: obs_z },
            )
        }
    }
}

// Recording pair observer used by the convenience wrappers.
struct RecordingPair {
    rec_x: Recorder,
    rec_z: Recorder,
    log: Vec<SharedEvent>,
}

impl PairObserver for RecordingPair {
    fn on_start(&mut self, x0: &[i64], z0: &[i64]) {
        self.rec_x.on_start(x0);
        self.rec_z.on_start(z0);
    }

    fn on_event(
        &mut self,
        t: f64,
        fired_x: Option<usize>,
        fired_z: Option<usize>,
        x: &[i64],
        z: &[i64],
    ) {
        self.log.push(SharedEvent { t, channel_x: fired_x, channel_z: fired_z });
        if let Some(k) = fired_x {
            self.rec_x.on_jump(t, k, x);
        }
        if let Some(k) = fired_z {
            self.rec_z.on_jump(t, k, z);
        }
    }

    fn on_end(&mut self, t_end: f64, x: &[i64], z: &[i64]) {
        self.rec_x.on_end(t_end, x);
        self.rec_z.on_end(t_end, z);
    }
}

/// Independent pair, recorded.
pub fn couple_independent(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    x0: &State,
    z0: &State,
    t_end: f64,
    stream_x: RandomStream,
    stream_z: RandomStream,
) -> Result<CoupledPair, SimError> {
    let mut rec_x = Recorder::new();
    let mut rec_z = Recorder::new();
    couple_independent_with(
        net_x,
        net_z,
        None,
        None,
        x0,
        z0,
        t_end,
        stream_x,
        stream_z,
        ExtrandeOptions::default(),
        &mut rec_x,
        &mut rec_z,
    )?;
    Ok(CoupledPair {
        path_x: rec_x.into_path(),
        path_z: rec_z.into_path(),
        strategy: CouplingStrategy::Independent,
        shared_event_log: None,
    })
}

/// Common-random-numbers pair, recorded.
pub fn couple_crn(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    x0: &State,
    z0: &State,
    t_end: f64,
    stream: RandomStream,
) -> Result<CoupledPair, SimError> {
    let mut rec_x = Recorder::new();
    let mut rec_z = Recorder::new();
    couple_crn_with(
        net_x,
        net_z,
        None,
        x0,
        z0,
        t_end,
        stream,
        ExtrandeOptions::default(),
        &mut rec_x,
        &mut rec_z,
    )?;
    Ok(CoupledPair {
        path_x: rec_x.into_path(),
        path_z: rec_z.into_path(),
        strategy: CouplingStrategy::Crn,
        shared_event_log: None,
    })
}

/// Joint-thinning pair, recorded with its candidate log.
pub fn couple_extrande_thinning(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    x0: &State,
    z0: &State,
    t_end: f64,
    mut stream: RandomStream,
) -> Result<CoupledPair, SimError> {
    let mut rec = RecordingPair { rec_x: Recorder::new(), rec_z: Recorder::new(), log: Vec::new() };
    couple_extrande_thinning_with(
        net_x,
        net_z,
        None,
        x0,
        z0,
        t_end,
        &mut stream,
        ExtrandeOptions::default(),
        &mut rec,
    )?;
    Ok(CoupledPair {
        path_x: rec.rec_x.into_path(),
        path_z: rec.rec_z.into_path(),
        strategy: CouplingStrategy::ExtrandeThinning,
        shared_event_log: Some(rec.log),
    })
}

/// Stacked pair, recorded with its candidate log.
pub fn couple_stacked(
    net_x: &ReactionNetwork,
    net_z: &ReactionNetwork,
    x0: &State,
    z0: &State,
    t_end: f64,
    mut stream: RandomStream,
) -> Result<CoupledPair, SimError> {
    let mut rec = RecordingPair { rec_x: Recorder::new(), rec_z: Recorder::new(), log: Vec::new() };
    couple_stacked_with(
        net_x,
        net_z,
        None,
        x0,
        z0,
        t_end,
        &mut stream,
        ExtrandeOptions::default(),
        &mut rec,
    )?;
    Ok(CoupledPair {
        path_x: rec.rec_x.into_path(),
        path_z: rec.rec_z.into_path(),
        strategy: CouplingStrategy::Stacked,
        shared_event_log: Some(rec.log),
    })
}
