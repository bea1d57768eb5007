//! Exact single-trajectory simulators for time-inhomogeneous networks.
//!
//! Two interchangeable generators of the same law:
//!
//! - [`simulate_hitting_time`] solves the next-jump integral equation with
//!   quadrature and root finding. Slow, but it makes no use of bounds, so it
//!   serves as the correctness baseline everything else is tested against.
//! - [`simulate_extrande`] thins candidate events proposed at a certified
//!   total-rate bound; rejected candidates become phantom events that advance
//!   time without touching the state. Bounds are re-certified after every
//!   event, and a finite certification window is honored by advancing to the
//!   window end with the zero change-vector (an escape) and re-certifying.

use alloc::vec;
use core::fmt;

use crate::env::EnvironmentPath;
use crate::network::{ModelError, PropensityCache, ReactionNetwork, State};
use crate::path::{PathObserver, Recorder, SimCounters, TrajectoryPath};
use crate::quad::{self, HittingTimeError};
use crate::rng::RandomStream;

/// Simulation failures.
#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    Model(ModelError),
    /// An evaluated propensity exceeded its certificate; the marginal law
    /// would be wrong, so this is fatal.
    BoundViolation { channel: usize, t: f64, rate: f64, bound: f64 },
    HittingTime(HittingTimeError),
    MissingEnvironment,
    /// An independent coupling was asked to run two streams with the same
    /// identity.
    StreamsNotDistinct,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::Model(e) => write!(f, "model error: {e}"),
            SimError::BoundViolation { channel, t, rate, bound } => write!(
                f,
                "channel {channel} violated its bound at t = {t}: rate {rate} > bound {bound}"
            ),
            SimError::HittingTime(e) => write!(f, "{e}"),
            SimError::MissingEnvironment => {
                write!(f, "network has modulated rates but no environment was supplied")
            }
            SimError::StreamsNotDistinct => {
                write!(f, "independent coupling requires streams with distinct ids")
            }
        }
    }
}

impl core::error::Error for SimError {}

impl From<ModelError> for SimError {
    fn from(e: ModelError) -> Self {
        SimError::Model(e)
    }
}

impl From<HittingTimeError> for SimError {
    fn from(e: HittingTimeError) -> Self {
        SimError::HittingTime(e)
    }
}

/// Options for the thinning simulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExtrandeOptions {
    /// Certification window length; `None` certifies over the whole
    /// remaining horizon (the right default when bounds are global).
    pub window: Option<f64>,
}

// Relative slack before an evaluated rate counts as violating its
// certificate; absorbs float rounding only.
const BOUND_SLACK: f64 = 1e-9;

fn check_env(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
) -> Result<f64, SimError> {
    if net.requires_environment() && env.is_none() {
        return Err(SimError::MissingEnvironment);
    }
    Ok(env.map_or(0.0, |e| e.level_max()))
}

/// Thinning simulation pushing events to `obs`.
pub fn simulate_extrande_with(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    t_end: f64,
    stream: &mut RandomStream,
    opts: ExtrandeOptions,
    obs: &mut impl PathObserver,
) -> Result<SimCounters, SimError> {
    let env_max = check_env(net, env)?;
    let k_count = net.channel_count();
    let mut x = x0.counts().to_vec();
    let mut cache = PropensityCache::new(net);
    cache.refresh(net, &x, env_max);
    let mut rates = vec![0.0f64; k_count];
    let mut counters = SimCounters::default();
    obs.on_start(&x);
    let mut t = 0.0f64;
    loop {
        let win_end = match opts.window {
            Some(w) => (t + w).min(t_end),
            None => t_end,
        };
        let bound = cache.bound_total();
        if bound <= 0.0 {
            if win_end >= t_end {
                obs.on_end(t_end, &x);
                return Ok(counters);
            }
            t = win_end;
            counters.escapes += 1;
            continue;
        }
        let dt = stream.draw_unit_exponential() / bound;
        if t + dt > win_end {
            if win_end >= t_end {
                obs.on_end(t_end, &x);
                return Ok(counters);
            }
            t = win_end;
            counters.escapes += 1;
            continue;
        }
        t += dt;
        counters.candidates += 1;
        let total = cache.rates_into(net, t, env, &mut rates);
        if total > bound * (1.0 + BOUND_SLACK) {
            let channel = worst_channel(&rates, cache.bounds());
            return Err(SimError::BoundViolation {
                channel,
                t,
                rate: rates[channel],
                bound: cache.bounds()[channel],
            });
        }
        let y = stream.draw_uniform() * bound;
        let mut mu = None;
        let mut cum = 0.0;
        for (k, &r) in rates.iter().enumerate() {
            cum += r;
            if y < cum {
                mu = Some(k);
                break;
            }
        }
        let Some(mu) = mu else {
            counters.phantoms += 1;
            continue;
        };
        net.apply_change(mu, &mut x)?;
        cache.refresh_fired(net, mu, &x, env_max);
        counters.jumps += 1;
        obs.on_jump(t, mu, &x);
    }
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

/// Thinning simulation returning the full trajectory.
pub fn simulate_extrande(
    net: &ReactionNetwork,
    x0: &State,
    t_end: f64,
    stream: &mut RandomStream,
) -> Result<TrajectoryPath, SimError> {
    let mut rec = Recorder::new();
    simulate_extrande_with(
        net,
        None,
        x0,
        t_end,
        stream,
        ExtrandeOptions::default(),
        &mut rec,
    )?;
    Ok(rec.into_path())
}

/// Integral-equation simulation pushing events to `obs`. Next-jump times
/// solve the cumulative-intensity equation to within `tol`; the firing
/// channel is chosen in proportion to the propensities at the jump time.
pub fn simulate_hitting_time_with(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    t_end: f64,
    stream: &mut RandomStream,
    tol: f64,
    obs: &mut impl PathObserver,
) -> Result<SimCounters, SimError> {
    debug_assert!(tol > 0.0);
    let env_max = check_env(net, env)?;
    let k_count = net.channel_count();
    let mut x = x0.counts().to_vec();
    let mut cache = PropensityCache::new_rates_only(net);
    cache.refresh(net, &x, env_max);
    let mut rates = vec![0.0f64; k_count];
    let mut counters = SimCounters::default();
    obs.on_start(&x);
    let mut t = 0.0f64;
    loop {
        let target = stream.draw_unit_exponential();
        // the cache still holds the time factors evaluated at t, so this
        // endpoint value is nearly free
        let g0 = cache.total(net, t, env);
        let g = |s: f64| cache.total(net, s, env);
        let g4 = |t0: f64, step: f64| cache.totals_arith4(net, t0, step, env);
        let dt = match quad::solve_hitting_time_warm(&g, &g4, t, t_end, target, tol, g0)? {
            Some(dt) => dt,
            None => {
                obs.on_end(t_end, &x);
                return Ok(counters);
            }
        };
        t += dt;
        counters.candidates += 1;
        let total = cache.rates_into(net, t, env, &mut rates);
        if total <= 0.0 {
            // the root landed on a zero of the intensity (possible only up to
            // solver tolerance); nothing can fire here
            continue;
        }
        let y = stream.draw_uniform() * total;
        let mut mu = None;
        let mut cum = 0.0;
        for (k, &r) in rates.iter().enumerate() {
            cum += r;
            if y < cum {
                mu = Some(k);
                break;
            }
        }
        // exhaustion is possible only through float rounding of the two sums
        let Some(mu) = mu else { continue };
        net.apply_change(mu, &mut x)?;
        cache.refresh_fired(net, mu, &x, env_max);
        counters.jumps += 1;
        obs.on_jump(t, mu, &x);
    }
}

/// Integral-equation simulation returning the full trajectory.
pub fn simulate_hitting_time(
    net: &ReactionNetwork,
    x0: &State,
    t_end: f64,
    stream: &mut RandomStream,
    tol: f64,
) -> Result<TrajectoryPath, SimError> {
    let mut rec = Recorder::new();
    simulate_hitting_time_with(net, None, x0, t_end, stream, tol, &mut rec)?;
    Ok(rec.into_path())
}
