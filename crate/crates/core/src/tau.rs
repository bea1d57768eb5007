//! Tau-leap approximation and the couplings that drive multilevel
//! estimation.
//!
//! The approximate process freezes selected channels' rates over fixed steps.
//! Frozen channels fall into two groups:
//!
//! - channels whose state changes feed no exact channel's rate fire as
//!   batched Poisson counts applied at the step boundary (with clipping at
//!   zero), the classical leap construction;
//! - channels that do feed an exact channel's rate keep their frozen rate
//!   but fire as spread point events inside the step, so the exact channels
//!   see their effects when they happen. Per-step counts are Poisson with
//!   the same mean either way; only the within-step placement differs, and
//!   only the exact channels can observe it.
//!
//! Channels listed in `exact_channels` are excluded from the discretization
//! entirely: they fire as exact thinned jumps reading the live applied
//! state.
//!
//! Three generators:
//!
//! - [`simulate_tau_leap`]: one approximate path.
//! - [`couple_tau_leap_pair`]: fine/coarse pair sharing randomness through
//!   split Poisson counts at the channel-wise rate minimum for batched
//!   channels, and through shared candidate strips for spread and exact
//!   channels.
//! - [`couple_exact_tau`]: an exact path and an approximate path coupled by
//!   per-channel strips of height `max(exact bound, frozen rate)`, the
//!   corrector pair of unbiased multilevel estimation.

use alloc::vec;
use alloc::vec::Vec;

use crate::coupling::PairOutcome;
use crate::env::EnvironmentPath;
use crate::exact::SimError;
use crate::network::{ModelError, PropensityCache, ReactionNetwork, State};
use crate::path::{PathObserver, Recorder, SimCounters, TrajectoryPath};
use crate::rng::{DrawCounter, RandomStream};

// Relative slack absorbing float rounding in bound checks.
const BOUND_SLACK: f64 = 1e-9;

fn steps_for(t_end: f64, step: f64) -> Result<u64, ModelError> {
    if !(step > 0.0) || !(t_end > 0.0) {
        return Err(ModelError::BadParameter { what: "leap step and horizon must be positive" });
    }
    let n = crate::math::round(t_end / step);
    if n < 1.0 || crate::math::abs(n * step - t_end) > 1e-9 * t_end.max(1.0) {
        return Err(ModelError::BadParameter { what: "leap step must divide the horizon" });
    }
    Ok(n as u64)
}

fn check_env(net: &ReactionNetwork, env: Option<&EnvironmentPath>) -> Result<f64, SimError> {
    if net.requires_environment() && env.is_none() {
        return Err(SimError::MissingEnvironment);
    }
    Ok(env.map_or(0.0, |e| e.level_max()))
}

// Channel partition for a leap process: batched, spread (frozen rate but
// point events), and exact.
struct Partition {
    batch: Vec<usize>,
    /// spread channels followed by exact channels; the within-step strip set
    strips: Vec<Strip>,
}

#[derive(Clone, Copy)]
struct Strip {
    channel: usize,
    exact: bool,
}

fn partition_channels(net: &ReactionNetwork, exact_channels: &[usize]) -> Partition {
    let k_count = net.channel_count();
    let mut exact: Vec<usize> = exact_channels.to_vec();
    exact.sort_unstable();
    exact.dedup();
    let feeds_exact = |k: usize| {
        let change = &net.channels()[k].change;
        exact.iter().any(|&j| {
            net.channels()[j]
                .propensity
                .state
                .reads()
                .any(|i| change[i] != 0)
        })
    };
    let mut batch = Vec::new();
    let mut strips = Vec::new();
    for k in 0..k_count {
        if exact.contains(&k) {
            continue;
        }
        if feeds_exact(k) {
            strips.push(Strip { channel: k, exact: false });
        } else {
            batch.push(k);
        }
    }
    for &k in &exact {
        strips.push(Strip { channel: k, exact: true });
    }
    Partition { batch, strips }
}

// Apply accumulated boundary deltas, clipping at zero.
fn apply_pending(x: &mut [i64], pending: &mut [i64], counters: &mut SimCounters) {
    for (xi, d) in x.iter_mut().zip(pending.iter_mut()) {
        *xi += *d;
        if *xi < 0 {
            *xi = 0;
            counters.clips += 1;
        }
        *d = 0;
    }
}

// Apply one channel's change vector, clipping at zero (frozen-rate channels
// may outrun their reactants, exactly like batched counts).
fn apply_clipped(net: &ReactionNetwork, k: usize, x: &mut [i64], counters: &mut SimCounters) {
    for (xi, &d) in x.iter_mut().zip(&net.channels()[k].change) {
        *xi += d;
        if *xi < 0 {
            *xi = 0;
            counters.clips += 1;
        }
    }
}

/// One tau-leap path pushed to an observer. `step` must divide `t_end`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_tau_leap_with(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    t_end: f64,
    step: f64,
    exact_channels: &[usize],
    stream: &mut RandomStream,
    obs: &mut impl PathObserver,
) -> Result<SimCounters, SimError> {
    let env_max = check_env(net, env)?;
    let steps = steps_for(t_end, step)?;
    let part = partition_channels(net, exact_channels);
    let k_count = net.channel_count();
    let mut x = x0.counts().to_vec();
    let mut pending = vec![0i64; x.len()];
    let mut cache = PropensityCache::new(net);
    cache.refresh(net, &x, env_max);
    let mut rates = vec![0.0f64; k_count];
    let mut counters = SimCounters::default();
    obs.on_start(&x);
    for n in 0..steps {
        let t0 = step * n as f64;
        let t1 = if n + 1 == steps { t_end } else { step * (n + 1) as f64 };
        let h = t1 - t0;
        let _ = cache.rates_into(net, t0, env, &mut rates);
        for &k in &part.batch {
            let count = stream.draw_poisson(rates[k] * h) as i64;
            if count > 0 {
                for (p, &d) in pending.iter_mut().zip(&net.channels()[k].change) {
                    *p += count * d;
                }
            }
        }
        if !part.strips.is_empty() {
            strip_events_within_step(
                net,
                env,
                env_max,
                &part.strips,
                &rates,
                &mut cache,
                &mut x,
                t0,
                t1,
                stream,
                &mut counters,
                obs,
            )?;
        }
        apply_pending(&mut x, &mut pending, &mut counters);
        cache.refresh(net, &x, env_max);
        obs.on_batch(t1, &x);
    }
    obs.on_end(t_end, &x);
    Ok(counters)
}

// Spread and exact channels inside one leap step: spread strips have height
// equal to their frozen rate (every candidate in the strip fires); exact
// strips have certified heights and live thinning.
#[allow(clippy::too_many_arguments)]
fn strip_events_within_step(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    env_max: f64,
    strips: &[Strip],
    frozen: &[f64],
    cache: &mut PropensityCache,
    x: &mut [i64],
    t0: f64,
    t1: f64,
    stream: &mut RandomStream,
    counters: &mut SimCounters,
    obs: &mut impl PathObserver,
) -> Result<(), SimError> {
    let mut t = t0;
    loop {
        let total: f64 = strips
            .iter()
            .map(|s| if s.exact { cache.bounds()[s.channel] } else { frozen[s.channel] })
            .sum();
        if total <= 0.0 {
            return Ok(());
        }
        let dt = stream.draw_unit_exponential() / total;
        if t + dt > t1 {
            return Ok(());
        }
        t += dt;
        counters.candidates += 1;
        let y = stream.draw_uniform() * total;
        let mut cum = 0.0;
        let mut hit = None;
        for s in strips {
            let height = if s.exact { cache.bounds()[s.channel] } else { frozen[s.channel] };
            if y < cum + height {
                hit = Some((*s, y - cum, height));
                break;
            }
            cum += height;
        }
        let Some((strip, offset, height)) = hit else { continue };
        if strip.exact {
            let rate = cache.rate_of(net, strip.channel, t, env);
            if rate > height * (1.0 + BOUND_SLACK) {
                return Err(SimError::BoundViolation {
                    channel: strip.channel,
                    t,
                    rate,
                    bound: height,
                });
            }
            if offset < rate {
                net.apply_change(strip.channel, x)?;
                cache.refresh_fired(net, strip.channel, x, env_max);
                counters.jumps += 1;
                obs.on_jump(t, strip.channel, x);
            } else {
                counters.phantoms += 1;
            }
        } else {
            // frozen-rate point event: the whole strip accepts
            apply_clipped(net, strip.channel, x, counters);
            cache.refresh_fired(net, strip.channel, x, env_max);
            counters.jumps += 1;
            obs.on_jump(t, strip.channel, x);
        }
    }
}

/// One tau-leap path, recorded.
pub fn simulate_tau_leap(
    net: &ReactionNetwork,
    x0: &State,
    t_end: f64,
    step: f64,
    stream: &mut RandomStream,
    exact_channels: &[usize],
) -> Result<TrajectoryPath, SimError> {
    let mut rec = Recorder::new();
    simulate_tau_leap_with(net, None, x0, t_end, step, exact_channels, stream, &mut rec)?;
    Ok(rec.into_path())
}

/// Fine/coarse tau-leap pair. The fine process steps at
/// `coarse_step / refinement`; for each fine step and batched channel the two
/// processes share a Poisson count with the minimum of their rates, the
/// coarse rate held over the enclosing coarse step. Spread and exact
/// channels couple through shared candidate strips.
#[allow(clippy::too_many_arguments)]
pub fn couple_tau_leap_pair_with(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    t_end: f64,
    coarse_step: f64,
    refinement: u32,
    exact_channels: &[usize],
    stream: &mut RandomStream,
    obs_fine: &mut impl PathObserver,
    obs_coarse: &mut impl PathObserver,
) -> Result<PairOutcome, SimError> {
    assert!(refinement >= 2, "refinement factor must be at least 2");
    let env_max = check_env(net, env)?;
    let coarse_steps = steps_for(t_end, coarse_step)?;
    let m = refinement as u64;
    let fine_step = coarse_step / refinement as f64;
    let part = partition_channels(net, exact_channels);
    let k_count = net.channel_count();
    let mut xf = x0.counts().to_vec();
    let mut xc = x0.counts().to_vec();
    let mut pend_f = vec![0i64; xf.len()];
    let mut pend_c = vec![0i64; xc.len()];
    let mut cache_f = PropensityCache::new(net);
    let mut cache_c = PropensityCache::new(net);
    cache_f.refresh(net, &xf, env_max);
    cache_c.refresh(net, &xc, env_max);
    let mut rates_f = vec![0.0f64; k_count];
    let mut rates_c = vec![0.0f64; k_count];
    let mut out = PairOutcome::default();
    let base_draws = stream.counter();
    obs_fine.on_start(&xf);
    obs_coarse.on_start(&xc);
    for nc in 0..coarse_steps {
        let tc0 = coarse_step * nc as f64;
        let tc1 = if nc + 1 == coarse_steps { t_end } else { coarse_step * (nc + 1) as f64 };
        // coarse rates held over the whole coarse step
        let _ = cache_c.rates_into(net, tc0, env, &mut rates_c);
        for i in 0..m {
            let tf0 = tc0 + fine_step * i as f64;
            let tf1 = if i + 1 == m { tc1 } else { tc0 + fine_step * (i + 1) as f64 };
            let h = tf1 - tf0;
            let _ = cache_f.rates_into(net, tf0, env, &mut rates_f);
            for &k in &part.batch {
                let rf = rates_f[k];
                let rc = rates_c[k];
                let shared_rate = rf.min(rc);
                let shared = stream.draw_poisson(shared_rate * h) as i64;
                let fine_extra = stream.draw_poisson((rf - shared_rate) * h) as i64;
                let coarse_extra = stream.draw_poisson((rc - shared_rate) * h) as i64;
                let cf = shared + fine_extra;
                let cc = shared + coarse_extra;
                if cf != 0 || cc != 0 {
                    for (j, &d) in net.channels()[k].change.iter().enumerate() {
                        pend_f[j] += cf * d;
                        pend_c[j] += cc * d;
                    }
                }
            }
            if !part.strips.is_empty() {
                joint_strip_events(
                    net,
                    env,
                    env_max,
                    &part.strips,
                    &rates_f,
                    &rates_c,
                    &mut cache_f,
                    &mut cache_c,
                    &mut xf,
                    &mut xc,
                    tf0,
                    tf1,
                    stream,
                    &mut out,
                    obs_fine,
                    obs_coarse,
                )?;
            }
            apply_pending(&mut xf, &mut pend_f, &mut out.counters_x);
            cache_f.refresh(net, &xf, env_max);
            obs_fine.on_batch(tf1, &xf);
        }
        apply_pending(&mut xc, &mut pend_c, &mut out.counters_z);
        cache_c.refresh(net, &xc, env_max);
        obs_coarse.on_batch(tc1, &xc);
    }
    obs_fine.on_end(t_end, &xf);
    obs_coarse.on_end(t_end, &xc);
    out.draws = draws_since(stream, base_draws);
    Ok(out)
}

// Shared candidate strips for the spread and exact channels of two leap
// processes. Spread strips accept against each side's frozen rate; exact
// strips thin against the live rates.
#[allow(clippy::too_many_arguments)]
fn joint_strip_events(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    env_max: f64,
    strips: &[Strip],
    frozen_f: &[f64],
    frozen_c: &[f64],
    cache_f: &mut PropensityCache,
    cache_c: &mut PropensityCache,
    xf: &mut [i64],
    xc: &mut [i64],
    t0: f64,
    t1: f64,
    stream: &mut RandomStream,
    out: &mut PairOutcome,
    obs_fine: &mut impl PathObserver,
    obs_coarse: &mut impl PathObserver,
) -> Result<(), SimError> {
    let mut t = t0;
    loop {
        let mut total = 0.0;
        for s in strips {
            total += if s.exact {
                cache_f.bounds()[s.channel].max(cache_c.bounds()[s.channel])
            } else {
                frozen_f[s.channel].max(frozen_c[s.channel])
            };
        }
        if total <= 0.0 {
            return Ok(());
        }
        let dt = stream.draw_unit_exponential() / total;
        if t + dt > t1 {
            return Ok(());
        }
        t += dt;
        out.counters_x.candidates += 1;
        out.counters_z.candidates += 1;
        let y = stream.draw_uniform() * total;
        let mut cum = 0.0;
        let mut hit = None;
        for s in strips {
            let hgt = if s.exact {
                cache_f.bounds()[s.channel].max(cache_c.bounds()[s.channel])
            } else {
                frozen_f[s.channel].max(frozen_c[s.channel])
            };
            if y < cum + hgt {
                hit = Some((*s, y - cum, hgt));
                break;
            }
            cum += hgt;
        }
        let Some((strip, offset, hgt)) = hit else { continue };
        let k = strip.channel;
        let (rate_f, rate_c) = if strip.exact {
            (cache_f.rate_of(net, k, t, env), cache_c.rate_of(net, k, t, env))
        } else {
            (frozen_f[k], frozen_c[k])
        };
        let limit = hgt * (1.0 + BOUND_SLACK);
        if rate_f > limit || rate_c > limit {
            return Err(SimError::BoundViolation {
                channel: k,
                t,
                rate: rate_f.max(rate_c),
                bound: hgt,
            });
        }
        if offset < rate_f {
            if strip.exact {
                net.apply_change(k, xf)?;
            } else {
                apply_clipped(net, k, xf, &mut out.counters_x);
            }
            cache_f.refresh_fired(net, k, xf, env_max);
            out.counters_x.jumps += 1;
            obs_fine.on_jump(t, k, xf);
        } else {
            out.counters_x.phantoms += 1;
        }
        if offset < rate_c {
            if strip.exact {
                net.apply_change(k, xc)?;
            } else {
                apply_clipped(net, k, xc, &mut out.counters_z);
            }
            cache_c.refresh_fired(net, k, xc, env_max);
            out.counters_z.jumps += 1;
            obs_coarse.on_jump(t, k, xc);
        } else {
            out.counters_z.phantoms += 1;
        }
    }
}

/// Fine/coarse tau-leap pair, recorded.
pub fn couple_tau_leap_pair(
    net: &ReactionNetwork,
    x0: &State,
    t_end: f64,
    coarse_step: f64,
    refinement: u32,
    mut stream: RandomStream,
    exact_channels: &[usize],
) -> Result<(TrajectoryPath, TrajectoryPath), SimError> {
    let mut rec_f = Recorder::new();
    let mut rec_c = Recorder::new();
    couple_tau_leap_pair_with(
        net,
        None,
        x0,
        t_end,
        coarse_step,
        refinement,
        exact_channels,
        &mut stream,
        &mut rec_f,
        &mut rec_c,
    )?;
    Ok((rec_f.into_path(), rec_c.into_path()))
}

/// Exact/tau-leap corrector pair under the stacked coupling. The approximate
/// component's frozen channels carry their step-frozen rates as a valid
/// time-dependent propensity; strips have height
/// `max(exact-side bound, frozen rate)` per channel and are refreshed at
/// every event and at every step boundary. Batched approximate firings apply
/// at the step boundary; spread and exact ones apply when they fire.
#[allow(clippy::too_many_arguments)]
pub fn couple_exact_tau_with(
    net: &ReactionNetwork,
    env: Option<&EnvironmentPath>,
    x0: &State,
    t_end: f64,
    step: f64,
    exact_channels: &[usize],
    stream: &mut RandomStream,
    obs_x: &mut impl PathObserver,
    obs_z: &mut impl PathObserver,
) -> Result<PairOutcome, SimError> {
    let env_max = check_env(net, env)?;
    let steps = steps_for(t_end, step)?;
    let part = partition_channels(net, exact_channels);
    let k_count = net.channel_count();
    let mut is_batch = vec![false; k_count];
    for &k in &part.batch {
        is_batch[k] = true;
    }
    let mut is_exact = vec![false; k_count];
    for s in &part.strips {
        if s.exact {
            is_exact[s.channel] = true;
        }
    }
    let mut x = x0.counts().to_vec();
    let mut z = x0.counts().to_vec();
    let mut pend_z = vec![0i64; z.len()];
    let mut cache_x = PropensityCache::new(net);
    let mut cache_z = PropensityCache::new(net);
    cache_x.refresh(net, &x, env_max);
    cache_z.refresh(net, &z, env_max);
    let mut frozen_z = vec![0.0f64; k_count];
    let mut strip_heights = vec![0.0f64; k_count];
    let mut out = PairOutcome::default();
    let base_draws = stream.counter();
    obs_x.on_start(&x);
    obs_z.on_start(&z);
    for n in 0..steps {
        let s0 = step * n as f64;
        let s1 = if n + 1 == steps { t_end } else { step * (n + 1) as f64 };
        let _ = cache_z.rates_into(net, s0, env, &mut frozen_z);
        let mut t = s0;
        loop {
            let mut total = 0.0;
            for k in 0..k_count {
                let zb = if is_exact[k] { cache_z.bounds()[k] } else { frozen_z[k] };
                let b = cache_x.bounds()[k].max(zb);
                strip_heights[k] = b;
                total += b;
            }
            if total <= 0.0 {
                break;
            }
            let dt = stream.draw_unit_exponential() / total;
            if t + dt > s1 {
                break;
            }
            t += dt;
            out.counters_x.candidates += 1;
            out.counters_z.candidates += 1;
            let y = stream.draw_uniform() * total;
            let mut cum = 0.0;
            let mut strip = k_count - 1;
            for (k, &b) in strip_heights.iter().enumerate() {
                cum += b;
                if y < cum {
                    strip = k;
                    break;
                }
            }
            let offset = y - (cum - strip_heights[strip]);
            let rate_x = cache_x.rate_of(net, strip, t, env);
            let rate_z = if is_exact[strip] {
                cache_z.rate_of(net, strip, t, env)
            } else {
                frozen_z[strip]
            };
            let limit = strip_heights[strip] * (1.0 + BOUND_SLACK);
            if rate_x > limit || rate_z > limit {
                return Err(SimError::BoundViolation {
                    channel: strip,
                    t,
                    rate: rate_x.max(rate_z),
                    bound: strip_heights[strip],
                });
            }
            if offset < rate_x {
                net.apply_change(strip, &mut x)?;
                cache_x.refresh_fired(net, strip, &x, env_max);
                out.counters_x.jumps += 1;
                obs_x.on_jump(t, strip, &x);
            } else {
                out.counters_x.phantoms += 1;
            }
            if offset < rate_z {
                out.counters_z.jumps += 1;
                if is_batch[strip] {
                    for (j, &d) in net.channels()[strip].change.iter().enumerate() {
                        pend_z[j] += d;
                    }
                } else if is_exact[strip] {
                    net.apply_change(strip, &mut z)?;
                    cache_z.refresh_fired(net, strip, &z, env_max);
                    obs_z.on_jump(t, strip, &z);
                } else {
                    apply_clipped(net, strip, &mut z, &mut out.counters_z);
                    cache_z.refresh_fired(net, strip, &z, env_max);
                    obs_z.on_jump(t, strip, &z);
                }
            } else {
                out.counters_z.phantoms += 1;
            }
        }
        apply_pending(&mut z, &mut pend_z, &mut out.counters_z);
        cache_z.refresh(net, &z, env_max);
        obs_z.on_batch(s1, &z);
    }
    obs_x.on_end(t_end, &x);
    obs_z.on_end(t_end, &z);
    out.draws = draws_since(stream, base_draws);
    Ok(out)
}

/// Exact/tau-leap corrector pair, recorded.
pub fn couple_exact_tau(
    net: &ReactionNetwork,
    x0: &State,
    t_end: f64,
    step: f64,
    exact_channels: &[usize],
    mut stream: RandomStream,
) -> Result<(TrajectoryPath, TrajectoryPath), SimError> {
    let mut rec_x = Recorder::new();
    let mut rec_z = Recorder::new();
    couple_exact_tau_with(
        net,
        None,
        x0,
        t_end,
        step,
        exact_channels,
        &mut stream,
        &mut rec_x,
        &mut rec_z,
    )?;
    Ok((rec_x.into_path(), rec_z.into_path()))
}

fn draws_since(stream: &RandomStream, base: DrawCounter) -> DrawCounter {
    let now = stream.counter();
    DrawCounter {
        exponentials: now.exponentials - base.exponentials,
        uniforms: now.uniforms - base.uniforms,
        poissons: now.poissons - base.poissons,
    }
}
