//! Reaction networks with time-dependent propensities and certified bounds.
//!
//! A channel's propensity is a product of a time factor (drawn from a small
//! closed grammar of rate expressions) and a state factor (mass action, or
//! the frequency-dependent transmission form). Every time factor knows a
//! finite upper bound valid on any window, which is what the thinning
//! simulators and the stacked coupling consume as certificates.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::env::EnvironmentPath;
use crate::math;

/// Species counts. Coordinates are never negative in a valid state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct State(pub Vec<i64>);

impl State {
    /// Validates nonnegativity.
    pub fn new(counts: Vec<i64>) -> Result<Self, ModelError> {
        if let Some(i) = counts.iter().position(|&c| c < 0) {
            return Err(ModelError::NegativeState { species: i });
        }
        Ok(State(counts))
    }

    pub fn counts(&self) -> &[i64] {
        &self.0
    }
}

/// Errors arising from an invalid model definition or state arithmetic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelError {
    NoSpecies,
    NoChannels,
    ChangeVectorDimension { channel: usize, expected: usize, found: usize },
    SpeciesIndexOutOfRange { channel: usize, species: usize },
    NegativeRate { channel: usize },
    MissingEnvironment { channel: usize },
    NegativeState { species: usize },
    StateOverflow { species: usize },
    BadParameter { what: &'static str },
    UnknownParameter(alloc::string::String),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::NoSpecies => write!(f, "network must have at least one species"),
            ModelError::NoChannels => write!(f, "network must have at least one channel"),
            ModelError::ChangeVectorDimension { channel, expected, found } => write!(
                f,
                "channel {channel}: change vector has dimension {found}, expected {expected}"
            ),
            ModelError::SpeciesIndexOutOfRange { channel, species } => {
                write!(f, "channel {channel}: species index {species} out of range")
            }
            ModelError::NegativeRate { channel } => {
                write!(f, "channel {channel}: rate expression can evaluate negative")
            }
            ModelError::MissingEnvironment { channel } => write!(
                f,
                "channel {channel}: modulated rate requires an environment process"
            ),
            ModelError::NegativeState { species } => {
                write!(f, "species {species}: negative count")
            }
            ModelError::StateOverflow { species } => {
                write!(f, "species {species}: count overflow")
            }
            ModelError::BadParameter { what } => write!(f, "invalid parameter: {what}"),
            ModelError::UnknownParameter(name) => write!(f, "unknown parameter `{name}`"),
        }
    }
}

impl core::error::Error for ModelError {}

/// Time factor of a propensity, from the fixed rate-expression grammar.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeRate {
    /// `c`
    Constant(f64),
    /// `base + amplitude * sin(2*pi*(t - phase)/period)`
    Sinusoid { base: f64, amplitude: f64, period: f64, phase: f64 },
    /// `scale * exp(-synchrony * cos(pi*t - phase)^2)` where `scale` is the
    /// mean-preserving constant `mean * exp(s/2) / I0(s/2)`. Build via
    /// [`TimeRate::birth_pulse`].
    BirthPulse { scale: f64, synchrony: f64, phase: f64 },
    /// `scale * env(t)` where `env` is the modulating process realization.
    Modulated { scale: f64 },
}

impl TimeRate {
    /// Pulse rate with mean `mean` over one period, synchrony `s`, phase `phi`.
    pub fn birth_pulse(mean: f64, synchrony: f64, phase: f64) -> Result<Self, ModelError> {
        if !(mean > 0.0) || !(synchrony >= 0.0) {
            return Err(ModelError::BadParameter {
                what: "birth pulse needs mean > 0 and synchrony >= 0",
            });
        }
        let scale = mean * math::exp(synchrony / 2.0) / math::bessel_i0(synchrony / 2.0);
        Ok(TimeRate::BirthPulse { scale, synchrony, phase })
    }

    #[inline]
    pub fn eval(&self, t: f64, env: Option<&EnvironmentPath>) -> f64 {
        match *self {
            TimeRate::Constant(c) => c,
            TimeRate::Sinusoid { base, amplitude, period, phase } => {
                base + amplitude * math::sin(math::TAU * (t - phase) / period)
            }
            TimeRate::BirthPulse { scale, synchrony, phase } => {
                let c = math::cos(math::PI * t - phase);
                scale * math::exp(-synchrony * c * c)
            }
            TimeRate::Modulated { scale } => {
                let env = env.expect("modulated rate evaluated without environment");
                scale * env.value_at(t)
            }
        }
    }

    /// Upper bound on the factor over any window (these forms admit global
    /// suprema, so the bound does not depend on the window).
    #[inline]
    pub fn sup(&self, env_max: f64) -> f64 {
        match *self {
            TimeRate::Constant(c) => c,
            TimeRate::Sinusoid { base, amplitude, .. } => base + math::abs(amplitude),
            TimeRate::BirthPulse { scale, .. } => scale,
            TimeRate::Modulated { scale } => scale * env_max,
        }
    }

    #[inline]
    pub fn is_constant(&self) -> bool {
        matches!(self, TimeRate::Constant(_))
    }

    pub fn requires_environment(&self) -> bool {
        matches!(self, TimeRate::Modulated { .. })
    }
}

/// State factor of a propensity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StateFactor {
    /// Product over reactants of `(x_i choose m_i)`: the number of distinct
    /// reactant combinations. A rate constant given in the classical
    /// convention (e.g. `c/2 * x * (x-1)` written as `c` with a dimer
    /// reactant) multiplies this factor unchanged.
    MassAction(Vec<(usize, u32)>),
    /// `sum_i x_i` over the listed species (population-proportional rates).
    Sum(Vec<usize>),
    /// `x_a * x_b / sum_{i in denom} x_i`, zero when the denominator is zero.
    Frequency { a: usize, b: usize, denom: Vec<usize> },
}

impl StateFactor {
    #[inline]
    pub fn eval(&self, x: &[i64]) -> f64 {
        match self {
            StateFactor::MassAction(reactants) => {
                let mut f = 1.0;
                for &(i, m) in reactants {
                    f *= combinations(x[i], m);
                    if f == 0.0 {
                        return 0.0;
                    }
                }
                f
            }
            StateFactor::Sum(members) => members.iter().map(|&i| x[i]).sum::<i64>() as f64,
            StateFactor::Frequency { a, b, denom } => {
                let total: i64 = denom.iter().map(|&i| x[i]).sum();
                if total == 0 {
                    0.0
                } else {
                    (x[*a] as f64) * (x[*b] as f64) / total as f64
                }
            }
        }
    }

    /// Factor bound for a frozen state: exact for mass action and sums; the
    /// population-quarter bound for the frequency form, which stays valid
    /// while the denominator total is unchanged.
    #[inline]
    pub fn bound_factor(&self, x: &[i64]) -> f64 {
        match self {
            StateFactor::MassAction(_) | StateFactor::Sum(_) => self.eval(x),
            StateFactor::Frequency { denom, .. } => {
                let total: i64 = denom.iter().map(|&i| x[i]).sum();
                total as f64 / 4.0
            }
        }
    }

    fn max_species(&self) -> Option<usize> {
        self.reads().max()
    }

    /// Species indices this factor reads.
    pub fn reads(&self) -> impl Iterator<Item = usize> + '_ {
        let slice: &[usize] = &[];
        let (pairs, plain, extra) = match self {
            StateFactor::MassAction(r) => (r.as_slice(), slice, [None, None]),
            StateFactor::Sum(members) => (&[][..], members.as_slice(), [None, None]),
            StateFactor::Frequency { a, b, denom } => {
                (&[][..], denom.as_slice(), [Some(*a), Some(*b)])
            }
        };
        pairs
            .iter()
            .map(|&(i, _)| i)
            .chain(plain.iter().copied())
            .chain(extra.into_iter().flatten())
    }
}

/// Number of distinct ways to pick `m` molecules out of `x`.
#[inline]
fn combinations(x: i64, m: u32) -> f64 {
    if x < m as i64 {
        return 0.0;
    }
    let mut f = 1.0;
    for j in 0..m {
        f *= (x - j as i64) as f64;
    }
    for j in 2..=m {
        f /= j as f64;
    }
    f
}

/// Mass-action propensity: `rate` times the number of distinct reactant
/// combinations in `x`. `reactants` pairs a species index with its
/// multiplicity.
pub fn mass_action_propensity(rate: f64, reactants: &[(usize, u32)], x: &[i64]) -> f64 {
    let mut f = rate;
    for &(i, m) in reactants {
        f *= combinations(x[i], m);
    }
    f
}

/// An evaluatable rate together with its upper-bound provider.
#[derive(Clone, Debug, PartialEq)]
pub struct PropensitySpec {
    pub time: TimeRate,
    pub state: StateFactor,
}

impl PropensitySpec {
    pub fn new(time: TimeRate, state: StateFactor) -> Self {
        Self { time, state }
    }

    #[inline]
    pub fn evaluate(&self, t: f64, x: &[i64], env: Option<&EnvironmentPath>) -> f64 {
        let sf = self.state.eval(x);
        if sf == 0.0 {
            return 0.0;
        }
        self.time.eval(t, env) * sf
    }

    /// Certified bound over `[t0, t1]` for the frozen state `x`.
    pub fn bound(
        &self,
        t0: f64,
        t1: f64,
        x: &[i64],
        env_max: f64,
    ) -> Result<BoundCertificate, ModelError> {
        debug_assert!(t0 < t1);
        let value = self.time.sup(env_max) * self.state.bound_factor(x);
        Ok(BoundCertificate { bound_value: value, escape_time: t1 })
    }
}

/// A dominating rate valid up to `escape_time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCertificate {
    pub bound_value: f64,
    /// Time up to which the bound is valid; equals the window end when the
    /// bound is global on the window.
    pub escape_time: f64,
}

/// One reaction channel: a state-change vector plus its propensity.
#[derive(Clone, Debug, PartialEq)]
pub struct ReactionChannel {
    pub change: Vec<i64>,
    pub propensity: PropensitySpec,
}

impl ReactionChannel {
    pub fn new(change: Vec<i64>, propensity: PropensitySpec) -> Self {
        Self { change, propensity }
    }

    /// Channel from reactant/product stoichiometry with the mass-action state
    /// factor implied by the reactants.
    pub fn from_stoichiometry(
        species_count: usize,
        reactants: &[(usize, u32)],
        products: &[(usize, u32)],
        rate: TimeRate,
    ) -> Self {
        let mut change = vec![0i64; species_count];
        for &(i, m) in reactants {
            change[i] -= m as i64;
        }
        for &(i, m) in products {
            change[i] += m as i64;
        }
        ReactionChannel::new(
            change,
            PropensitySpec::new(rate, StateFactor::MassAction(reactants.to_vec())),
        )
    }
}

/// Mode for [`ReactionNetwork::certify_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMode {
    PerChannel,
    Total,
}

/// A reaction network: `species_count` species and an ordered channel list.
#[derive(Clone, Debug, PartialEq)]
pub struct ReactionNetwork {
    species_count: usize,
    channels: Vec<ReactionChannel>,
}

impl ReactionNetwork {
    pub fn new(
        species_count: usize,
        channels: Vec<ReactionChannel>,
    ) -> Result<Self, ModelError> {
        if species_count == 0 {
            return Err(ModelError::NoSpecies);
        }
        if channels.is_empty() {
            return Err(ModelError::NoChannels);
        }
        for (k, ch) in channels.iter().enumerate() {
            if ch.change.len() != species_count {
                return Err(ModelError::ChangeVectorDimension {
                    channel: k,
                    expected: species_count,
                    found: ch.change.len(),
                });
            }
            if let Some(max) = ch.propensity.state.max_species() {
                if max >= species_count {
                    return Err(ModelError::SpeciesIndexOutOfRange { channel: k, species: max });
                }
            }
            match ch.propensity.time {
                TimeRate::Constant(c) if c < 0.0 => {
                    return Err(ModelError::NegativeRate { channel: k })
                }
                TimeRate::Sinusoid { base, amplitude, .. } if base < math::abs(amplitude) => {
                    return Err(ModelError::NegativeRate { channel: k })
                }
                TimeRate::Modulated { scale } if scale < 0.0 => {
                    return Err(ModelError::NegativeRate { channel: k })
                }
                _ => {}
            }
        }
        Ok(Self { species_count, channels })
    }

    pub fn species_count(&self) -> usize {
        self.species_count
    }

    pub fn channels(&self) -> &[ReactionChannel] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn requires_environment(&self) -> bool {
        self.channels
            .iter()
            .any(|c| c.propensity.time.requires_environment())
    }

    /// Sum of all channel propensities at `(t, x)`.
    pub fn total_propensity(&self, t: f64, x: &State, env: Option<&EnvironmentPath>) -> f64 {
        self.channels
            .iter()
            .map(|c| c.propensity.evaluate(t, x.counts(), env))
            .sum()
    }

    /// All channel propensities at `(t, x)` into `out`.
    pub fn rates_into(
        &self,
        t: f64,
        x: &[i64],
        env: Option<&EnvironmentPath>,
        out: &mut [f64],
    ) {
        debug_assert_eq!(out.len(), self.channels.len());
        for (r, c) in out.iter_mut().zip(&self.channels) {
            *r = c.propensity.evaluate(t, x, env);
        }
    }

    /// Certified bounds over `[t0, t1]` for frozen state `x`: one certificate
    /// per channel, or a single total certificate.
    pub fn certify_bound(
        &self,
        t0: f64,
        t1: f64,
        x: &State,
        env_max: f64,
        mode: BoundMode,
    ) -> Result<Vec<BoundCertificate>, ModelError> {
        let per: Result<Vec<_>, _> = self
            .channels
            .iter()
            .map(|c| c.propensity.bound(t0, t1, x.counts(), env_max))
            .collect();
        let per = per?;
        match mode {
            BoundMode::PerChannel => Ok(per),
            BoundMode::Total => {
                let value = per.iter().map(|b| b.bound_value).sum();
                let escape = per
                    .iter()
                    .map(|b| b.escape_time)
                    .fold(f64::INFINITY, f64::min);
                Ok(vec![BoundCertificate { bound_value: value, escape_time: escape }])
            }
        }
    }

    /// Apply channel `k`'s change vector to `x` in place.
    pub fn apply_change(&self, k: usize, x: &mut [i64]) -> Result<(), ModelError> {
        for (i, (&d, xi)) in self.channels[k].change.iter().zip(x.iter_mut()).enumerate() {
            let next = xi.checked_add(d).ok_or(ModelError::StateOverflow { species: i })?;
            if next < 0 {
                return Err(ModelError::NegativeState { species: i });
            }
            *xi = next;
        }
        Ok(())
    }
}

// Time factor with derived constants precomputed, so hot-path evaluation
// avoids divisions and enum-field loads. Values agree with `TimeRate::eval`
// to within an ulp or two (the sinusoid argument is formed as
// `omega*t + shift` instead of `TAU*(t - phase)/period`).
#[derive(Clone, Debug)]
enum CompiledTime {
    Sin { base: f64, amplitude: f64, omega: f64, shift: f64 },
    Pulse { scale: f64, synchrony: f64, phase: f64 },
    Modulated { scale: f64 },
}

impl CompiledTime {
    fn new(t: &TimeRate) -> Option<CompiledTime> {
        match *t {
            TimeRate::Constant(_) => None,
            TimeRate::Sinusoid { base, amplitude, period, phase } => Some(CompiledTime::Sin {
                base,
                amplitude,
                omega: math::TAU / period,
                shift: -math::TAU * phase / period,
            }),
            TimeRate::BirthPulse { scale, synchrony, phase } => {
                Some(CompiledTime::Pulse { scale, synchrony, phase })
            }
            TimeRate::Modulated { scale } => Some(CompiledTime::Modulated { scale }),
        }
    }

    #[inline(always)]
    fn eval(&self, t: f64, env: Option<&EnvironmentPath>) -> f64 {
        match *self {
            CompiledTime::Sin { base, amplitude, omega, shift } => {
                base + amplitude * math::sin(omega * t + shift)
            }
            CompiledTime::Pulse { scale, synchrony, phase } => {
                let c = math::cos(math::PI * t - phase);
                scale * math::exp(-synchrony * c * c)
            }
            CompiledTime::Modulated { scale } => {
                scale * env.expect("modulated rate needs environment").value_at(t)
            }
        }
    }

    // Values at t0 + step, ..., t0 + 4*step. Sinusoids pay one sincos plus
    // the angle-addition recurrence; the step angle is expanded in a Taylor
    // series when it is small enough for full precision.
    #[inline]
    fn eval_arith4(&self, t0: f64, step: f64, env: Option<&EnvironmentPath>) -> [f64; 4] {
        match *self {
            CompiledTime::Sin { base, amplitude, omega, shift } => {
                let (s1, c1) = math::sincos(omega * (t0 + step) + shift);
                let delta = omega * step;
                let (sd, cd) = if math::abs(delta) < 1e-3 {
                    let d2 = delta * delta;
                    (delta * (1.0 - d2 / 6.0), 1.0 - d2 * (0.5 - d2 / 24.0))
                } else {
                    math::sincos(delta)
                };
                let s2 = s1 * cd + c1 * sd;
                let c2 = c1 * cd - s1 * sd;
                let s3 = s2 * cd + c2 * sd;
                let c3 = c2 * cd - s2 * sd;
                let s4 = s3 * cd + c3 * sd;
                [
                    base + amplitude * s1,
                    base + amplitude * s2,
                    base + amplitude * s3,
                    base + amplitude * s4,
                ]
            }
            _ => [
                self.eval(t0 + step, env),
                self.eval(t0 + 2.0 * step, env),
                self.eval(t0 + 3.0 * step, env),
                self.eval(t0 + 4.0 * step, env),
            ],
        }
    }
}

/// Per-state cache splitting channels into time-constant and time-varying
/// parts so hot loops touch only what actually changes. `refresh` recomputes
/// state factors and certified bounds; `refresh_fired` updates only the
/// channels whose factors read a species the fired channel changed, with a
/// periodic full recomputation that caps float drift in the running sums.
#[derive(Clone, Debug)]
pub struct PropensityCache {
    /// Cached rate for time-constant channels, 0.0 placeholder otherwise.
    const_rate: Vec<f64>,
    /// Cached state factor for time-varying channels.
    var_factor: Vec<f64>,
    /// Per-channel certified bound values for the cached state.
    bounds: Vec<f64>,
    /// Indices of time-varying channels.
    var_channels: Vec<usize>,
    /// Compiled time factors, parallel to `var_channels`.
    var_compiled: Vec<CompiledTime>,
    /// Time-factor values of the time-varying channels at `t_last`.
    var_time: Vec<f64>,
    /// For each channel, the channels whose state factor its firing touches.
    affected: Vec<Vec<u32>>,
    const_total: f64,
    bound_total: f64,
    t_last: f64,
    has_time: bool,
    refreshes: u32,
    track_bounds: bool,
}

impl PropensityCache {
    pub fn new(net: &ReactionNetwork) -> Self {
        let k_count = net.channel_count();
        let var_channels: Vec<usize> = net
            .channels
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.propensity.time.is_constant())
            .map(|(k, _)| k)
            .collect();
        let var_compiled = var_channels
            .iter()
            .filter_map(|&k| CompiledTime::new(&net.channels[k].propensity.time))
            .collect();
        let affected = (0..k_count)
            .map(|fired| {
                let change = &net.channels[fired].change;
                (0..k_count)
                    .filter(|&j| {
                        net.channels[j]
                            .propensity
                            .state
                            .reads()
                            .any(|i| change[i] != 0)
                    })
                    .map(|j| j as u32)
                    .collect()
            })
            .collect();
        Self {
            const_rate: vec![0.0; k_count],
            var_factor: vec![0.0; k_count],
            bounds: vec![0.0; k_count],
            var_channels,
            var_compiled,
            var_time: vec![0.0; k_count],
            affected,
            const_total: 0.0,
            bound_total: 0.0,
            t_last: f64::NAN,
            has_time: false,
            refreshes: 0,
            track_bounds: true,
        }
    }

    /// Cache that skips bound maintenance, for simulators that never thin.
    pub fn new_rates_only(net: &ReactionNetwork) -> Self {
        let mut cache = Self::new(net);
        cache.track_bounds = false;
        cache
    }

    /// Recompute cached state factors and bounds after a state change.
    pub fn refresh(&mut self, net: &ReactionNetwork, x: &[i64], env_max: f64) {
        self.const_total = 0.0;
        self.bound_total = 0.0;
        for k in 0..net.channels.len() {
            self.recompute_channel(net, k, x, env_max);
            self.bound_total += self.bounds[k];
            if net.channels[k].propensity.time.is_constant() {
                self.const_total += self.const_rate[k];
            }
        }
    }

    // Factor, rate, and bound of one channel from the live state. The state
    // factor is evaluated once and reused for the bound where they agree.
    #[inline]
    fn recompute_channel(&mut self, net: &ReactionNetwork, k: usize, x: &[i64], env_max: f64) {
        let ch = &net.channels[k];
        let factor = ch.propensity.state.eval(x);
        let bound_factor = match ch.propensity.state {
            StateFactor::MassAction(_) | StateFactor::Sum(_) => factor,
            StateFactor::Frequency { .. } => ch.propensity.state.bound_factor(x),
        };
        match ch.propensity.time {
            TimeRate::Constant(c) => {
                self.const_rate[k] = c * factor;
                if self.track_bounds {
                    self.bounds[k] = c * bound_factor;
                }
            }
            ref time => {
                self.var_factor[k] = factor;
                if self.track_bounds {
                    self.bounds[k] = time.sup(env_max) * bound_factor;
                }
            }
        }
    }

    /// Refresh after channel `fired` changed the state, touching only the
    /// channels that read an affected species.
    #[inline]
    pub fn refresh_fired(
        &mut self,
        net: &ReactionNetwork,
        fired: usize,
        x: &[i64],
        env_max: f64,
    ) {
        self.refreshes += 1;
        if self.refreshes & 0x1FFF == 0 {
            return self.refresh(net, x, env_max);
        }
        for idx in 0..self.affected[fired].len() {
            let k = self.affected[fired][idx] as usize;
            let old_bound = self.bounds[k];
            let old_rate = self.const_rate[k];
            self.recompute_channel(net, k, x, env_max);
            self.bound_total += self.bounds[k] - old_bound;
            self.const_total += self.const_rate[k] - old_rate;
        }
    }

    /// Total propensity at `t` for the cached state, reusing time-factor
    /// values when `t` matches the last `rates_into` call.
    #[inline]
    pub fn total(&self, _net: &ReactionNetwork, t: f64, env: Option<&EnvironmentPath>) -> f64 {
        let mut total = self.const_total;
        if self.has_time && t == self.t_last {
            for &k in &self.var_channels {
                total += self.var_time[k] * self.var_factor[k];
            }
        } else {
            for (i, &k) in self.var_channels.iter().enumerate() {
                let f = self.var_factor[k];
                if f != 0.0 {
                    total += self.var_compiled[i].eval(t, env) * f;
                }
            }
        }
        total
    }

    /// All per-channel rates at `t` for the cached state; returns their sum.
    #[inline]
    pub fn rates_into(
        &mut self,
        _net: &ReactionNetwork,
        t: f64,
        env: Option<&EnvironmentPath>,
        out: &mut [f64],
    ) -> f64 {
        out.copy_from_slice(&self.const_rate);
        let mut total = self.const_total;
        for (i, &k) in self.var_channels.iter().enumerate() {
            let tv = self.var_compiled[i].eval(t, env);
            self.var_time[k] = tv;
            let r = tv * self.var_factor[k];
            out[k] = r;
            total += r;
        }
        self.t_last = t;
        self.has_time = true;
        total
    }

    /// Rate of a single channel at `t` for the cached state.
    #[inline]
    pub fn rate_of(
        &self,
        net: &ReactionNetwork,
        k: usize,
        t: f64,
        env: Option<&EnvironmentPath>,
    ) -> f64 {
        let ch = &net.channels[k];
        if ch.propensity.time.is_constant() {
            self.const_rate[k]
        } else {
            let f = self.var_factor[k];
            if f == 0.0 {
                0.0
            } else {
                let i = self.var_channels.iter().position(|&vk| vk == k).unwrap();
                self.var_compiled[i].eval(t, env) * f
            }
        }
    }

    /// Total propensities at the four times `t0 + i*step`, `i = 1..=4`, for
    /// the cached state.
    #[inline]
    pub fn totals_arith4(
        &self,
        _net: &ReactionNetwork,
        t0: f64,
        step: f64,
        env: Option<&EnvironmentPath>,
    ) -> [f64; 4] {
        let mut out = [self.const_total; 4];
        for (i, &k) in self.var_channels.iter().enumerate() {
            let f = self.var_factor[k];
            if f != 0.0 {
                let tv = self.var_compiled[i].eval_arith4(t0, step, env);
                out[0] += tv[0] * f;
                out[1] += tv[1] * f;
                out[2] += tv[2] * f;
                out[3] += tv[3] * f;
            }
        }
        out
    }

    /// Per-channel certified bound values for the cached state.
    #[inline]
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Sum of the per-channel bounds: a certified total-propensity bound.
    #[inline]
    pub fn bound_total(&self) -> f64 {
        self.bound_total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn birth_death() -> ReactionNetwork {
        ReactionNetwork::new(
            1,
            vec![
                ReactionChannel::from_stoichiometry(1, &[], &[(0, 1)], TimeRate::Constant(5.0)),
                ReactionChannel::from_stoichiometry(1, &[(0, 1)], &[], TimeRate::Constant(1.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn mass_action_examples() {
        // linear: rate 100, one reactant of species 0, x = (3, 50)
        assert_eq!(mass_action_propensity(100.0, &[(0, 1)], &[3, 50]), 300.0);
        // absorbing zero
        assert_eq!(mass_action_propensity(7.0, &[(0, 1)], &[0, 9]), 0.0);
        // dimerization: 3e-7 * C(1000, 2) = 3e-7 * 1000*999/2
        let v = mass_action_propensity(3e-7, &[(1, 2)], &[0, 1000]);
        assert!((v - 0.14985).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mass_action_monotone_in_reactants() {
        let mut s = crate::rng::RandomStream::new(5, crate::rng::StreamId::new(0, 0, 0));
        for _ in 0..200 {
            let x0 = (s.draw_uniform() * 50.0) as i64;
            let x1 = (s.draw_uniform() * 50.0) as i64;
            let lo = mass_action_propensity(2.5, &[(0, 2), (1, 1)], &[x0, x1]);
            let hi = mass_action_propensity(2.5, &[(0, 2), (1, 1)], &[x0 + 1, x1]);
            let hi2 = mass_action_propensity(2.5, &[(0, 2), (1, 1)], &[x0, x1 + 1]);
            assert!(hi >= lo && hi2 >= lo);
        }
    }

    #[test]
    fn total_propensity_zero_state() {
        let net = ReactionNetwork::new(
            2,
            vec![
                ReactionChannel::from_stoichiometry(2, &[(0, 1)], &[], TimeRate::Constant(3.0)),
                ReactionChannel::from_stoichiometry(2, &[(1, 2)], &[], TimeRate::Constant(9.0)),
            ],
        )
        .unwrap();
        let x = State::new(vec![0, 0]).unwrap();
        assert_eq!(net.total_propensity(0.0, &x, None), 0.0);
    }

    #[test]
    fn constant_channel_bound_is_tight() {
        let net = birth_death();
        let x = State::new(vec![4]).unwrap();
        let certs = net.certify_bound(0.0, 3.0, &x, 0.0, BoundMode::PerChannel).unwrap();
        assert_eq!(certs[0].bound_value, 5.0);
        assert_eq!(certs[0].escape_time, 3.0);
        assert_eq!(certs[1].bound_value, 4.0);
        let total = net.certify_bound(0.0, 3.0, &x, 0.0, BoundMode::Total).unwrap();
        assert_eq!(total.len(), 1);
        assert_eq!(total[0].bound_value, 9.0);
    }

    #[test]
    fn sinusoid_bound_covers_dense_samples() {
        let rate = TimeRate::Sinusoid { base: 60.0, amplitude: 15.0, period: 24.0, phase: 0.0 };
        assert_eq!(rate.sup(0.0), 75.0);
        for i in 0..=1000 {
            let t = i as f64 * 0.05;
            let v = rate.eval(t, None);
            assert!(v >= 0.0 && v <= 75.0);
        }
    }

    #[test]
    fn negative_sinusoid_rejected() {
        let err = ReactionNetwork::new(
            1,
            vec![ReactionChannel::from_stoichiometry(
                1,
                &[],
                &[(0, 1)],
                TimeRate::Sinusoid { base: 1.0, amplitude: 2.0, period: 1.0, phase: 0.0 },
            )],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::NegativeRate { channel: 0 });
    }

    #[test]
    fn frequency_factor_and_guard() {
        let f = StateFactor::Frequency { a: 0, b: 1, denom: vec![0, 1, 2] };
        assert_eq!(f.eval(&[400, 50, 50]), 400.0 * 50.0 / 500.0);
        assert_eq!(f.eval(&[0, 0, 0]), 0.0);
        // quarter-population bound dominates
        assert!(f.bound_factor(&[400, 50, 50]) >= f.eval(&[400, 50, 50]));
        assert_eq!(f.bound_factor(&[400, 50, 50]), 125.0);
    }

    #[test]
    fn apply_change_guards() {
        let net = birth_death();
        let mut x = [0i64];
        assert_eq!(
            net.apply_change(1, &mut x),
            Err(ModelError::NegativeState { species: 0 })
        );
        let mut x = [i64::MAX];
        assert_eq!(
            net.apply_change(0, &mut x),
            Err(ModelError::StateOverflow { species: 0 })
        );
    }

    #[test]
    fn cache_matches_direct_evaluation() {
        let net = ReactionNetwork::new(
            2,
            vec![
                ReactionChannel::from_stoichiometry(
                    2,
                    &[],
                    &[(0, 1)],
                    TimeRate::Sinusoid { base: 60.0, amplitude: 15.0, period: 24.0, phase: 0.0 },
                ),
                ReactionChannel::from_stoichiometry(2, &[(0, 1)], &[(0, 1), (1, 1)], TimeRate::Constant(100.0)),
                ReactionChannel::from_stoichiometry(2, &[(1, 2)], &[], TimeRate::Constant(0.5)),
            ],
        )
        .unwrap();
        let mut cache = PropensityCache::new(&net);
        let mut s = crate::rng::RandomStream::new(11, crate::rng::StreamId::new(0, 0, 0));
        for _ in 0..300 {
            let x = [(s.draw_uniform() * 40.0) as i64, (s.draw_uniform() * 40.0) as i64];
            let t = s.draw_uniform() * 48.0;
            cache.refresh(&net, &x, 0.0);
            let state = State::new(x.to_vec()).unwrap();
            let direct = net.total_propensity(t, &state, None);
            let cached = cache.total(&net, t, None);
            assert!((direct - cached).abs() <= 1e-12 * direct.abs().max(1.0));
            let mut out = [0.0; 3];
            cache.rates_into(&net, t, None, &mut out);
            let mut direct_rates = [0.0; 3];
            net.rates_into(t, &x, None, &mut direct_rates);
            for (a, b) in out.iter().zip(&direct_rates) {
                assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }
}
