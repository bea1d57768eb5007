//! Built-in model catalog.
//!
//! Four models exercised throughout the test suite and the CLI:
//!
//! - `model1`: constant-rate transcription/translation (mRNA + protein).
//! - `dimer`: transcription/translation with dimerization and a sinusoidal
//!   transcription rate (period 24, time in hours).
//! - `sir`: an SIR epidemic with yearly birth pulses, population-proportional
//!   births, and frequency-dependent transmission (period 1, time in years).
//!   Its numeric parameters are documented defaults, not published values;
//!   analyses on it should compare couplings rather than reproduce numbers.
//! - `mmp`: a bimolecular conversion whose association rate is modulated by a
//!   three-level Markov environment.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::EnvironmentSpec;
use crate::network::{
    ModelError, PropensitySpec, ReactionChannel, ReactionNetwork, State, StateFactor, TimeRate,
};

pub use crate::math::bessel_i0;

/// Pulse-shaped birth rate with one-period mean `m`: `k exp(-s cos(pi t -
/// phi)^2)` with `k = m e^{s/2} / I0(s/2)`.
pub fn birth_pulse_rate(t: f64, m: f64, s: f64, phi: f64) -> f64 {
    let k = m * crate::math::exp(s / 2.0) / bessel_i0(s / 2.0);
    let c = crate::math::cos(crate::math::PI * t - phi);
    k * crate::math::exp(-s * c * c)
}

/// A ready-to-simulate system: network, optional modulating environment,
/// initial state, and default horizon.
#[derive(Clone, Debug)]
pub struct System {
    pub network: ReactionNetwork,
    pub environment: Option<EnvironmentSpec>,
    pub initial: State,
    pub horizon: f64,
    pub species_names: Vec<String>,
}

/// Named scalar parameters for a catalog model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, f64)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
    }

    pub fn set(&mut self, name: &str, value: f64) {
        if let Some(e) = self.entries.iter_mut().find(|(n, _)| n == name) {
            e.1 = value;
        } else {
            self.entries.push((String::from(name), value));
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// Identifiers of the built-in models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CatalogId {
    Model1,
    Dimer,
    Sir,
    Mmp,
}

impl CatalogId {
    pub const ALL: [CatalogId; 4] =
        [CatalogId::Model1, CatalogId::Dimer, CatalogId::Sir, CatalogId::Mmp];

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "model1" => Some(CatalogId::Model1),
            "dimer" => Some(CatalogId::Dimer),
            "sir" => Some(CatalogId::Sir),
            "mmp" => Some(CatalogId::Mmp),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CatalogId::Model1 => "model1",
            CatalogId::Dimer => "dimer",
            CatalogId::Sir => "sir",
            CatalogId::Mmp => "mmp",
        }
    }

    pub fn species(&self) -> &'static [&'static str] {
        match self {
            CatalogId::Model1 => &["M", "P"],
            CatalogId::Dimer => &["M", "P", "D"],
            CatalogId::Sir => &["S", "I", "R"],
            CatalogId::Mmp => &["S1", "S2", "S3", "S4"],
        }
    }

    /// Default parameter values, overridable by name in [`CatalogId::build`].
    pub fn defaults(&self) -> ParamSet {
        let mut p = ParamSet::new();
        match self {
            CatalogId::Model1 => {
                p.set("birth", 60.0);
                p.set("translation", 100.0);
                p.set("deg-m", 1.0);
                p.set("deg-p", 1.0);
            }
            CatalogId::Dimer => {
                p.set("base", 60.0);
                p.set("amplitude", 15.0);
                p.set("period", 24.0);
                p.set("translation", 100.0);
                p.set("deg-m", 1.0);
                p.set("deg-p", 1.0);
                p.set("dimerization", 3e-7);
                p.set("deg-d", 10.0);
            }
            CatalogId::Sir => {
                // documented guesses, chosen so pathogen extinction within
                // ten years is genuinely uncertain (roughly one in four)
                // rather than near-certain; analyses on this model compare
                // couplings, not published values
                p.set("m", 0.4);
                p.set("gamma", 5.0);
                p.set("r0", 4.0);
                p.set("s", 10.0);
                p.set("phi", 0.0);
            }
            CatalogId::Mmp => {
                p.set("scale", 1e-3);
                p.set("unbind", 1.0);
                p.set("convert", 1.0);
            }
        }
        p
    }

    pub fn default_initial(&self) -> Vec<i64> {
        match self {
            CatalogId::Model1 => vec![0, 0],
            CatalogId::Dimer => vec![0, 1000, 0],
            CatalogId::Sir => vec![400, 50, 50],
            CatalogId::Mmp => vec![1000, 1000, 0, 0],
        }
    }

    pub fn default_horizon(&self) -> f64 {
        match self {
            CatalogId::Model1 => 10.0,
            CatalogId::Dimer => 20.0,
            CatalogId::Sir => 10.0,
            CatalogId::Mmp => 2.0,
        }
    }

    /// Build the system with named parameter overrides.
    pub fn build(&self, overrides: &ParamSet) -> Result<System, ModelError> {
        let mut params = self.defaults();
        for name in overrides.names() {
            if params.get(name).is_none() {
                return Err(ModelError::UnknownParameter(String::from(name)));
            }
        }
        for (name, value) in overrides.iter() {
            params.set(name, value);
        }
        let get = |n: &str| params.get(n).expect("default exists");
        let network = match self {
            CatalogId::Model1 => ReactionNetwork::new(
                2,
                vec![
                    ReactionChannel::from_stoichiometry(
                        2,
                        &[],
                        &[(0, 1)],
                        TimeRate::Constant(get("birth")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        2,
                        &[(0, 1)],
                        &[(0, 1), (1, 1)],
                        TimeRate::Constant(get("translation")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        2,
                        &[(0, 1)],
                        &[],
                        TimeRate::Constant(get("deg-m")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        2,
                        &[(1, 1)],
                        &[],
                        TimeRate::Constant(get("deg-p")),
                    ),
                ],
            )?,
            CatalogId::Dimer => ReactionNetwork::new(
                3,
                vec![
                    ReactionChannel::from_stoichiometry(
                        3,
                        &[],
                        &[(0, 1)],
                        TimeRate::Sinusoid {
                            base: get("base"),
                            amplitude: get("amplitude"),
                            period: get("period"),
                            phase: 0.0,
                        },
                    ),
                    ReactionChannel::from_stoichiometry(
                        3,
                        &[(0, 1)],
                        &[(0, 1), (1, 1)],
                        TimeRate::Constant(get("translation")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        3,
                        &[(0, 1)],
                        &[],
                        TimeRate::Constant(get("deg-m")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        3,
                        &[(1, 1)],
                        &[],
                        TimeRate::Constant(get("deg-p")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        3,
                        &[(1, 2)],
                        &[(2, 1)],
                        TimeRate::Constant(get("dimerization")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        3,
                        &[(2, 1)],
                        &[],
                        TimeRate::Constant(get("deg-d")),
                    ),
                ],
            )?,
            CatalogId::Sir => {
                let m = get("m");
                let gamma = get("gamma");
                let beta = get("r0") * (m + gamma);
                let s = get("s");
                let phi = get("phi");
                ReactionNetwork::new(
                    3,
                    vec![
                        // births: rate B(t) * (S + I + R), adds a susceptible
                        ReactionChannel::new(
                            vec![1, 0, 0],
                            PropensitySpec::new(
                                TimeRate::birth_pulse(m, s, phi)?,
                                StateFactor::Sum(vec![0, 1, 2]),
                            ),
                        ),
                        ReactionChannel::from_stoichiometry(
                            3,
                            &[(0, 1)],
                            &[],
                            TimeRate::Constant(m),
                        ),
                        ReactionChannel::from_stoichiometry(
                            3,
                            &[(1, 1)],
                            &[],
                            TimeRate::Constant(m),
                        ),
                        ReactionChannel::from_stoichiometry(
                            3,
                            &[(2, 1)],
                            &[],
                            TimeRate::Constant(m),
                        ),
                        // transmission: beta * S * I / (S + I + R)
                        ReactionChannel::new(
                            vec![-1, 1, 0],
                            PropensitySpec::new(
                                TimeRate::Constant(beta),
                                StateFactor::Frequency { a: 0, b: 1, denom: vec![0, 1, 2] },
                            ),
                        ),
                        ReactionChannel::from_stoichiometry(
                            3,
                            &[(1, 1)],
                            &[(2, 1)],
                            TimeRate::Constant(gamma),
                        ),
                    ],
                )?
            }
            CatalogId::Mmp => ReactionNetwork::new(
                4,
                vec![
                    ReactionChannel::from_stoichiometry(
                        4,
                        &[(0, 1), (1, 1)],
                        &[(2, 1)],
                        TimeRate::Modulated { scale: get("scale") },
                    ),
                    ReactionChannel::from_stoichiometry(
                        4,
                        &[(2, 1)],
                        &[(0, 1), (1, 1)],
                        TimeRate::Constant(get("unbind")),
                    ),
                    ReactionChannel::from_stoichiometry(
                        4,
                        &[(2, 1)],
                        &[(1, 1), (3, 1)],
                        TimeRate::Constant(get("convert")),
                    ),
                ],
            )?,
        };
        let environment = match self {
            CatalogId::Mmp => Some(
                EnvironmentSpec::new(
                    vec![0.5, 1.5, 5.0],
                    vec![
                        vec![0.0, 0.5, 0.5],
                        vec![0.5, 0.0, 0.5],
                        vec![0.5, 0.5, 0.0],
                    ],
                    0,
                )
                .expect("static environment is valid"),
            ),
            _ => None,
        };
        Ok(System {
            network,
            environment,
            initial: State::new(self.default_initial()).expect("nonnegative"),
            horizon: self.default_horizon(),
            species_names: self.species().iter().map(|s| String::from(*s)).collect(),
        })
    }

    /// Build with defaults.
    pub fn build_default(&self) -> System {
        self.build(&ParamSet::new()).expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;
    use crate::quad::adaptive_simpson;
    use crate::rng::{RandomStream, StreamId};

    #[test]
    fn bessel_i0_reference_values() {
        // power-series oracle evaluated independently and frozen
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.2660658777520082).abs() < 1e-13);
        assert!((bessel_i0(-1.0) - bessel_i0(1.0)).abs() == 0.0);
        // quadrature of the defining integral as an independent route; the
        // integrand is scaled by exp(-z) so its magnitude stays O(1)
        for &z in &[0.3, 1.0, 2.5, 5.0, 10.0, 50.0] {
            let scaled =
                adaptive_simpson(&|x: f64| (z * (x.cos() - 1.0)).exp(), 0.0, math::PI, 1e-13)
                    / math::PI;
            let series = bessel_i0(z) * (-z).exp();
            assert!(
                ((series - scaled) / scaled).abs() < 1e-11,
                "z={z}: {series} vs {scaled}"
            );
        }
    }

    #[test]
    fn birth_pulse_degenerate_synchrony() {
        // s = 0 collapses to the constant mean
        for t in [0.0, 0.3, 0.9, 2.4] {
            assert!((birth_pulse_rate(t, 0.1, 0.0, 0.0) - 0.1).abs() < 1e-14);
        }
    }

    #[test]
    fn birth_pulse_periodicity() {
        for i in 0..50 {
            let t = i as f64 * 0.173;
            let a = birth_pulse_rate(t, 0.1, 10.0, 0.4);
            let b = birth_pulse_rate(t + 1.0, 0.1, 10.0, 0.4);
            assert!((a - b).abs() < 1e-12 * a.max(1e-300), "t={t}");
        }
    }

    #[test]
    fn birth_pulse_one_period_average_is_mean() {
        let (m, s) = (0.1, 10.0);
        let avg = adaptive_simpson(&|t: f64| birth_pulse_rate(t, m, s, 0.0), 0.0, 1.0, 1e-10);
        assert!((avg - m).abs() < 1e-8, "{avg}");
    }

    #[test]
    fn catalog_propensity_audit() {
        // every channel of every model matches an independently written
        // scalar expression at random states and times
        let mut rng = RandomStream::new(2024, StreamId::new(0, 0, 0));
        for _ in 0..100 {
            let t = rng.draw_uniform() * 24.0;
            let m = (rng.draw_uniform() * 100.0) as i64;
            let p = (rng.draw_uniform() * 2000.0) as i64;
            let d = (rng.draw_uniform() * 10.0) as i64;

            let sys = CatalogId::Model1.build_default();
            let ch = sys.network.channels();
            let x = [m, p];
            assert_eq!(ch[0].propensity.evaluate(t, &x, None), 60.0);
            assert_eq!(ch[1].propensity.evaluate(t, &x, None), 100.0 * m as f64);
            assert_eq!(ch[2].propensity.evaluate(t, &x, None), m as f64);
            assert_eq!(ch[3].propensity.evaluate(t, &x, None), p as f64);

            let sys = CatalogId::Dimer.build_default();
            let ch = sys.network.channels();
            let x = [m, p, d];
            let lam1 = 60.0 + 15.0 * (math::TAU * t / 24.0).sin();
            assert!((ch[0].propensity.evaluate(t, &x, None) - lam1).abs() < 1e-12);
            assert_eq!(ch[1].propensity.evaluate(t, &x, None), 100.0 * m as f64);
            assert_eq!(ch[2].propensity.evaluate(t, &x, None), m as f64);
            assert_eq!(ch[3].propensity.evaluate(t, &x, None), p as f64);
            let dimerize = 3e-7 * (p as f64) * (p as f64 - 1.0) / 2.0;
            assert!((ch[4].propensity.evaluate(t, &x, None) - dimerize).abs() < 1e-12);
            assert_eq!(ch[5].propensity.evaluate(t, &x, None), 10.0 * d as f64);

            let sys = CatalogId::Sir.build_default();
            let ch = sys.network.channels();
            let (sv, iv, rv) = (m, p.min(500), d);
            let x = [sv, iv, rv];
            let n = (sv + iv + rv) as f64;
            let b = birth_pulse_rate(t, 0.4, 10.0, 0.0);
            assert!((ch[0].propensity.evaluate(t, &x, None) - b * n).abs() < 1e-9 * n.max(1.0));
            assert_eq!(ch[1].propensity.evaluate(t, &x, None), 0.4 * sv as f64);
            assert_eq!(ch[2].propensity.evaluate(t, &x, None), 0.4 * iv as f64);
            assert_eq!(ch[3].propensity.evaluate(t, &x, None), 0.4 * rv as f64);
            let beta = 4.0 * (0.4 + 5.0);
            let expected = if n == 0.0 {
                0.0
            } else {
                beta * sv as f64 * iv as f64 / n
            };
            assert!((ch[4].propensity.evaluate(t, &x, None) - expected).abs() < 1e-9);
            assert_eq!(ch[5].propensity.evaluate(t, &x, None), 5.0 * iv as f64);

            let sys = CatalogId::Mmp.build_default();
            let ch = sys.network.channels();
            let env = crate::env::EnvironmentPath::constant(1.5, 100.0);
            let x = [m, p, d, 3];
            let r1 = 1.5e-3 * m as f64 * p as f64;
            assert!((ch[0].propensity.evaluate(t, &x, Some(&env)) - r1).abs() < 1e-9);
            assert_eq!(ch[1].propensity.evaluate(t, &x, Some(&env)), d as f64);
            assert_eq!(ch[2].propensity.evaluate(t, &x, Some(&env)), d as f64);
        }
    }

    #[test]
    fn sir_transmission_zero_population_guard() {
        let sys = CatalogId::Sir.build_default();
        let ch = &sys.network.channels()[4];
        assert_eq!(ch.propensity.evaluate(0.5, &[0, 0, 0], None), 0.0);
    }

    #[test]
    fn model4_1_total_propensity_example() {
        // hand evaluation at t = 6, x = (0, 1000, 0): sin(2*pi*6/24) = 1
        let sys = CatalogId::Dimer.build_default();
        let x = State::new(vec![0, 1000, 0]).unwrap();
        let total = sys.network.total_propensity(6.0, &x, None);
        assert!((total - 1075.14985).abs() < 1e-9, "{total}");
    }

    #[test]
    fn model1_total_propensity_example() {
        let sys = CatalogId::Model1.build_default();
        let x = State::new(vec![0, 0]).unwrap();
        assert_eq!(sys.network.total_propensity(0.0, &x, None), 60.0);
    }

    #[test]
    fn dimer_r1_bound_is_75() {
        let sys = CatalogId::Dimer.build_default();
        let x = State::new(vec![0, 1000, 0]).unwrap();
        let certs = sys
            .network
            .certify_bound(0.0, 20.0, &x, 0.0, crate::network::BoundMode::PerChannel)
            .unwrap();
        assert_eq!(certs[0].bound_value, 75.0);
        assert_eq!(certs[0].escape_time, 20.0);
    }

    #[test]
    fn mmp_r1_bound_uses_environment_maximum() {
        let sys = CatalogId::Mmp.build_default();
        let env_max = sys.environment.as_ref().unwrap().max_level();
        assert_eq!(env_max, 5.0);
        let x = State::new(vec![1000, 1000, 0, 0]).unwrap();
        let certs = sys
            .network
            .certify_bound(0.0, 2.0, &x, env_max, crate::network::BoundMode::PerChannel)
            .unwrap();
        assert!((certs[0].bound_value - 5e-3 * 1000.0 * 1000.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_parameter_rejected() {
        let mut p = ParamSet::new();
        p.set("nonsense", 1.0);
        let err = CatalogId::Dimer.build(&p).unwrap_err();
        assert!(matches!(err, ModelError::UnknownParameter(_)));
    }

    #[test]
    fn bound_certificates_dominate_dense_samples() {
        // every channel of every catalog model, random (t, x, window) triples
        let mut rng = RandomStream::new(5150, StreamId::new(0, 0, 0));
        for id in CatalogId::ALL {
            let sys = id.build_default();
            let env = sys
                .environment
                .as_ref()
                .map(|_| crate::env::EnvironmentPath::constant(5.0, 1e9));
            for _ in 0..250 {
                let x: Vec<i64> = (0..sys.network.species_count())
                    .map(|_| (rng.draw_uniform() * 1500.0) as i64)
                    .collect();
                let t0 = rng.draw_uniform() * 30.0;
                let t1 = t0 + 0.1 + rng.draw_uniform() * 30.0;
                let state = State::new(x.clone()).unwrap();
                let certs = sys
                    .network
                    .certify_bound(t0, t1, &state, 5.0, crate::network::BoundMode::PerChannel)
                    .unwrap();
                for (k, ch) in sys.network.channels().iter().enumerate() {
                    for j in 0..=100 {
                        let s = t0 + (t1 - t0) * j as f64 / 100.0;
                        let v = ch.propensity.evaluate(s, &x, env.as_ref());
                        assert!(
                            v <= certs[k].bound_value * (1.0 + 1e-12),
                            "{} channel {k}: rate {v} above bound {} at s={s}",
                            id.name(),
                            certs[k].bound_value,
                        );
                    }
                }
            }
        }
    }
}
