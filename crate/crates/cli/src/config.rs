//! TOML model and experiment configuration.
//!
//! Model files are key-value tables with nested sections. Rate expressions
//! come from a fixed grammar: constants, sinusoids
//! `base + amplitude*sin(2*pi*(t-phase)/period)`, pulse rates
//! `k*exp(-synchrony*cos(pi*t-phase)^2)` with mean-preserving `k`, and
//! references to the model's modulating environment. Numeric fields may name
//! an entry of `[parameters]` as `"$name"`, which is what the sensitivity
//! driver perturbs. See the README for the full grammar.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use inhomog_core::env::EnvironmentSpec;
use inhomog_core::models::{CatalogId, ParamSet, System};
use inhomog_core::network::{
    PropensitySpec, ReactionChannel, ReactionNetwork, State, StateFactor, TimeRate,
};

/// Configuration errors carry the offending field path.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: ModelSection,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    pub environment: Option<EnvironmentSection>,
    #[serde(rename = "channel", default)]
    pub channels: Vec<ChannelSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: Option<String>,
    pub species: Vec<String>,
    pub horizon: f64,
    pub initial: Vec<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub states: Vec<f64>,
    pub initial: f64,
    pub transitions: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default)]
    pub reactants: BTreeMap<String, u32>,
    #[serde(default)]
    pub products: BTreeMap<String, u32>,
    pub rate: RateExpr,
    #[serde(rename = "state-factor")]
    pub state_factor: Option<StateFactorExpr>,
}

/// A number or a `"$name"` reference into `[parameters]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Literal(f64),
    Reference(String),
}

impl Num {
    fn resolve(&self, params: &BTreeMap<String, f64>, at: &str) -> Result<f64, ConfigError> {
        match self {
            Num::Literal(v) => Ok(*v),
            Num::Reference(s) => {
                let name = s.strip_prefix('$').ok_or_else(|| {
                    ConfigError::new(at, format!("expected number or \"$param\", got {s:?}"))
                })?;
                params.get(name).copied().ok_or_else(|| {
                    ConfigError::new(at, format!("parameter `{name}` is not defined"))
                })
            }
        }
    }
}

fn zero() -> Num {
    Num::Literal(0.0)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum RateExpr {
    Shorthand(Num),
    Table(RateTable),
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateTable {
    Constant {
        value: Num,
    },
    Sinusoid {
        base: Num,
        amplitude: Num,
        period: Num,
        #[serde(default = "zero")]
        phase: Num,
    },
    Pulse {
        mean: Num,
        synchrony: Num,
        #[serde(default = "zero")]
        phase: Num,
    },
    Modulated {
        scale: Num,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateFactorExpr {
    /// Explicit mass action over the reactants (also the default).
    MassAction,
    /// Population sum over the listed species.
    Sum { species: Vec<String> },
    /// `x_a * x_b / sum(denominator)`.
    Frequency { numerator: [String; 2], denominator: Vec<String> },
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<ModelFile, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::new("model", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ModelFile, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    fn species_index(&self, name: &str, at: &str) -> Result<usize, ConfigError> {
        self.model
            .species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| ConfigError::new(at, format!("unknown species `{name}`")))
    }

    /// Build the system with parameter overrides applied on top of
    /// `[parameters]`.
    pub fn build(&self, overrides: &ParamSet) -> Result<System, ConfigError> {
        let mut params = self.parameters.clone();
        for (name, value) in overrides.iter() {
            if !params.contains_key(name) {
                return Err(ConfigError::new(
                    "parameters",
                    format!("cannot perturb `{name}`: not declared in [parameters]"),
                ));
            }
            params.insert(name.to_string(), value);
        }
        let d = self.model.species.len();
        if self.model.initial.len() != d {
            return Err(ConfigError::new(
                "model.initial",
                format!("expected {d} entries, got {}", self.model.initial.len()),
            ));
        }
        if self.channels.is_empty() {
            return Err(ConfigError::new("channel", "at least one channel is required"));
        }
        let mut channels = Vec::new();
        for (i, ch) in self.channels.iter().enumerate() {
            let at = format!("channel[{i}]");
            let mut reactants = Vec::new();
            for (name, &mult) in &ch.reactants {
                reactants.push((self.species_index(name, &at)?, mult));
            }
            let mut change = vec![0i64; d];
            for &(idx, mult) in &reactants {
                change[idx] -= mult as i64;
            }
            for (name, &mult) in &ch.products {
                change[self.species_index(name, &at)?] += mult as i64;
            }
            let time = match &ch.rate {
                RateExpr::Shorthand(num) => {
                    TimeRate::Constant(num.resolve(&params, &format!("{at}.rate"))?)
                }
                RateExpr::Table(t) => self.resolve_rate(t, &params, &at)?,
            };
            let state = match &ch.state_factor {
                None | Some(StateFactorExpr::MassAction) => StateFactor::MassAction(reactants),
                Some(StateFactorExpr::Sum { species }) => {
                    let mut idx = Vec::new();
                    for s in species {
                        idx.push(self.species_index(s, &at)?);
                    }
                    StateFactor::Sum(idx)
                }
                Some(StateFactorExpr::Frequency { numerator, denominator }) => {
                    let a = self.species_index(&numerator[0], &at)?;
                    let b = self.species_index(&numerator[1], &at)?;
                    let mut denom = Vec::new();
                    for s in denominator {
                        denom.push(self.species_index(s, &at)?);
                    }
                    StateFactor::Frequency { a, b, denom }
                }
            };
            channels.push(ReactionChannel::new(change, PropensitySpec::new(time, state)));
        }
        let network = ReactionNetwork::new(d, channels)
            .map_err(|e| ConfigError::new("channel", e.to_string()))?;
        let environment = match &self.environment {
            None => None,
            Some(env) => {
                let initial = env
                    .states
                    .iter()
                    .position(|&v| v == env.initial)
                    .ok_or_else(|| {
                        ConfigError::new(
                            "environment.initial",
                            "initial value must be one of `states`",
                        )
                    })?;
                Some(
                    EnvironmentSpec::new(env.states.clone(), env.transitions.clone(), initial)
                        .map_err(|e| ConfigError::new("environment", e.to_string()))?,
                )
            }
        };
        if network.requires_environment() && environment.is_none() {
            return Err(ConfigError::new(
                "environment",
                "a modulated rate requires an [environment] section",
            ));
        }
        let initial = State::new(self.model.initial.clone())
            .map_err(|e| ConfigError::new("model.initial", e.to_string()))?;
        Ok(System {
            network,
            environment,
            initial,
            horizon: self.model.horizon,
            species_names: self.model.species.clone(),
        })
    }

    fn resolve_rate(
        &self,
        t: &RateTable,
        params: &BTreeMap<String, f64>,
        at: &str,
    ) -> Result<TimeRate, ConfigError> {
        Ok(match t {
            RateTable::Constant { value } => {
                TimeRate::Constant(value.resolve(params, &format!("{at}.rate.value"))?)
            }
            RateTable::Sinusoid { base, amplitude, period, phase } => TimeRate::Sinusoid {
                base: base.resolve(params, &format!("{at}.rate.base"))?,
                amplitude: amplitude.resolve(params, &format!("{at}.rate.amplitude"))?,
                period: period.resolve(params, &format!("{at}.rate.period"))?,
                phase: phase.resolve(params, &format!("{at}.rate.phase"))?,
            },
            RateTable::Pulse { mean, synchrony, phase } => TimeRate::birth_pulse(
                mean.resolve(params, &format!("{at}.rate.mean"))?,
                synchrony.resolve(params, &format!("{at}.rate.synchrony"))?,
                phase.resolve(params, &format!("{at}.rate.phase"))?,
            )
            .map_err(|e| ConfigError::new(format!("{at}.rate"), e.to_string()))?,
            RateTable::Modulated { scale } => TimeRate::Modulated {
                scale: scale.resolve(params, &format!("{at}.rate.scale"))?,
            },
        })
    }
}

/// Where a model comes from: a built-in name or a model file path.
#[derive(Debug, Clone)]
pub enum ModelRef {
    Builtin(CatalogId),
    File(std::path::PathBuf),
}

impl ModelRef {
    pub fn parse(s: &str) -> ModelRef {
        match CatalogId::from_name(s) {
            Some(id) => ModelRef::Builtin(id),
            None => ModelRef::File(std::path::PathBuf::from(s)),
        }
    }

    /// Build the system with parameter overrides.
    pub fn build(&self, overrides: &ParamSet) -> Result<System, ConfigError> {
        match self {
            ModelRef::Builtin(id) => id
                .build(overrides)
                .map_err(|e| ConfigError::new("model", e.to_string())),
            ModelRef::File(path) => ModelFile::load(path)?.build(overrides),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIMER_TOML: &str = r#"
[model]
species = ["M", "P", "D"]
horizon = 20.0
initial = [0, 1000, 0]

[parameters]
theta = 15.0

[[channel]]
products = { M = 1 }
rate = { kind = "sinusoid", base = 60.0, amplitude = "$theta", period = 24.0 }

[[channel]]
reactants = { M = 1 }
products = { M = 1, P = 1 }
rate = 100.0

[[channel]]
reactants = { M = 1 }
rate = 1.0

[[channel]]
reactants = { P = 1 }
rate = 1.0

[[channel]]
reactants = { P = 2 }
products = { D = 1 }
rate = 3e-7

[[channel]]
reactants = { D = 1 }
rate = 10.0
"#;

    #[test]
    fn dimer_file_matches_builtin() {
        let file = ModelFile::parse(DIMER_TOML).unwrap();
        let sys = file.build(&ParamSet::new()).unwrap();
        let builtin = CatalogId::Dimer.build_default();
        let x = State::new(vec![3, 800, 2]).unwrap();
        for t in [0.0, 3.7, 11.2] {
            let a = sys.network.total_propensity(t, &x, None);
            let b = builtin.network.total_propensity(t, &x, None);
            assert!((a - b).abs() < 1e-12, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn parameter_reference_and_override() {
        let file = ModelFile::parse(DIMER_TOML).unwrap();
        let mut p = ParamSet::new();
        p.set("theta", 0.0);
        let sys = file.build(&p).unwrap();
        let x = State::new(vec![0, 0, 0]).unwrap();
        // amplitude 0: rate is flat 60
        assert_eq!(sys.network.total_propensity(6.0, &x, None), 60.0);
    }

    #[test]
    fn unknown_species_reported_with_path() {
        let bad = r#"
[model]
species = ["A"]
horizon = 1.0
initial = [0]

[[channel]]
products = { B = 1 }
rate = 1.0
"#;
        let err = ModelFile::parse(bad).unwrap().build(&ParamSet::new()).unwrap_err();
        assert!(err.path.contains("channel[0]"), "{err}");
        assert!(err.message.contains('B'), "{err}");
    }

    #[test]
    fn unknown_perturbation_rejected() {
        let file = ModelFile::parse(DIMER_TOML).unwrap();
        let mut p = ParamSet::new();
        p.set("zeta", 1.0);
        let err = file.build(&p).unwrap_err();
        assert!(err.message.contains("zeta"), "{err}");
    }

    #[test]
    fn modulated_requires_environment() {
        let bad = r#"
[model]
species = ["A", "B"]
horizon = 1.0
initial = [5, 5]

[[channel]]
reactants = { A = 1 }
products = { B = 1 }
rate = { kind = "modulated", scale = 0.001 }
"#;
        let err = ModelFile::parse(bad).unwrap().build(&ParamSet::new()).unwrap_err();
        assert!(err.path.contains("environment"), "{err}");
    }
}
