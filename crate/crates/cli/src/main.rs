//! Command-line entry point.
//!
//! Four subcommands: `simulate` (trajectory dumps), `couple` (coupled-pair
//! dumps and a variance curve), `sensitivity` (finite-difference parametric
//! sensitivity), and `mlmc` (multilevel expectation estimation). Each takes
//! an optional `--config <file>` TOML experiment description; flags override
//! config values. Exit codes: 0 success, 2 configuration error, 3 simulation
//! error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use inhomog_core::coupling::CouplingStrategy;
use inhomog_core::estimate::{Functional, MlmcConfig};
use inhomog_core::models::ParamSet;

use inhomog_ssa::config::{ConfigError, ModelRef};
use inhomog_ssa::runner::{
    self, CoupleSpec, MlmcSpec, RunError, SensitivitySpec, SimMethod, SimulateSpec,
};

#[derive(Parser)]
#[command(
    name = "inhomog-ssa",
    about = "Exact simulation, coupled paths, sensitivities, and multilevel Monte Carlo \
             for reaction networks with time-dependent rates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate trajectories and dump them as CSV.
    Simulate(SimulateArgs),
    /// Generate coupled pairs: per-pair CSV grids and a variance curve.
    Couple(CoupleArgs),
    /// Centered finite-difference parametric sensitivity.
    Sensitivity(SensitivityArgs),
    /// Unbiased multilevel Monte Carlo expectation.
    Mlmc(MlmcArgs),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in model name (model1|dimer|sir|mmp) or a model file path.
    #[arg(long)]
    model: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock time in reports (makes output nondeterministic).
    #[arg(long)]
    timing: bool,
    /// Output path (directory or file depending on the subcommand).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model parameter overrides, name=value.
    #[arg(long = "set", value_parser = parse_assign::<f64>)]
    set: Vec<(String, f64)>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Horizon override.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Number of trajectories.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Hitting-time solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct CoupleArgs {
    #[command(flatten)]
    common: Common,
    /// Horizon override.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Perturbation `param=h`.
    #[arg(long, value_parser = parse_assign::<f64>)]
    perturb: Option<(String, f64)>,
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    /// Number of coupled pairs.
    #[arg(long)]
    n: Option<u64>,
    /// Species the variance curve tracks.
    #[arg(long)]
    species: Option<String>,
    #[arg(long = "grid-points")]
    grid_points: Option<usize>,
    /// How many pairs to dump as per-pair CSVs.
    #[arg(long = "dump-pairs")]
    dump_pairs: Option<u64>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    common: Common,
    /// Horizon override.
    #[arg(long = "T")]
    horizon: Option<f64>,
    /// Parameter to differentiate against.
    #[arg(long)]
    param: Option<String>,
    /// Centered-difference width.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, value_enum)]
    coupling: Option<CouplingArg>,
    /// Number of coupled pairs.
    #[arg(long)]
    n: Option<u64>,
    /// Functional: endpoint, grid, or extinction.
    #[arg(long, value_enum)]
    functional: Option<FunctionalArg>,
    #[arg(long)]
    species: Option<String>,
    #[arg(long = "grid-points")]
    grid_points: Option<usize>,
    /// Extinction deadline.
    #[arg(long)]
    deadline: Option<f64>,
}

#[derive(Args)]
struct MlmcArgs {
    #[command(flatten)]
    common: Common,
    /// Refinement factor between levels.
    #[arg(long = "M")]
    refinement: Option<u32>,
    /// Step of the coarsest level (must divide the horizon).
    #[arg(long = "coarsest-step")]
    coarsest_step: Option<f64>,
    /// Number of approximate levels.
    #[arg(long)]
    levels: Option<u32>,
    #[arg(long = "target-sd")]
    target_sd: Option<f64>,
    /// Channels excluded from the Euler discretization (0-based).
    #[arg(long = "exact-channels", value_delimiter = ',')]
    exact_channels: Option<Vec<usize>>,
    #[arg(long)]
    species: Option<String>,
    /// Also run the direct estimator at the same target.
    #[arg(long = "compare-direct")]
    compare_direct: bool,
    /// Pilot samples per level.
    #[arg(long)]
    pilot: Option<u64>,
    #[arg(long = "max-samples")]
    max_samples: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Extrande,
    HittingTime,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Independent,
    Crn,
    Thinning,
    Stacked,
}

impl From<CouplingArg> for CouplingStrategy {
    fn from(c: CouplingArg) -> Self {
        match c {
            CouplingArg::Independent => CouplingStrategy::Independent,
            CouplingArg::Crn => CouplingStrategy::Crn,
            CouplingArg::Thinning => CouplingStrategy::ExtrandeThinning,
            CouplingArg::Stacked => CouplingStrategy::Stacked,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FunctionalArg {
    Endpoint,
    Grid,
    Extinction,
}

fn parse_assign<T: std::str::FromStr>(s: &str) -> Result<(String, T), String>
where
    T::Err: std::fmt::Display,
{
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = value.parse::<T>().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((name.to_string(), v))
}

// ---- experiment configuration file ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    simulate: SimulateSection,
    #[serde(default)]
    couple: CoupleSection,
    #[serde(default)]
    sensitivity: SensitivitySection,
    #[serde(default)]
    mlmc: MlmcSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ExperimentSection {
    model: Option<String>,
    seed: Option<u64>,
    threads: Option<usize>,
    timing: Option<bool>,
    out: Option<PathBuf>,
    #[serde(default)]
    set: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SimulateSection {
    horizon: Option<f64>,
    n: Option<u64>,
    method: Option<String>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct CoupleSection {
    param: Option<String>,
    h: Option<f64>,
    coupling: Option<String>,
    n: Option<u64>,
    species: Option<String>,
    grid_points: Option<usize>,
    dump_pairs: Option<u64>,
    horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SensitivitySection {
    param: Option<String>,
    h: Option<f64>,
    coupling: Option<String>,
    n: Option<u64>,
    functional: Option<String>,
    species: Option<String>,
    grid_points: Option<usize>,
    deadline: Option<f64>,
    horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct MlmcSection {
    refinement: Option<u32>,
    coarsest_step: Option<f64>,
    levels: Option<u32>,
    target_sd: Option<f64>,
    exact_channels: Option<Vec<usize>>,
    species: Option<String>,
    compare_direct: Option<bool>,
    pilot: Option<u64>,
    max_samples: Option<u64>,
}

fn load_experiment(path: Option<&PathBuf>) -> Result<ExperimentFile, ConfigError> {
    match path {
        None => Ok(ExperimentFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::new(p.display().to_string(), e.to_string()))?;
            toml::from_str(&text).map_err(|e| ConfigError::new("experiment", e.to_string()))
        }
    }
}

struct CommonResolved {
    model: ModelRef,
    params: ParamSet,
    seed: u64,
    threads: usize,
    timing: bool,
    out: Option<PathBuf>,
}

fn resolve_common(args: &Common, file: &ExperimentSection) -> Result<CommonResolved, ConfigError> {
    let model_name = args
        .model
        .clone()
        .or_else(|| file.model.clone())
        .ok_or_else(|| ConfigError::new("model", "no model given (flag --model or config)"))?;
    let mut params = ParamSet::new();
    for (k, v) in &file.set {
        params.set(k, *v);
    }
    for (k, v) in &args.set {
        params.set(k, *v);
    }
    Ok(CommonResolved {
        model: ModelRef::parse(&model_name),
        params,
        seed: args.seed.or(file.seed).unwrap_or(0),
        threads: args.threads.or(file.threads).unwrap_or(0),
        timing: args.timing || file.timing.unwrap_or(false),
        out: args.out.clone().or_else(|| file.out.clone()),
    })
}

fn species_index(common: &CommonResolved, name: Option<&str>) -> Result<usize, ConfigError> {
    let sys = common.model.build(&common.params)?;
    match name {
        None => Ok(0),
        Some(n) => sys
            .species_names
            .iter()
            .position(|s| s == n)
            .ok_or_else(|| ConfigError::new("species", format!("unknown species `{n}`"))),
    }
}

fn parse_coupling(name: &str) -> Result<CouplingStrategy, ConfigError> {
    match name {
        "independent" => Ok(CouplingStrategy::Independent),
        "crn" => Ok(CouplingStrategy::Crn),
        "thinning" => Ok(CouplingStrategy::ExtrandeThinning),
        "stacked" => Ok(CouplingStrategy::Stacked),
        _ => Err(ConfigError::new("coupling", format!("unknown coupling `{name}`"))),
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.cmd {
        Cmd::Simulate(a) => {
            let file = load_experiment(a.common.config.as_ref())?;
            let common = resolve_common(&a.common, &file.experiment)?;
            let method = match (&a.method, file.simulate.method.as_deref()) {
                (Some(MethodArg::Extrande), _) => SimMethod::Extrande,
                (Some(MethodArg::HittingTime), _) => SimMethod::HittingTime,
                (None, Some("extrande") | None) => SimMethod::Extrande,
                (None, Some("hitting-time")) => SimMethod::HittingTime,
                (None, Some(other)) => {
                    return Err(ConfigError::new(
                        "simulate.method",
                        format!("unknown method `{other}`"),
                    )
                    .into())
                }
            };
            runner::run_simulate(&SimulateSpec {
                model: common.model,
                params: common.params,
                horizon: a.horizon.or(file.simulate.horizon),
                paths: a.n.or(file.simulate.n).unwrap_or(1),
                method,
                tol: a.tol.or(file.simulate.tol).unwrap_or(1e-10),
                seed: common.seed,
                out: common.out,
            })
        }
        Cmd::Couple(a) => {
            let file = load_experiment(a.common.config.as_ref())?;
            let common = resolve_common(&a.common, &file.experiment)?;
            let (param, h) = match (&a.perturb, &file.couple.param) {
                (Some((p, h)), _) => (p.clone(), *h),
                (None, Some(p)) => {
                    let h = a.h_or(&file)?;
                    (p.clone(), h)
                }
                (None, None) => {
                    return Err(ConfigError::new(
                        "perturb",
                        "no perturbation given (--perturb param=h)",
                    )
                    .into())
                }
            };
            let species =
                species_index(&common, a.species.as_deref().or(file.couple.species.as_deref()))?;
            let coupling = match (&a.coupling, file.couple.coupling.as_deref()) {
                (Some(c), _) => (*c).into(),
                (None, Some(name)) => parse_coupling(name)?,
                (None, None) => CouplingStrategy::Stacked,
            };
            let out = common.out.clone().ok_or_else(|| {
                ConfigError::new("out", "couple needs an output directory (--out)")
            })?;
            runner::run_couple(&CoupleSpec {
                model: common.model,
                params: common.params,
                param,
                h,
                coupling,
                n: a.n.or(file.couple.n).unwrap_or(100),
                species,
                grid_points: a.grid_points.or(file.couple.grid_points).unwrap_or(81),
                dump_pairs: a.dump_pairs.or(file.couple.dump_pairs).unwrap_or(3),
                horizon: a.horizon.or(file.couple.horizon),
                seed: common.seed,
                threads: common.threads,
                timing: common.timing,
                out,
            })
        }
        Cmd::Sensitivity(a) => {
            let file = load_experiment(a.common.config.as_ref())?;
            let common = resolve_common(&a.common, &file.experiment)?;
            let param = a
                .param
                .clone()
                .or_else(|| file.sensitivity.param.clone())
                .ok_or_else(|| ConfigError::new("param", "no parameter given (--param)"))?;
            let h = a
                .h
                .or(file.sensitivity.h)
                .ok_or_else(|| ConfigError::new("h", "no perturbation width given (--h)"))?;
            let coupling = match (&a.coupling, file.sensitivity.coupling.as_deref()) {
                (Some(c), _) => (*c).into(),
                (None, Some(name)) => parse_coupling(name)?,
                (None, None) => CouplingStrategy::Stacked,
            };
            let species_name = a.species.as_deref().or(file.sensitivity.species.as_deref());
            let species = species_index(&common, species_name)?;
            let functional = match (
                &a.functional,
                file.sensitivity.functional.as_deref(),
            ) {
                (Some(FunctionalArg::Endpoint), _) | (None, Some("endpoint") | None) => {
                    Functional::Endpoint { species }
                }
                (Some(FunctionalArg::Grid), _) | (None, Some("grid")) => {
                    let points =
                        a.grid_points.or(file.sensitivity.grid_points).unwrap_or(81).max(2);
                    let sys = common.model.build(&common.params)?;
                    let horizon = a
                        .horizon
                        .or(file.sensitivity.horizon)
                        .unwrap_or(sys.horizon);
                    let grid = (0..points)
                        .map(|i| horizon * i as f64 / (points - 1) as f64)
                        .collect();
                    Functional::Grid { species, grid }
                }
                (Some(FunctionalArg::Extinction), _) | (None, Some("extinction")) => {
                    let sys = common.model.build(&common.params)?;
                    let deadline = a.deadline.or(file.sensitivity.deadline).unwrap_or(
                        a.horizon.or(file.sensitivity.horizon).unwrap_or(sys.horizon),
                    );
                    Functional::ExtinctionBefore { species, deadline }
                }
                (None, Some(other)) => {
                    return Err(ConfigError::new(
                        "sensitivity.functional",
                        format!("unknown functional `{other}`"),
                    )
                    .into())
                }
            };
            runner::run_sensitivity(&SensitivitySpec {
                model: common.model,
                params: common.params,
                param,
                h,
                coupling,
                n: a.n.or(file.sensitivity.n).unwrap_or(1000),
                functional,
                horizon: a.horizon.or(file.sensitivity.horizon),
                seed: common.seed,
                threads: common.threads,
                timing: common.timing,
                out: common.out,
            })
        }
        Cmd::Mlmc(a) => {
            let file = load_experiment(a.common.config.as_ref())?;
            let common = resolve_common(&a.common, &file.experiment)?;
            let sys = common.model.build(&common.params)?;
            let species = species_index(&common, a.species.as_deref().or(file.mlmc.species.as_deref()))?;
            let refinement = a.refinement.or(file.mlmc.refinement).unwrap_or(4);
            let levels = a.levels.or(file.mlmc.levels).unwrap_or(2).max(1);
            let coarsest_step = a
                .coarsest_step
                .or(file.mlmc.coarsest_step)
                .ok_or_else(|| ConfigError::new("coarsest-step", "no coarsest step given"))?;
            let target_sd = a
                .target_sd
                .or(file.mlmc.target_sd)
                .ok_or_else(|| ConfigError::new("target-sd", "no target sd given"))?;
            let cfg = MlmcConfig {
                refinement,
                coarsest_step,
                tau_levels: levels,
                horizon: sys.horizon,
                target_sd,
                exact_channels: a
                    .exact_channels
                    .clone()
                    .or_else(|| file.mlmc.exact_channels.clone())
                    .unwrap_or_default(),
                pilot: a.pilot.or(file.mlmc.pilot).unwrap_or(100),
                max_samples: a.max_samples.or(file.mlmc.max_samples).unwrap_or(100_000_000),
            };
            runner::run_mlmc(&MlmcSpec {
                model: common.model,
                params: common.params,
                cfg,
                functional: Functional::Endpoint { species },
                seed: common.seed,
                threads: common.threads,
                timing: common.timing,
                out: common.out,
                compare_direct: a.compare_direct || file.mlmc.compare_direct.unwrap_or(false),
            })
        }
    }
}

impl CoupleArgs {
    fn h_or(&self, file: &ExperimentFile) -> Result<f64, ConfigError> {
        file.couple
            .h
            .ok_or_else(|| ConfigError::new("couple.h", "no perturbation width given"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
