//! Experiment execution: the rayon-backed sample executor and the
//! dispatchers behind each CLI subcommand.
//!
//! Sample accumulation merges fixed-size chunks in index order, so reports
//! are byte-identical for any worker count. Wall-clock timing is optional
//! and off by default, keeping default output deterministic end to end.

use std::time::Instant;

use inhomog_core::coupling::CouplingStrategy;
use inhomog_core::estimate::{
    estimate_direct, estimate_mlmc, estimate_sensitivity, Executor, Functional, MlmcConfig,
    SensitivityJob,
};
use inhomog_core::exact::{
    simulate_extrande_with, simulate_hitting_time_with, ExtrandeOptions, SimError,
};
use inhomog_core::models::{ParamSet, System};
use inhomog_core::path::Recorder;
use inhomog_core::rng::{role, RandomStream, StreamId};
use inhomog_core::TrajectoryPath;

use crate::config::{ConfigError, ModelRef};
use crate::report;

/// Executor fanning chunks across a rayon pool.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads = 0` uses the rayon default.
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        Self { pool }
    }
}

impl Executor for RayonExecutor {
    fn map_collect<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        use rayon::prelude::*;
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// Errors from running an experiment, mapped to process exit codes.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Simulation(SimError),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "configuration error: {e}"),
            RunError::Simulation(e) => write!(f, "simulation error: {e}"),
            RunError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        RunError::Simulation(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 2,
            RunError::Simulation(_) => 3,
        }
    }
}

/// Which exact method the simulate subcommand runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMethod {
    Extrande,
    HittingTime,
}

/// Fully resolved simulate experiment.
pub struct SimulateSpec {
    pub model: ModelRef,
    pub params: ParamSet,
    pub horizon: Option<f64>,
    pub paths: u64,
    pub method: SimMethod,
    pub tol: f64,
    pub seed: u64,
    pub out: Option<std::path::PathBuf>,
}

/// Run one trajectory per sample index, dumping CSVs when `out` is set.
pub fn run_simulate(spec: &SimulateSpec) -> Result<(), RunError> {
    let sys = spec.model.build(&spec.params)?;
    let horizon = spec.horizon.unwrap_or(sys.horizon);
    for i in 0..spec.paths {
        let path = simulate_one(&sys, horizon, spec.method, spec.tol, spec.seed, i)?;
        if let Some(dir) = &spec.out {
            std::fs::create_dir_all(dir)?;
            let file = dir.join(format!("path-{i}.csv"));
            report::write_trajectory(&file, &sys.species_names, &path)?;
        } else {
            println!(
                "path {i}: {} jumps, final state {:?}",
                path.jump_count(),
                path.final_state()
            );
        }
    }
    Ok(())
}

fn simulate_one(
    sys: &System,
    horizon: f64,
    method: SimMethod,
    tol: f64,
    seed: u64,
    index: u64,
) -> Result<TrajectoryPath, RunError> {
    let mut stream = RandomStream::new(seed, StreamId::new(0, index, role::MAIN));
    let env = sys.environment.as_ref().map(|spec| {
        let mut es = RandomStream::new(seed, StreamId::new(0, index, role::ENV));
        spec.simulate(horizon, &mut es)
    });
    let mut rec = Recorder::new();
    match method {
        SimMethod::Extrande => {
            simulate_extrande_with(
                &sys.network,
                env.as_ref(),
                &sys.initial,
                horizon,
                &mut stream,
                ExtrandeOptions::default(),
                &mut rec,
            )?;
        }
        SimMethod::HittingTime => {
            simulate_hitting_time_with(
                &sys.network,
                env.as_ref(),
                &sys.initial,
                horizon,
                &mut stream,
                tol,
                &mut rec,
            )?;
        }
    }
    Ok(rec.into_path())
}

/// Fully resolved sensitivity (or couple) experiment.
pub struct SensitivitySpec {
    pub model: ModelRef,
    pub params: ParamSet,
    pub param: String,
    pub h: f64,
    pub coupling: CouplingStrategy,
    pub n: u64,
    pub functional: Functional,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub threads: usize,
    pub timing: bool,
    pub out: Option<std::path::PathBuf>,
}

pub fn run_sensitivity(spec: &SensitivitySpec) -> Result<(), RunError> {
    let base = spec
        .params
        .get(&spec.param)
        .or_else(|| default_param(&spec.model, &spec.param))
        .ok_or_else(|| {
            ConfigError::new("param", format!("unknown parameter `{}`", spec.param))
        })?;
    // surface configuration problems before sampling starts; the family
    // closure only ever sees these two values again
    for theta in [base + spec.h / 2.0, base - spec.h / 2.0] {
        let mut p = spec.params.clone();
        p.set(&spec.param, theta);
        spec.model.build(&p)?;
    }
    let model = spec.model.clone();
    let params = spec.params.clone();
    let name = spec.param.clone();
    let horizon = spec.horizon;
    let family = move |theta: f64| {
        let mut p = params.clone();
        p.set(&name, theta);
        let mut sys =
            model.build(&p).map_err(|_| inhomog_core::network::ModelError::BadParameter {
                what: "model family failed to build",
            })?;
        if let Some(t) = horizon {
            sys.horizon = t;
        }
        Ok(sys)
    };
    let job = SensitivityJob {
        family: &family,
        theta: base,
        h: spec.h,
        functional: spec.functional.clone(),
        coupling: spec.coupling,
        n: spec.n,
        window: None,
    };
    let exec = RayonExecutor::new(spec.threads);
    let start = Instant::now();
    let mut rep = estimate_sensitivity(&job, spec.seed, &exec)?;
    if spec.timing {
        rep.wall_seconds = Some(start.elapsed().as_secs_f64());
    }
    let label = format!("d/d{}", spec.param);
    match &spec.out {
        Some(path) => report::write_estimator_report(path, &label, &rep)?,
        None => report::print_estimator_report(&label, &rep),
    }
    Ok(())
}

fn default_param(model: &ModelRef, name: &str) -> Option<f64> {
    match model {
        ModelRef::Builtin(id) => id.defaults().get(name),
        ModelRef::File(path) => {
            let file = crate::config::ModelFile::load(path).ok()?;
            file.parameters.get(name).copied()
        }
    }
}

/// Fully resolved couple experiment: coupled-pair dumps plus a
/// difference-quotient variance curve on a uniform grid.
pub struct CoupleSpec {
    pub model: ModelRef,
    pub params: ParamSet,
    pub param: String,
    pub h: f64,
    pub coupling: CouplingStrategy,
    pub n: u64,
    pub species: usize,
    pub grid_points: usize,
    pub dump_pairs: u64,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub threads: usize,
    pub timing: bool,
    pub out: std::path::PathBuf,
}

pub fn run_couple(spec: &CoupleSpec) -> Result<(), RunError> {
    let base = spec
        .params
        .get(&spec.param)
        .or_else(|| default_param(&spec.model, &spec.param))
        .ok_or_else(|| {
            ConfigError::new("perturb", format!("unknown parameter `{}`", spec.param))
        })?;
    let build = |theta: f64| -> Result<System, RunError> {
        let mut p = spec.params.clone();
        p.set(&spec.param, theta);
        let mut sys = spec.model.build(&p)?;
        if let Some(t) = spec.horizon {
            sys.horizon = t;
        }
        Ok(sys)
    };
    let sys_x = build(base + spec.h / 2.0)?;
    let sys_z = build(base - spec.h / 2.0)?;
    let horizon = sys_x.horizon;
    let grid: Vec<f64> = (0..spec.grid_points)
        .map(|i| horizon * i as f64 / (spec.grid_points.max(2) - 1) as f64)
        .collect();

    std::fs::create_dir_all(&spec.out)?;
    // dump the first few pairs on the grid
    for i in 0..spec.dump_pairs.min(spec.n) {
        let mut grids_x: Vec<inhomog_core::path::GridSampler> = (0..sys_x.species_names.len())
            .map(|s| inhomog_core::path::GridSampler::new(grid.clone(), s))
            .collect();
        let mut grids_z: Vec<inhomog_core::path::GridSampler> = (0..sys_x.species_names.len())
            .map(|s| inhomog_core::path::GridSampler::new(grid.clone(), s))
            .collect();
        sample_pair_grids(spec, &sys_x, &sys_z, horizon, i, &mut grids_x, &mut grids_z)?;
        let file = spec.out.join(format!("pair-{i}.csv"));
        report::write_pair_grid(&file, &sys_x.species_names, &grid, &grids_x, &grids_z)?;
    }

    // variance curve over all pairs
    let model = spec.model.clone();
    let params = spec.params.clone();
    let name = spec.param.clone();
    let horizon_override = spec.horizon;
    let family = move |theta: f64| {
        let mut p = params.clone();
        p.set(&name, theta);
        let mut sys =
            model.build(&p).map_err(|_| inhomog_core::network::ModelError::BadParameter {
                what: "model family failed to build",
            })?;
        if let Some(t) = horizon_override {
            sys.horizon = t;
        }
        Ok(sys)
    };
    let job = SensitivityJob {
        family: &family,
        theta: base,
        h: spec.h,
        functional: Functional::Grid { species: spec.species, grid: grid.clone() },
        coupling: spec.coupling,
        n: spec.n,
        window: None,
    };
    let exec = RayonExecutor::new(spec.threads);
    let start = Instant::now();
    let mut rep = estimate_sensitivity(&job, spec.seed, &exec)?;
    if spec.timing {
        rep.wall_seconds = Some(start.elapsed().as_secs_f64());
    }
    report::write_variance_curve(&spec.out.join("variance.csv"), &rep)?;
    Ok(())
}

// One recorded pair for the dump files, using the same per-sample stream
// layout as the estimator.
fn sample_pair_grids(
    spec: &CoupleSpec,
    sys_x: &System,
    sys_z: &System,
    horizon: f64,
    index: u64,
    grids_x: &mut [inhomog_core::path::GridSampler],
    grids_z: &mut [inhomog_core::path::GridSampler],
) -> Result<(), RunError> {
    use inhomog_core::coupling::couple_pair_with;
    use inhomog_core::estimate::experiment;
    use inhomog_core::path::PathObserver;

    struct Fan<'a>(&'a mut [inhomog_core::path::GridSampler]);
    impl PathObserver for Fan<'_> {
        fn on_start(&mut self, x0: &[i64]) {
            self.0.iter_mut().for_each(|g| g.on_start(x0));
        }
        fn on_jump(&mut self, t: f64, c: usize, x: &[i64]) {
            self.0.iter_mut().for_each(|g| g.on_jump(t, c, x));
        }
        fn on_batch(&mut self, t: f64, x: &[i64]) {
            self.0.iter_mut().for_each(|g| g.on_batch(t, x));
        }
        fn on_end(&mut self, t: f64, x: &[i64]) {
            self.0.iter_mut().for_each(|g| g.on_end(t, x));
        }
    }

    let main = RandomStream::new(
        spec.seed,
        StreamId::new(experiment::SENSITIVITY, index, role::MAIN),
    );
    let partner = RandomStream::new(
        spec.seed,
        StreamId::new(experiment::SENSITIVITY, index, role::PARTNER),
    );
    let env = sys_x.environment.as_ref().map(|es| {
        let mut s = RandomStream::new(
            spec.seed,
            StreamId::new(experiment::SENSITIVITY, index, role::ENV),
        );
        es.simulate(horizon, &mut s)
    });
    couple_pair_with(
        spec.coupling,
        &sys_x.network,
        &sys_z.network,
        env.as_ref(),
        &sys_x.initial,
        &sys_z.initial,
        horizon,
        main,
        partner,
        ExtrandeOptions::default(),
        &mut Fan(grids_x),
        &mut Fan(grids_z),
    )?;
    Ok(())
}

/// Fully resolved multilevel experiment.
pub struct MlmcSpec {
    pub model: ModelRef,
    pub params: ParamSet,
    pub cfg: MlmcConfig,
    pub functional: Functional,
    pub seed: u64,
    pub threads: usize,
    pub timing: bool,
    pub out: Option<std::path::PathBuf>,
    /// Also run the direct estimator at the same target for comparison.
    pub compare_direct: bool,
}

pub fn run_mlmc(spec: &MlmcSpec) -> Result<(), RunError> {
    let sys = spec.model.build(&spec.params)?;
    let exec = RayonExecutor::new(spec.threads);
    let start = Instant::now();
    let mut rep = estimate_mlmc(&sys, &spec.functional, &spec.cfg, spec.seed, &exec)?;
    if spec.timing {
        rep.wall_seconds = Some(start.elapsed().as_secs_f64());
    }
    let direct = if spec.compare_direct {
        let start = Instant::now();
        let (mut d, _) = estimate_direct(
            &sys,
            &spec.functional,
            spec.cfg.target_sd,
            spec.cfg.max_samples,
            spec.seed,
            &exec,
        )?;
        if spec.timing {
            d.wall_seconds = Some(start.elapsed().as_secs_f64());
        }
        Some(d)
    } else {
        None
    };
    match &spec.out {
        Some(path) => report::write_mlmc_report(path, &rep, direct.as_ref())?,
        None => report::print_mlmc_report(&rep, direct.as_ref()),
    }
    Ok(())
}
