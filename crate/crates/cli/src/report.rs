//! CSV emission. All numeric fields print with Rust's shortest
//! round-trip formatting, so identical runs produce byte-identical files.
//! The `wall_seconds` column is left empty unless timing was requested,
//! keeping default output reproducible.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use inhomog_core::estimate::{EstimatorReport, MlmcReport};
use inhomog_core::TrajectoryPath;

pub const REPORT_HEADER: &str = "quantity,estimate,variance,half_width,n,rv_count,wall_seconds";

fn fmt_wall(wall: Option<f64>) -> String {
    match wall {
        Some(w) => format!("{w}"),
        None => String::new(),
    }
}

/// Trajectory dump: time plus one column per species; rows at t = 0, every
/// recorded event, and the horizon.
pub fn write_trajectory(
    path: &Path,
    species: &[String],
    traj: &TrajectoryPath,
) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str("time");
    for s in species {
        let _ = write!(out, ",{s}");
    }
    out.push('\n');
    let mut row = |t: f64, x: &[i64]| {
        let _ = write!(out, "{t}");
        for v in x {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    };
    row(0.0, &traj.initial_state);
    for i in 0..traj.jump_count() {
        row(traj.jump_times[i], traj.state_after(i));
    }
    row(traj.t_end, traj.final_state());
    write_atomic(path, out.as_bytes())
}

/// Scalar or grid estimator report.
pub fn write_estimator_report(
    path: &Path,
    label: &str,
    rep: &EstimatorReport,
) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for (coord, stat) in &rep.points {
        let _ = writeln!(
            out,
            "{label}@{coord},{},{},{},{},{},{}",
            stat.estimate,
            stat.variance,
            stat.half_width,
            stat.n,
            rep.draws.total(),
            fmt_wall(rep.wall_seconds),
        );
    }
    write_atomic(path, out.as_bytes())
}

pub fn print_estimator_report(label: &str, rep: &EstimatorReport) {
    println!("{REPORT_HEADER}");
    for (coord, stat) in &rep.points {
        println!(
            "{label}@{coord},{},{},{},{},{},{}",
            stat.estimate,
            stat.variance,
            stat.half_width,
            stat.n,
            rep.draws.total(),
            fmt_wall(rep.wall_seconds),
        );
    }
}

/// Multilevel report: one row per level plus the combined estimate, and an
/// optional direct-method comparison row.
pub fn write_mlmc_report(
    path: &Path,
    rep: &MlmcReport,
    direct: Option<&EstimatorReport>,
) -> std::io::Result<()> {
    write_atomic(path, mlmc_report_text(rep, direct).as_bytes())
}

pub fn print_mlmc_report(rep: &MlmcReport, direct: Option<&EstimatorReport>) {
    print!("{}", mlmc_report_text(rep, direct));
}

fn mlmc_report_text(rep: &MlmcReport, direct: Option<&EstimatorReport>) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for level in &rep.levels {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},",
            level.label,
            level.stat.estimate,
            level.stat.variance,
            level.stat.half_width,
            level.stat.n,
            level.draws.total(),
        );
    }
    let _ = writeln!(
        out,
        "combined,{},{},{},,{},{}",
        rep.estimate,
        rep.sd * rep.sd,
        rep.half_width,
        rep.draws.total(),
        fmt_wall(rep.wall_seconds),
    );
    if !rep.converged {
        out.push_str("# warning: sample budget exhausted before reaching the target sd\n");
    }
    if let Some(d) = direct {
        let stat = d.scalar();
        let _ = writeln!(
            out,
            "direct,{},{},{},{},{},{}",
            stat.estimate,
            stat.variance,
            stat.half_width,
            stat.n,
            d.draws.total(),
            fmt_wall(d.wall_seconds),
        );
    }
    out
}

/// One coupled pair sampled on a grid: time, X per species, Z per species.
pub fn write_pair_grid(
    path: &Path,
    species: &[String],
    grid: &[f64],
    grids_x: &[inhomog_core::path::GridSampler],
    grids_z: &[inhomog_core::path::GridSampler],
) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str("time");
    for s in species {
        let _ = write!(out, ",X_{s}");
    }
    for s in species {
        let _ = write!(out, ",Z_{s}");
    }
    out.push('\n');
    for (i, t) in grid.iter().enumerate() {
        let _ = write!(out, "{t}");
        for g in grids_x {
            let _ = write!(out, ",{}", g.values()[i]);
        }
        for g in grids_z {
            let _ = write!(out, ",{}", g.values()[i]);
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Difference-quotient statistics on a time grid.
pub fn write_variance_curve(path: &Path, rep: &EstimatorReport) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str("time,mean,variance,half_width,n\n");
    for (t, stat) in &rep.points {
        let _ = writeln!(
            out,
            "{t},{},{},{},{}",
            stat.estimate, stat.variance, stat.half_width, stat.n
        );
    }
    write_atomic(path, out.as_bytes())
}

// Write via a temp file and rename so partial output never lands under the
// final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
