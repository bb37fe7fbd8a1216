use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::grid_mesh::Point;
use crate::inversion::{
    l2_norm, run_acga, run_cga, AcgaConfig, AcgaInputs, AcgaStop, InversionProblem, ReconstructionState,
};
use crate::media::CoefficientField;
use crate::vtk::{write_structured_points, write_unstructured, PointData};
use crate::wavesolver::{solve_forward_full, solve_pure_fd, BoundaryTrace, ForwardSolution, SolverOptions, TimeGrid};

use super::{Experiment, HarnessError, RunConfig};

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    /// Command line reproducing the run from the echoed `config.toml`.
    rerun: String,
    elapsed_seconds: f64,
    outputs: Vec<String>,
}

fn write_manifest(out: &Path, cfg: &RunConfig, command: &str, args: &str, started: Instant, outputs: &[String]) -> Result<(), HarnessError> {
    let config_path = out.join("config.toml");
    let mut echo = cfg.clone();
    echo.output.dir = out.to_path_buf();
    fs::write(&config_path, echo.to_toml_string()).map_err(|e| HarnessError::io(&config_path, e))?;
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        rerun: format!("hybrid-inv {command} --config {}{args}", config_path.display()),
        elapsed_seconds: started.elapsed().as_secs_f64(),
        outputs: outputs.to_vec(),
    };
    let path = out.join("manifest.toml");
    let text = toml::to_string(&m).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
}

fn trace_comments(tg: &TimeGrid, extra: &[(&'static str, String)]) -> Vec<(&'static str, String)> {
    let mut c = vec![("dt", format!("{:.16e}", tg.dt)), ("steps", tg.steps.to_string())];
    c.extend(extra.iter().cloned());
    c
}

fn write_snapshots(out: &Path, exp: &Experiment, sol: &ForwardSolution) -> Result<Vec<String>, HarnessError> {
    let d = exp.mesh.dim();
    let mut names = Vec::new();
    for (n, state) in &sol.snapshots {
        let fe = format!("fe_E_{n:06}.vtk");
        write_file(&out.join(&fe), |w| {
            write_unstructured(w, &format!("E at step {n}"), exp.mesh.fem_mesh(), &[PointData::Vector("E", d, &state.fe)])
        })?;
        let fd = format!("grid_E_{n:06}.vtk");
        write_file(&out.join(&fd), |w| {
            write_structured_points(w, &format!("E at step {n}"), exp.mesh.fdm_grid(), &[PointData::Vector("E", d, &state.fd)])
        })?;
        names.push(fe);
        names.push(fd);
    }
    Ok(names)
}

/// Forward solve with the phantom coefficients. With `pure_fd` the reference
/// finite-difference scheme runs on the whole grid instead. Writes
/// `trace.csv`, optional snapshots and the manifest.
pub fn cmd_forward(cfg: &RunConfig, out: &Path, pure_fd: bool) -> Result<BoundaryTrace, HarnessError> {
    let started = Instant::now();
    let exp = Experiment::build(cfg)?;
    create_dir(out)?;
    let opts = SolverOptions { snapshot_every: cfg.output.snapshot_every, ..SolverOptions::default() };
    let sol = if pure_fd {
        solve_pure_fd(&exp.mesh, &exp.pulse, &exp.tg, &opts)?
    } else {
        solve_forward_full(&exp.mesh, &exp.truth, &exp.pulse, &exp.tg, &opts)?
    };
    let solver = if pure_fd { "pure_fd" } else { "hybrid" };
    let comments = trace_comments(&exp.tg, &[("solver", solver.to_string())]);
    write_file(&out.join("trace.csv"), |w| sol.trace.write_csv(w, &comments))?;
    let mut outputs = vec!["trace.csv".to_string()];
    if !pure_fd {
        outputs.extend(write_snapshots(out, &exp, &sol)?);
    }
    let args = if pure_fd { " --pure-fd".to_string() } else { String::new() };
    write_manifest(out, cfg, "forward", &format!(" --out {}{args}", out.display()), started, &outputs)?;
    Ok(sol.trace)
}

/// Synthetic observations for the phantom with the configured noise; the
/// noise level and seed are recorded in the CSV header. `seed` overrides
/// the configured one.
pub fn cmd_make_obs(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> Result<BoundaryTrace, HarnessError> {
    let started = Instant::now();
    let exp = Experiment::build(cfg)?;
    create_dir(out)?;
    let seed = seed.unwrap_or(cfg.noise.seed);
    let delta = cfg.noise.delta;
    let trace = exp.synthetic_observations(seed)?;
    let comments = trace_comments(
        &exp.tg,
        &[
            ("delta", format!("{delta:.16e}")),
            ("seed", seed.to_string()),
            ("reference_levels", cfg.noise.reference_levels.to_string()),
        ],
    );
    write_file(&out.join("obs.csv"), |w| trace.write_csv(w, &comments))?;
    write_manifest(
        out,
        cfg,
        "make-obs",
        &format!(" --out {} --seed {seed}", out.display()),
        started,
        &["obs.csv".to_string()],
    )?;
    Ok(trace)
}

/// Reads an observation CSV and checks it against the boundary and time
/// grid of `exp`.
pub fn read_observations(path: &Path, exp: &Experiment) -> Result<BoundaryTrace, HarnessError> {
    let f = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let (obs, _) = BoundaryTrace::read_csv(f)?;
    let mismatch = |what: &str| HarnessError::Config(format!("observations {}: {what} differs from the configured grid", path.display()));
    if obs.dim() != exp.mesh.dim() || obs.nodes() != exp.mesh.outer_boundary_nodes() {
        return Err(mismatch("boundary node set"));
    }
    let grid = exp.mesh.fdm_grid();
    let tol = 1e-9 * exp.mesh.h_fdm();
    for (&g, c) in obs.nodes().iter().zip(obs.coords()) {
        let p = grid.coord(g);
        if (0..obs.dim()).any(|k| (p[k] - c[k]).abs() > tol) {
            return Err(mismatch("node coordinates"));
        }
    }
    let times = exp.tg.times();
    if obs.times().len() != times.len() || obs.times().iter().zip(&times).any(|(a, b)| (a - b).abs() > 1e-9 * exp.tg.dt) {
        return Err(mismatch("time grid"));
    }
    Ok(obs)
}

/// One mesh of a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub fem_nodes: usize,
    pub iterations: usize,
    pub final_j: f64,
    pub max_eps: f64,
    pub stop_reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvertSummary {
    pub final_j: f64,
    pub max_eps: f64,
    pub max_eps_at: Vec<f64>,
    pub stop_reason: String,
    pub adaptive: bool,
    pub levels: Vec<LevelSummary>,
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

fn log_rows(level: usize, state: &ReconstructionState, mass: &[f64], out: &mut String) {
    for r in &state.records {
        let _ = writeln!(
            out,
            "{level},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.m, r.j, r.misfit, r.norm_g_eps, r.norm_g_sigma, r.max_eps
        );
    }
    if let Some(ev) = state.current() {
        let _ = writeln!(
            out,
            "{level},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            state.m,
            ev.objective.j,
            ev.objective.misfit,
            l2_norm(mass, &ev.gradients.g_eps),
            l2_norm(mass, &ev.gradients.g_sigma),
            state.coeffs.max_eps()
        );
    }
}

fn level_summary(level: usize, fem_nodes: usize, state: &ReconstructionState) -> LevelSummary {
    LevelSummary {
        level,
        fem_nodes,
        iterations: state.m,
        final_j: state.j_history.last().copied().unwrap_or(f64::NAN),
        max_eps: state.coeffs.max_eps(),
        stop_reason: state.stop_reason.to_string(),
    }
}

fn write_level_vtk(out: &Path, level: usize, exp: &Experiment, mesh: &crate::grid_mesh::HybridMesh, c: &CoefficientField) -> Result<String, HarnessError> {
    let truth = exp.truth_on(mesh)?;
    let name = format!("level_{level}.vtk");
    write_file(&out.join(&name), |w| {
        write_unstructured(
            w,
            &format!("reconstruction level {level}"),
            mesh.fem_mesh(),
            &[
                PointData::Scalar("eps", &c.eps),
                PointData::Scalar("sigma", &c.sigma),
                PointData::Scalar("eps_true", &truth.eps),
            ],
        )
    })?;
    Ok(name)
}

/// Reconstruction from `obs_path`: plain conjugate gradients, or the
/// adaptive driver with `adaptive`. Writes `iterations.csv`, one
/// `level_<i>.vtk` per mesh, `summary.toml` and the manifest.
pub fn cmd_invert(cfg: &RunConfig, obs_path: &Path, out: &Path, adaptive: bool) -> Result<InvertSummary, HarnessError> {
    let started = Instant::now();
    let exp = Experiment::build(cfg)?;
    let obs = read_observations(obs_path, &exp)?;
    create_dir(out)?;
    let mut log = String::from("level,m,J,misfit,norm_g_eps,norm_g_sigma,max_eps\n");
    let mut outputs = vec!["iterations.csv".to_string(), "summary.toml".to_string()];
    let summary = if adaptive {
        let acga: AcgaConfig = cfg
            .acga
            .ok_or_else(|| HarnessError::Config("--adaptive needs an [acga] section".into()))?;
        let inputs = AcgaInputs {
            mesh: &exp.mesh,
            obs: &obs,
            pulse: &exp.pulse,
            t_end: cfg.time.t_end,
            cfl_safety: cfg.time.cfl_safety,
            objective: &exp.objective,
            init: &exp.init,
        };
        let res = run_acga(&acga, &cfg.cga, &inputs)?;
        let mut levels = Vec::new();
        for lv in &res.levels {
            let mass = lv.mesh.fem_mesh().lumped_mass();
            log_rows(lv.level, &lv.state, &mass, &mut log);
            levels.push(level_summary(lv.level, lv.mesh.fem_mesh().node_count(), &lv.state));
            outputs.push(write_level_vtk(out, lv.level, &exp, &lv.mesh, &lv.state.coeffs)?);
        }
        let last = res.last();
        let i = argmax(&last.state.coeffs.eps);
        let stop = match &res.stop {
            AcgaStop::Tolerance => "tolerance".to_string(),
            AcgaStop::MaxRefinements => "max_refinements".to_string(),
            AcgaStop::RefinementFailed(e) => format!("refinement_failed: {e}"),
        };
        InvertSummary {
            final_j: levels.last().map_or(f64::NAN, |l| l.final_j),
            max_eps: last.state.coeffs.max_eps(),
            max_eps_at: point_vec(last.mesh.fem_node(i), cfg.dim()),
            stop_reason: stop,
            adaptive,
            levels,
        }
    } else {
        let problem = InversionProblem {
            mesh: &exp.mesh,
            pulse: &exp.pulse,
            tg: exp.tg,
            obs: &obs,
            objective: &exp.objective,
            freeze_sigma: cfg.cga.freeze_sigma,
        };
        let state = run_cga(&problem, exp.init.clone(), &cfg.cga)?;
        let mass = exp.mesh.fem_mesh().lumped_mass();
        log_rows(0, &state, &mass, &mut log);
        outputs.push(write_level_vtk(out, 0, &exp, &exp.mesh, &state.coeffs)?);
        let level = level_summary(0, exp.mesh.fem_mesh().node_count(), &state);
        let i = argmax(&state.coeffs.eps);
        InvertSummary {
            final_j: level.final_j,
            max_eps: level.max_eps,
            max_eps_at: point_vec(exp.mesh.fem_node(i), cfg.dim()),
            stop_reason: level.stop_reason.clone(),
            adaptive,
            levels: vec![level],
        }
    };
    let log_path = out.join("iterations.csv");
    fs::write(&log_path, log).map_err(|e| HarnessError::io(&log_path, e))?;
    let sum_path = out.join("summary.toml");
    let text = toml::to_string(&summary).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&sum_path, text).map_err(|e| HarnessError::io(&sum_path, e))?;
    let obs_abs = fs::canonicalize(obs_path).unwrap_or_else(|_| PathBuf::from(obs_path));
    let args = format!(" --obs {} --out {}{}", obs_abs.display(), out.display(), if adaptive { " --adaptive" } else { "" });
    write_manifest(out, cfg, "invert", &args, started, &outputs)?;
    Ok(summary)
}

fn point_vec(p: &Point, dim: usize) -> Vec<f64> {
    p[..dim].to_vec()
}

/// Writes the configured phantom to `phantom.txt`.
pub fn cmd_phantom(cfg: &RunConfig, out: &Path) -> Result<PathBuf, HarnessError> {
    let started = Instant::now();
    cfg.validate()?;
    let phantom = super::build_phantom(cfg)?;
    create_dir(out)?;
    let path = out.join("phantom.txt");
    let file = fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    phantom.write(&mut w)?;
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    write_manifest(out, cfg, "phantom", &format!(" --out {}", out.display()), started, &["phantom.txt".to_string()])?;
    Ok(path)
}
