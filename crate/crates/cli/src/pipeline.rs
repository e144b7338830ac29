//! Stage-by-stage experiment runner: mesh → validate → coercivity →
//! solve/green → verify, with every artifact hashed into manifest.json.

use std::path::{Path, PathBuf};

use anyhow::Context;
use robin_green::coeff::{validate_ellipticity, validate_theta};
use robin_green::coercivity::{check_h1, CoercivityReport};
use robin_green::green::{elliptic_green, heat_kernel_column, GreenColumn};
use robin_green::parabolic::{solve_forward, Trajectory};
use robin_green::problem::RobinProblem;
use robin_green::verify::check_decay_vs_theta0;

use crate::catalog;
use crate::config::ExperimentConfig;
use crate::output::{
    energy_json, fmt_f, fmt_opt, green_column_csv, trajectory_csv, write_manifest, write_text,
};

/// Run up to `jobs` closures at a time on scoped threads, preserving order.
pub fn run_jobs<R: Send>(
    jobs: usize,
    tasks: Vec<Box<dyn FnOnce() -> R + Send + '_>>,
) -> Vec<R> {
    let jobs = jobs.max(1);
    let mut results: Vec<Option<R>> = Vec::new();
    results.resize_with(tasks.len(), || None);
    let mut tasks: Vec<(usize, Box<dyn FnOnce() -> R + Send + '_>)> =
        tasks.into_iter().enumerate().collect();
    while !tasks.is_empty() {
        let batch: Vec<_> = tasks.drain(..tasks.len().min(jobs)).collect();
        let mut outs: Vec<(usize, R)> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .into_iter()
                .map(|(i, task)| scope.spawn(move || (i, task())))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (i, r) in outs.drain(..) {
            results[i] = Some(r);
        }
    }
    results.into_iter().map(|r| r.unwrap()).collect()
}

/// Time samples the validation and coercivity stages certify over: the
/// window endpoints and midpoint for time-dependent data, t0 alone otherwise.
fn sample_times(cfg: &ExperimentConfig, problem: &RobinProblem<f64>) -> Vec<f64> {
    if problem.time_independent() {
        vec![cfg.time.t0]
    } else {
        let mid = 0.5 * (cfg.time.t0 + cfg.time.t1);
        vec![cfg.time.t0, mid, cfg.time.t1]
    }
}

pub fn coercivity_report_json(
    report: &CoercivityReport<f64>,
    echo: &str,
) -> String {
    format!(
        "{{\"theta0\":{},\"lambda_tilde\":{},\"converged\":{},\"iterations\":{},\"t_worst\":{},\"config\":{}}}\n",
        fmt_f(report.theta0),
        fmt_f(report.lambda_tilde),
        report.converged,
        report.iterations,
        fmt_opt(report.t_worst),
        echo
    )
}

pub fn source_vertex(cfg: &ExperimentConfig, problem: &RobinProblem<f64>) -> usize {
    cfg.options.source_vertex.unwrap_or_else(|| {
        let mesh = &problem.mesh;
        let mut c = [0.0f64; 2];
        for v in &mesh.vertices {
            c[0] += v[0];
            c[1] += v[1];
        }
        let n = mesh.n_vertices() as f64;
        mesh.nearest_vertex(&[c[0] / n, c[1] / n])
    })
}

/// Compute all kernel columns (one per source component), `jobs` at a time.
pub fn green_columns(
    cfg: &ExperimentConfig,
    problem: &RobinProblem<f64>,
) -> anyhow::Result<Vec<GreenColumn<f64>>> {
    let grid = cfg.time_grid()?;
    let y = source_vertex(cfg, problem);
    let tasks: Vec<Box<dyn FnOnce() -> _ + Send + '_>> = (0..problem.m())
        .map(|k| {
            let b: Box<dyn FnOnce() -> _ + Send + '_> =
                Box::new(move || heat_kernel_column(problem, y, k, grid));
            b
        })
        .collect();
    run_jobs(cfg.options.jobs, tasks)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(Into::into)
}

struct PipelineState {
    artifacts: Vec<PathBuf>,
    coercivity: Option<CoercivityReport<f64>>,
    trajectory: Option<Trajectory<f64>>,
}

pub fn run(config_path: &Path, jobs_override: Option<usize>) -> anyhow::Result<PathBuf> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(jobs) = jobs_override {
        cfg.options.jobs = jobs;
    }
    let out_dir = match std::env::var_os("ROBIN_GREEN_OUT") {
        Some(root) => PathBuf::from(root),
        None => PathBuf::from(&cfg.output),
    };
    std::fs::create_dir_all(&out_dir)?;
    let problem = cfg.build_problem()?;
    let echo = cfg.echo_json();
    let mut state = PipelineState {
        artifacts: Vec::new(),
        coercivity: None,
        trajectory: None,
    };
    let pipeline = cfg.pipeline.clone();
    for stage in &pipeline {
        run_stage(stage, &cfg, &problem, &echo, &out_dir, &mut state)
            .with_context(|| format!("stage `{stage}` failed"))?;
    }
    let manifest = write_manifest(&out_dir, &echo, &state.artifacts)?;
    Ok(manifest)
}

fn run_stage(
    stage: &str,
    cfg: &ExperimentConfig,
    problem: &RobinProblem<f64>,
    echo: &str,
    out_dir: &Path,
    state: &mut PipelineState,
) -> anyhow::Result<()> {
    match stage {
        "mesh" => {
            problem.mesh.validate()?;
            let path = out_dir.join("mesh.json");
            write_text(&path, &problem.mesh.to_json())?;
            state.artifacts.push(path);
        }
        "validate" => {
            let times = sample_times(cfg, problem);
            let ell = validate_ellipticity(&problem.field, &problem.mesh, &times, 8)?;
            let th = validate_theta(&problem.theta, &problem.mesh, &times)?;
            let text = format!(
                "{{\"lambda_lower\":{},\"lambda_upper_ok\":{},\"theta_delta\":{},\"theta_nonneg_ok\":{},\"config\":{}}}\n",
                fmt_f(ell.lambda_lower),
                ell.lambda_upper_ok,
                fmt_f(th.delta),
                th.nonneg_ok,
                echo
            );
            let path = out_dir.join("validity.json");
            write_text(&path, &text)?;
            state.artifacts.push(path);
        }
        "coercivity" => {
            let times = sample_times(cfg, problem);
            let report = check_h1(problem, &times, 1e-9)?;
            let path = out_dir.join("coercivity.json");
            write_text(&path, &coercivity_report_json(&report, echo))?;
            state.artifacts.push(path);
            state.coercivity = Some(report);
        }
        "solve" => {
            let grid = cfg.time_grid()?;
            let psi0 =
                catalog::initial(&cfg.options.initial, &problem.mesh, problem.m(), cfg.seed)?;
            let traj = solve_forward(problem, &psi0, None, grid)?;
            let csv_path = out_dir.join("trajectory.csv");
            write_text(&csv_path, &trajectory_csv(&traj))?;
            let energy_path = out_dir.join("energy.json");
            write_text(&energy_path, &energy_json(&traj))?;
            state.artifacts.push(csv_path);
            state.artifacts.push(energy_path);
            state.trajectory = Some(traj);
        }
        "green" => {
            for col in green_columns(cfg, problem)? {
                let path = out_dir.join(format!("green_column_{}.csv", col.column));
                write_text(&path, &green_column_csv(&col))?;
                state.artifacts.push(path);
            }
        }
        "elliptic-green" => {
            let report = match &state.coercivity {
                Some(r) => r.clone(),
                None => check_h1(problem, &sample_times(cfg, problem), 1e-9)?,
            };
            let y = source_vertex(cfg, problem);
            let columns = elliptic_green(problem, y, report.theta0, cfg.options.elliptic_tol)?;
            let mut text = format!("# source_vertex={y}\nvertex,component,column,value\n");
            for (k, g) in columns.iter().enumerate() {
                for c in 0..g.m {
                    for v in 0..g.n_vertices {
                        text.push_str(&format!(
                            "{v},{c},{k},{}\n",
                            fmt_f(g.coefficients[c * g.n_vertices + v])
                        ));
                    }
                }
            }
            let path = out_dir.join("elliptic_green.csv");
            write_text(&path, &text)?;
            state.artifacts.push(path);
        }
        "verify" => {
            let report = match &state.coercivity {
                Some(r) => r.clone(),
                None => check_h1(problem, &sample_times(cfg, problem), 1e-9)?,
            };
            let traj = match &state.trajectory {
                Some(t) => t.clone(),
                None => {
                    let psi0 = catalog::initial(
                        &cfg.options.initial,
                        &problem.mesh,
                        problem.m(),
                        cfg.seed,
                    )?;
                    solve_forward(problem, &psi0, None, cfg.time_grid()?)?
                }
            };
            let tol = 0.05 + traj.grid.dt() * report.theta0;
            let (pass, worst) = check_decay_vs_theta0(&traj, report.theta0, tol);
            let text = format!(
                "{{\"check\":\"decay_vs_theta0\",\"theta0\":{},\"tol\":{},\"pass\":{},\"worst_margin\":{},\"config\":{}}}\n",
                fmt_f(report.theta0),
                fmt_f(tol),
                pass,
                fmt_f(worst),
                echo
            );
            let path = out_dir.join("verify.json");
            write_text(&path, &text)?;
            state.artifacts.push(path);
        }
        other => anyhow::bail!("unknown pipeline stage `{other}`"),
    }
    Ok(())
}
