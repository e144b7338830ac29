//! `robin-green`: config-driven runner and thin file-in/file-out wrappers
//! around the library (meshing, coercivity, solves, kernel columns, bound
//! fits, series oracle).

mod catalog;
mod config;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use robin_green::coercivity::check_h1;
use robin_green::green::{heat_kernel_column, steady_green, KernelMatrixSample};
use robin_green::oracle::RobinEigenbasis1D;
use robin_green::parabolic::solve_forward;
use robin_green::verify::fit_gaussian_bound;

use config::ExperimentConfig;
use output::{emit, energy_json, fmt_f, fmt_opt, green_column_csv, samples_csv, trajectory_csv};

#[derive(Parser)]
#[command(
    name = "robin-green",
    version,
    about = "Green's functions for parabolic Robin problems: solves, kernel sampling, bound verification"
)]
struct Cli {
    /// Cap on within-stage concurrency.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute the config's pipeline and write a hashed manifest.
    Run { config: PathBuf },
    /// Build and validate the mesh, emit it as JSON.
    Mesh {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the H¹ coercivity constant, emit a JSON report.
    Coercivity {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forward solve with the config's initial data; CSV plus energy sidecar.
    Solve {
        config: PathBuf,
        /// Prefix for `<prefix>.csv` and `<prefix>_energy.json`; stdout when
        /// omitted.
        #[arg(long)]
        out_prefix: Option<PathBuf>,
    },
    /// One heat-kernel column (delta source at a vertex), as CSV.
    Green {
        config: PathBuf,
        #[arg(long)]
        source_vertex: Option<usize>,
        #[arg(long, default_value_t = 0)]
        column: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-integrated (elliptic) kernel columns at a vertex, as CSV.
    EllipticGreen {
        config: PathBuf,
        #[arg(long)]
        source_vertex: Option<usize>,
        /// Compare against the direct steady Robin solve instead of
        /// integrating in time.
        #[arg(long)]
        steady: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit quantitative bounds on sampled data.
    Verify {
        #[command(subcommand)]
        what: VerifyCmd,
    },
    /// Independent reference computations (tagged source=oracle).
    Oracle {
        #[command(subcommand)]
        what: OracleCmd,
    },
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Fit a Gaussian envelope to kernel samples, emit the fit as JSON.
    Gaussian {
        #[arg(long)]
        samples: PathBuf,
        /// Spatial dimension entering the short-time normalization.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Domain diameter capping sqrt(t-s).
        #[arg(long, default_value_t = 1.0)]
        diam: f64,
        #[arg(long, default_value_t = 2.0)]
        slack: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check exponential decay of the solve stage against the certified
    /// coercivity constant.
    Decay {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Eigenfunction-series heat-kernel samples for the 1D unit interval.
    Series {
        /// Robin coefficients at the two endpoints.
        #[arg(long, num_args = 2, value_names = ["LEFT", "RIGHT"])]
        theta: Vec<f64>,
        /// Kernel time t (source at s = 0).
        #[arg(long)]
        t: f64,
        /// Source position.
        #[arg(long, default_value_t = 0.5)]
        y: f64,
        /// Number of equispaced sample points in x.
        #[arg(long, default_value_t = 33)]
        points: usize,
        #[arg(long, default_value_t = 400)]
        modes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Run { config } => {
            let manifest = pipeline::run(&config, cli.jobs)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Cmd::Mesh { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let mesh = cfg.build_mesh()?;
            mesh.validate()?;
            emit(out.as_deref(), &mesh.to_json())
        }
        Cmd::Coercivity { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = cfg.build_problem()?;
            let times = if problem.time_independent() {
                vec![cfg.time.t0]
            } else {
                vec![cfg.time.t0, 0.5 * (cfg.time.t0 + cfg.time.t1), cfg.time.t1]
            };
            let report = check_h1(&problem, &times, 1e-9)?;
            emit(
                out.as_deref(),
                &pipeline::coercivity_report_json(&report, &cfg.echo_json()),
            )
        }
        Cmd::Solve { config, out_prefix } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problem = cfg.build_problem()?;
            let psi0 =
                catalog::initial(&cfg.options.initial, &problem.mesh, problem.m(), cfg.seed)?;
            let traj = solve_forward(&problem, &psi0, None, cfg.time_grid()?)?;
            match out_prefix {
                Some(prefix) => {
                    let csv = prefix.with_extension("csv");
                    output::write_text(&csv, &trajectory_csv(&traj))?;
                    let energy = PathBuf::from(format!(
                        "{}_energy.json",
                        prefix.to_string_lossy()
                    ));
                    output::write_text(&energy, &energy_json(&traj))?;
                    Ok(())
                }
                None => emit(None, &trajectory_csv(&traj)),
            }
        }
        Cmd::Green { config, source_vertex, column, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if source_vertex.is_some() {
                cfg.options.source_vertex = source_vertex;
            }
            let problem = cfg.build_problem()?;
            let y = pipeline::source_vertex(&cfg, &problem);
            let col = heat_kernel_column(&problem, y, column, cfg.time_grid()?)?;
            emit(out.as_deref(), &green_column_csv(&col))
        }
        Cmd::EllipticGreen { config, source_vertex, steady, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if source_vertex.is_some() {
                cfg.options.source_vertex = source_vertex;
            }
            let problem = cfg.build_problem()?;
            let y = pipeline::source_vertex(&cfg, &problem);
            let columns = if steady {
                steady_green(&problem, y)?
            } else {
                let report = check_h1(&problem, &[cfg.time.t0], 1e-9)?;
                robin_green::green::elliptic_green(
                    &problem,
                    y,
                    report.theta0,
                    cfg.options.elliptic_tol,
                )?
            };
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
            emit(out.as_deref(), &text)
        }
        Cmd::Verify { what } => match what {
            VerifyCmd::Gaussian { samples, dim, diam, slack, out } => {
                let text = std::fs::read_to_string(&samples)?;
                let parsed = output::parse_samples_csv(&text)?;
                let fit = fit_gaussian_bound(&parsed, dim, diam, slack)?;
                let report = format!(
                    "{{\"c\":{},\"kappa\":{},\"r_squared\":{},\"violations\":{},\"slack\":{},\"dim\":{dim},\"diam\":{},\"n_samples\":{}}}\n",
                    fmt_f(fit.c),
                    fmt_f(fit.kappa),
                    fmt_f(fit.r_squared),
                    fit.violations,
                    fmt_f(fit.slack),
                    fmt_f(diam),
                    parsed.len()
                );
                emit(out.as_deref(), &report)
            }
            VerifyCmd::Decay { config, out } => {
                let cfg = ExperimentConfig::load(&config)?;
                let problem = cfg.build_problem()?;
                let report = check_h1(&problem, &[cfg.time.t0], 1e-9)?;
                let psi0 = catalog::initial(
                    &cfg.options.initial,
                    &problem.mesh,
                    problem.m(),
                    cfg.seed,
                )?;
                let traj = solve_forward(&problem, &psi0, None, cfg.time_grid()?)?;
                let tol = 0.05 + traj.grid.dt() * report.theta0;
                let (pass, worst) =
                    robin_green::verify::check_decay_vs_theta0(&traj, report.theta0, tol);
                let text = format!(
                    "{{\"check\":\"decay_vs_theta0\",\"theta0\":{},\"tol\":{},\"pass\":{},\"worst_margin\":{},\"t_worst\":{},\"config\":{}}}\n",
                    fmt_f(report.theta0),
                    fmt_f(tol),
                    pass,
                    fmt_f(worst),
                    fmt_opt(report.t_worst),
                    cfg.echo_json()
                );
                emit(out.as_deref(), &text)?;
                if !pass {
                    anyhow::bail!("decay check failed (worst margin {})", fmt_f(worst));
                }
                Ok(())
            }
        },
        Cmd::Oracle { what } => match what {
            OracleCmd::Series { theta, t, y, points, modes, out } => {
                let basis = RobinEigenbasis1D::new(theta[0], theta[1], modes)?;
                let mut samples = Vec::with_capacity(points);
                for i in 0..points {
                    let x = i as f64 / (points.max(2) - 1) as f64;
                    let value =
                        robin_green::oracle::series_from_basis(&basis, x, y, t)?;
                    samples.push(KernelMatrixSample {
                        x: [x, 0.0],
                        y: [y, 0.0],
                        t,
                        s: 0.0,
                        value: DMatrix::from_element(1, 1, value),
                    });
                }
                emit(out.as_deref(), &samples_csv(&samples, "oracle"))
            }
        },
    }
}
