//! Experiment configuration: a single TOML file; unknown keys are errors.

use std::path::Path;

use robin_green::mesh::{
    build_interval_mesh, build_lshape_mesh, build_rectangle_mesh, Mesh,
};
use robin_green::parabolic::{Scheme, TimeGrid};
use robin_green::problem::RobinProblem;
use serde::{Deserialize, Serialize};

use crate::catalog;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; overridable by the ROBIN_GREEN_OUT environment
    /// variable.
    pub output: String,
    /// Ordered stage names: mesh, validate, coercivity, solve, green,
    /// elliptic-green, verify.
    pub pipeline: Vec<String>,
    pub domain: DomainSpec,
    pub coefficients: CoeffSpec,
    pub boundary: BoundarySpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval { a: f64, b: f64, cells: usize },
    Rectangle { width: f64, height: f64, nx: usize, ny: usize },
    Lshape { cells: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSpec {
    /// Catalog call, e.g. `laplace`, `diag(1,2)`, `system2_skew(0.4)`.
    pub name: String,
    pub m: usize,
    /// Optional cross-check against the catalog tensor's ellipticity
    /// constant.
    pub lambda: Option<f64>,
    pub lambda_tilde: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    /// Catalog call, e.g. `theta_const(1)`, `theta_zero`, `theta_rank1(2)`.
    pub theta: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Delta source vertex for the green stages; defaults to the vertex
    /// nearest the domain centroid.
    pub source_vertex: Option<usize>,
    #[serde(default)]
    pub source_component: usize,
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default)]
    pub lumped_mass: bool,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_elliptic_tol")]
    pub elliptic_tol: f64,
}

fn default_initial() -> String {
    "bump".to_string()
}

fn default_jobs() -> usize {
    1
}

fn default_elliptic_tol() -> f64 {
    1e-3
}

impl Default for Options {
    fn default() -> Self {
        Options {
            source_vertex: None,
            source_component: 0,
            initial: default_initial(),
            lumped_mass: false,
            jobs: default_jobs(),
            elliptic_tol: default_elliptic_tol(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate_names()?;
        Ok(cfg)
    }

    /// Resolve every catalog name eagerly so a typo fails before any stage
    /// runs.
    pub fn validate_names(&self) -> anyhow::Result<()> {
        let dim = match self.domain {
            DomainSpec::Interval { .. } => 1,
            _ => 2,
        };
        catalog::coefficient(&self.coefficients.name, self.coefficients.m, dim)?;
        catalog::theta(&self.boundary.theta, self.coefficients.m)?;
        const STAGES: [&str; 7] =
            ["mesh", "validate", "coercivity", "solve", "green", "elliptic-green", "verify"];
        for stage in &self.pipeline {
            if !STAGES.contains(&stage.as_str()) {
                anyhow::bail!("unknown pipeline stage `{stage}` (expected one of {STAGES:?})");
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> anyhow::Result<Mesh<f64>> {
        let mesh = match self.domain {
            DomainSpec::Interval { a, b, cells } => build_interval_mesh(a, b, cells)?,
            DomainSpec::Rectangle { width, height, nx, ny } => {
                build_rectangle_mesh(width, height, nx, ny)?
            }
            DomainSpec::Lshape { cells } => build_lshape_mesh(cells)?,
        };
        Ok(mesh)
    }

    pub fn build_problem(&self) -> anyhow::Result<RobinProblem<f64>> {
        let mesh = self.build_mesh()?;
        let dim = mesh.dimension;
        let m = self.coefficients.m;
        let field = catalog::coefficient(&self.coefficients.name, m, dim)?;
        if let Some(lambda) = self.coefficients.lambda {
            if (lambda - field.lambda).abs() > 1e-12 * lambda.abs().max(1.0) {
                anyhow::bail!(
                    "config lambda = {lambda} disagrees with the catalog tensor's {}",
                    field.lambda
                );
            }
        }
        let theta = catalog::theta(&self.boundary.theta, m)?;
        let mut problem =
            RobinProblem::new(mesh, field, theta, self.coefficients.lambda_tilde)?;
        if self.options.lumped_mass {
            problem = problem.with_lumped_mass();
        }
        Ok(problem)
    }

    pub fn time_grid(&self) -> anyhow::Result<TimeGrid<f64>> {
        Ok(TimeGrid::new(self.time.t0, self.time.t1, self.time.steps, self.time.scheme)?)
    }

    /// The subset every report echoes so its provenance is self-contained.
    pub fn echo_json(&self) -> String {
        serde_json::json!({
            "domain": self.domain,
            "coefficients": self.coefficients,
            "boundary": self.boundary,
            "time": self.time,
            "seed": self.seed,
        })
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
output = "out"
pipeline = ["coercivity"]

[domain]
kind = "interval"
a = 0.0
b = 1.0
cells = 16

[coefficients]
name = "laplace"
m = 1
lambda_tilde = 0.5

[boundary]
theta = "theta_const(1)"

[time]
t0 = 0.0
t1 = 1.0
steps = 8
scheme = "implicit_euler"
"#;

    #[test]
    fn minimal_config_parses_and_builds() {
        let cfg: ExperimentConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate_names().unwrap();
        let p = cfg.build_problem().unwrap();
        assert_eq!(p.n_dofs(), 17);
        assert_eq!(cfg.options.jobs, 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("seed = 1", "seed = 1\nextra_knob = 3");
        assert!(toml::from_str::<ExperimentConfig>(&bad).is_err());
    }

    #[test]
    fn unknown_catalog_name_is_an_error() {
        let bad = MINIMAL.replace("\"laplace\"", "\"warp(3)\"");
        let cfg: ExperimentConfig = toml::from_str(&bad).unwrap();
        let err = cfg.validate_names().unwrap_err();
        assert!(err.to_string().contains("warp"));
    }

    #[test]
    fn lambda_cross_check() {
        let good = MINIMAL.replace("m = 1", "m = 1\nlambda = 1.0");
        toml::from_str::<ExperimentConfig>(&good).unwrap().build_problem().unwrap();
        let bad = MINIMAL.replace("m = 1", "m = 1\nlambda = 0.25");
        let cfg = toml::from_str::<ExperimentConfig>(&bad).unwrap();
        assert!(cfg.build_problem().is_err());
    }
}
