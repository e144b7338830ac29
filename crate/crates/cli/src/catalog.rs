//! Named constructors for coefficient tensors, boundary operators and
//! initial data, parsed from `name(arg, ...)` strings in configs.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robin_green::assembly::NodalField;
use robin_green::coeff::{CoefficientField, RobinOperator};
use robin_green::mesh::Mesh;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown coefficient catalog name `{0}`")]
    UnknownCoefficient(String),
    #[error("unknown boundary operator catalog name `{0}`")]
    UnknownTheta(String),
    #[error("unknown initial-data catalog name `{0}`")]
    UnknownInitial(String),
    #[error("`{name}` takes {expect} argument(s), got {got}")]
    WrongArity { name: String, expect: usize, got: usize },
    #[error("`{name}` requires {require}, config has m={m}, dimension={dim}")]
    WrongShape { name: String, require: &'static str, m: usize, dim: usize },
    #[error("cannot parse `{0}` as a number")]
    BadNumber(String),
    #[error("malformed catalog call `{0}`")]
    Malformed(String),
}

/// Split `name(a, b)` into the name and its numeric arguments; a bare name
/// has no arguments.
pub fn parse_call(s: &str) -> Result<(String, Vec<f64>), CatalogError> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s.to_string(), Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(CatalogError::Malformed(s.to_string()));
    }
    let name = s[..open].trim().to_string();
    let inner = &s[open + 1..s.len() - 1];
    let mut args = Vec::new();
    for piece in inner.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        args.push(piece.parse::<f64>().map_err(|_| CatalogError::BadNumber(piece.to_string()))?);
    }
    Ok((name, args))
}

fn arity(name: &str, args: &[f64], expect: usize) -> Result<(), CatalogError> {
    if args.len() != expect {
        return Err(CatalogError::WrongArity {
            name: name.to_string(),
            expect,
            got: args.len(),
        });
    }
    Ok(())
}

pub fn coefficient(
    spec: &str,
    m: usize,
    dim: usize,
) -> Result<CoefficientField<f64>, CatalogError> {
    let (name, args) = parse_call(spec)?;
    let shape = |require: &'static str| CatalogError::WrongShape {
        name: name.clone(),
        require,
        m,
        dim,
    };
    match name.as_str() {
        "laplace" => {
            arity(&name, &args, 0)?;
            Ok(CoefficientField::laplace(m, dim))
        }
        "diag" => {
            arity(&name, &args, 2)?;
            if m != 1 || dim != 2 {
                return Err(shape("m=1 on a 2D domain"));
            }
            Ok(CoefficientField::diag2(args[0], args[1]))
        }
        "system2_skew" => {
            arity(&name, &args, 1)?;
            if m != 2 {
                return Err(shape("m=2"));
            }
            Ok(CoefficientField::system2_skew(args[0], dim))
        }
        "checkerboard" => {
            arity(&name, &args, 2)?;
            if m != 1 {
                return Err(shape("m=1"));
            }
            Ok(CoefficientField::checkerboard(args[0], args[1], dim))
        }
        "skew2d" => {
            arity(&name, &args, 1)?;
            if m != 1 || dim != 2 {
                return Err(shape("m=1 on a 2D domain"));
            }
            Ok(CoefficientField::skew2d(args[0]))
        }
        "skew2d_t" => {
            arity(&name, &args, 1)?;
            if m != 1 || dim != 2 {
                return Err(shape("m=1 on a 2D domain"));
            }
            Ok(CoefficientField::skew2d_timedep(args[0]))
        }
        _ => Err(CatalogError::UnknownCoefficient(name)),
    }
}

pub fn theta(spec: &str, m: usize) -> Result<RobinOperator<f64>, CatalogError> {
    let (name, args) = parse_call(spec)?;
    match name.as_str() {
        "theta_const" => {
            arity(&name, &args, 1)?;
            Ok(RobinOperator::constant(args[0], m))
        }
        "theta_zero" => {
            arity(&name, &args, 0)?;
            Ok(RobinOperator::zero(m))
        }
        "theta_rank1" => {
            arity(&name, &args, 1)?;
            Ok(RobinOperator::rank1_const(args[0], m))
        }
        _ => Err(CatalogError::UnknownTheta(name)),
    }
}

/// Initial data by name: `constant`, `bump` (product of half-period sines)
/// or `random` (seeded, uniform in [-1, 1] per dof).
pub fn initial(
    name: &str,
    mesh: &Mesh<f64>,
    m: usize,
    seed: u64,
) -> Result<NodalField<f64>, CatalogError> {
    match name {
        "constant" => Ok(NodalField::interpolate(mesh, m, |_| {
            DVector::from_element(m, 1.0)
        })),
        "bump" => {
            let dim = mesh.dimension;
            Ok(NodalField::interpolate(mesh, m, move |x: &[f64; 2]| {
                let mut v = (std::f64::consts::PI * x[0]).sin();
                if dim == 2 {
                    v *= (std::f64::consts::PI * x[1]).sin();
                }
                DVector::from_element(m, v)
            }))
        }
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = m * mesh.n_vertices();
            let coeffs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            Ok(NodalField::from_vector(m, mesh.n_vertices(), coeffs))
        }
        _ => Err(CatalogError::UnknownInitial(name.to_string())),
    }
}
