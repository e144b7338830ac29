//! Coercivity certification: the best constant `theta0` with
//! `theta0 (‖u‖² + ‖Du‖²) <= lambda_tilde ‖Du‖² + <Theta u, u>`,
//! computed as the smallest eigenvalue of the assembled pencil.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assembly::solve::{solve_spd, SolveError};
use crate::assembly::SparseMatrix;
use crate::problem::{ProblemError, RobinProblem};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum CoercivityError {
    #[error("lambda_tilde must lie in (0, lambda); got {0}")]
    BadLambdaTilde(f64),
    #[error("matrix dimensions disagree: M {0}, K {1}, B {2}")]
    DimensionMismatch(usize, usize, usize),
    #[error("inverse power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("no time samples given")]
    NoSamples,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone)]
pub struct CoercivityReport<T: Real> {
    pub theta0: T,
    pub lambda_tilde: T,
    /// Minimizing nodal field (D-normalized).
    pub eigvec: DVector<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Sample time attaining the minimum, when certified over a time set.
    pub t_worst: Option<T>,
}

const ITERATION_CAP: usize = 10_000;

/// Smallest eigenvalue of `(lambda_tilde K_unit + sym B) x = theta0 (M + K_unit) x`
/// by shifted inverse power iteration. The shift only regularizes the solve;
/// the reported value is the pencil eigenvalue itself.
pub fn estimate_theta0<T: Real>(
    mass: &SparseMatrix<T>,
    k_unit: &SparseMatrix<T>,
    robin: &SparseMatrix<T>,
    lambda_tilde: T,
    tol: T,
) -> Result<CoercivityReport<T>, CoercivityError> {
    if !(lambda_tilde > T::zero()) {
        return Err(CoercivityError::BadLambdaTilde(lambda_tilde.as_f64()));
    }
    let n = mass.dim();
    if k_unit.dim() != n || robin.dim() != n {
        return Err(CoercivityError::DimensionMismatch(n, k_unit.dim(), robin.dim()));
    }
    let b_sym = robin.symmetric_part();
    let n_mat = SparseMatrix::linear_combination(&[(lambda_tilde, k_unit), (T::one(), &b_sym)]);
    let d_mat = SparseMatrix::linear_combination(&[(T::one(), mass), (T::one(), k_unit)]);

    let trace = |m: &SparseMatrix<T>| {
        let d = m.diagonal();
        (0..n).fold(T::zero(), |a, i| a + d[i])
    };
    // regularizing shift; grown adaptively if N + sigma D is indefinite
    let scale = (trace(&n_mat).abs() / trace(&d_mat)).max(T::of(1e-12));
    let mut sigma = scale * T::of(1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_C0E5);
    let mut v: DVector<T> = DVector::from_fn(n, |_, _| T::of(rng.gen_range(-1.0..1.0)));
    let dnorm = |v: &DVector<T>, dv: &DVector<T>| v.dot(dv).max(T::zero()).sqrt();
    let mut dv = d_mat.matvec(&v);
    v /= dnorm(&v, &dv);
    dv = d_mat.matvec(&v);

    let solve_tol = T::of(1e-13);
    let mut rho = T::zero();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < ITERATION_CAP {
        iterations += 1;
        let shifted =
            SparseMatrix::linear_combination(&[(T::one(), &n_mat), (sigma, &d_mat)]);
        let w = match solve_spd(&shifted, &dv, solve_tol) {
            Ok(w) => w,
            Err(_) => {
                // indefinite shifted matrix: back off with a larger shift
                sigma = (sigma * T::of(100.0)).max(scale * T::of(1e-2));
                continue;
            }
        };
        let wd = d_mat.matvec(&w);
        let norm = dnorm(&w, &wd);
        if norm == T::zero() {
            break;
        }
        v = w / norm;
        dv = d_mat.matvec(&v);
        let nv = n_mat.matvec(&v);
        rho = v.dot(&nv);
        let resid = (&nv - &dv * rho).norm();
        if resid <= tol * dv.norm() * (T::one() + rho.abs()) {
            converged = true;
            break;
        }
    }
    if !converged && iterations >= ITERATION_CAP {
        return Err(CoercivityError::NoConvergence(ITERATION_CAP));
    }
    Ok(CoercivityReport {
        theta0: rho,
        lambda_tilde,
        eigvec: v,
        iterations,
        converged,
        t_worst: None,
    })
}

/// Certify coercivity over a set of sample times; returns the worst (minimum)
/// report. Time-independent data collapse to a single solve.
pub fn check_h1<T: Real>(
    problem: &RobinProblem<T>,
    t_samples: &[T],
    tol: T,
) -> Result<CoercivityReport<T>, CoercivityError> {
    if t_samples.is_empty() {
        return Err(CoercivityError::NoSamples);
    }
    if !(problem.lambda_tilde < problem.field.lambda) {
        return Err(CoercivityError::BadLambdaTilde(problem.lambda_tilde.as_f64()));
    }
    let mass = problem.mass();
    let k_unit = problem.k_unit();
    let times: &[T] =
        if problem.theta.time_independent { &t_samples[..1] } else { t_samples };
    let mut worst: Option<CoercivityReport<T>> = None;
    let mut all_converged = true;
    for &t in times {
        let b = problem.robin(t)?;
        let mut rep = estimate_theta0(&mass, &k_unit, &b, problem.lambda_tilde, tol)?;
        rep.t_worst = Some(t);
        all_converged &= rep.converged;
        if worst.as_ref().map_or(true, |w| rep.theta0 < w.theta0) {
            worst = Some(rep);
        }
    }
    let mut rep = worst.unwrap();
    rep.converged = all_converged;
    Ok(rep)
}
