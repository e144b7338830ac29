//! Independent reference solutions: a 1D Robin eigenfunction series, a
//! fine-grid finite-difference solver, and dense pencil eigensolves. None of
//! these touch the finite-element assembly or the iterative solvers, so
//! agreement with the FEM path is evidence rather than tautology.

use nalgebra::{DMatrix, DVector};

use crate::parabolic::{Direction, Scheme, TimeGrid, Trajectory};
use crate::problem::RobinProblem;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("dense eigensolve capped at dimension 2000 (got {0})")]
    DimensionCap(usize),
    #[error("matrix is not positive definite on the pencil's right side")]
    NotPositiveDefinite,
    #[error("no sign change of the Robin matching function on ({0}, {1})")]
    BracketFailure(f64, f64),
    #[error("series tail bound {bound} exceeds the requested relative 1e-12 (scale {scale}); increase n_terms")]
    TailTooLarge { bound: f64, scale: f64 },
    #[error("finite-difference reference requires a scalar 1D problem with a pointwise multiplier boundary operator")]
    NotScalar1d,
    #[error("finite-difference reference implements implicit Euler only")]
    UnsupportedScheme,
    #[error("t must be positive (got {0})")]
    BadTime(f64),
    #[error("negative Robin data is outside the oracle's bracketing theory")]
    NegativeTheta,
}

// ---------------------------------------------------------------------------
// dense generalized eigensolve
// ---------------------------------------------------------------------------

/// Full spectrum and eigenvectors of `N x = mu D x` for symmetric `N` and
/// SPD `D`, via Cholesky reduction to a standard symmetric problem.
/// Eigenvalues ascending.
pub fn generalized_eig_dense<T: Real>(
    n_mat: &DMatrix<T>,
    d_mat: &DMatrix<T>,
) -> Result<(Vec<T>, Vec<DVector<T>>), OracleError> {
    let dim = n_mat.nrows();
    if dim > 2000 {
        return Err(OracleError::DimensionCap(dim));
    }
    let chol = d_mat.clone().cholesky().ok_or(OracleError::NotPositiveDefinite)?;
    let l = chol.l();
    // S = L^{-1} N L^{-T}, using N = N^T
    let x = l
        .solve_lower_triangular(n_mat)
        .ok_or(OracleError::NotPositiveDefinite)?;
    let s = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(OracleError::NotPositiveDefinite)?;
    let s = (&s + s.transpose()) * T::of(0.5);
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let lt = l.transpose();
    let mut values = Vec::with_capacity(dim);
    let mut vectors = Vec::with_capacity(dim);
    for &i in &order {
        values.push(eig.eigenvalues[i]);
        let q = eig.eigenvectors.column(i).into_owned();
        let v = lt
            .solve_upper_triangular(&q)
            .ok_or(OracleError::NotPositiveDefinite)?;
        vectors.push(v);
    }
    Ok((values, vectors))
}

/// Spectrum of the coercivity pencil
/// `(lambda_tilde K + sym B) x = mu (M + K) x`, ascending.
pub fn dense_generalized_eig<T: Real>(
    mass: &DMatrix<T>,
    k_unit: &DMatrix<T>,
    robin: &DMatrix<T>,
    lambda_tilde: T,
) -> Result<Vec<T>, OracleError> {
    let b_sym = (robin + robin.transpose()) * T::of(0.5);
    let n = k_unit * lambda_tilde + b_sym;
    let d = mass + k_unit;
    Ok(generalized_eig_dense(&n, &d)?.0)
}

// ---------------------------------------------------------------------------
// 1D Robin eigenbasis on (0,1)
// ---------------------------------------------------------------------------

/// L²(0,1)-orthonormal eigenfunctions of `-u'' = mu u` with
/// `-u'(0) + theta_left u(0) = 0`, `u'(1) + theta_right u(1) = 0`.
#[derive(Debug, Clone)]
pub struct RobinEigenbasis1D<T> {
    pub theta_left: T,
    pub theta_right: T,
    /// Frequencies; eigenvalue is `omega^2`. A leading `0` is the Neumann
    /// constant mode.
    pub omegas: Vec<T>,
    /// Normalization factors: `phi = norm * phi_raw`.
    pub norms: Vec<T>,
}

fn matching<T: Real>(theta_l: T, theta_r: T, omega: T) -> T {
    (theta_l + theta_r) * omega * omega.cos()
        + (theta_l * theta_r - omega * omega) * omega.sin()
}

fn matching_scale<T: Real>(theta_l: T, theta_r: T, omega: T) -> T {
    (theta_l + theta_r) * omega + theta_l * theta_r + omega * omega + T::one()
}

fn simpson_unit<T: Real>(f: impl Fn(T) -> T) -> T {
    // composite Simpson on [0,1] with 8192 panels
    let n = 8192usize;
    let h = T::one() / T::of_usize(n);
    let mut acc = f(T::zero()) + f(T::one());
    for i in 1..n {
        let w = if i % 2 == 1 { T::of(4.0) } else { T::of(2.0) };
        acc += w * f(T::of_usize(i) * h);
    }
    acc * h / T::of(3.0)
}

impl<T: Real> RobinEigenbasis1D<T> {
    pub fn new(theta_left: T, theta_right: T, n_modes: usize) -> Result<Self, OracleError> {
        if theta_left < T::zero() || theta_right < T::zero() {
            return Err(OracleError::NegativeTheta);
        }
        let pi = T::pi();
        let mut omegas = Vec::with_capacity(n_modes);
        if theta_left == T::zero() && theta_right == T::zero() {
            // pure Neumann: omega_k = k*pi including the constant mode
            for k in 0..n_modes {
                omegas.push(pi * T::of_usize(k));
            }
        } else {
            for k in 1..=n_modes {
                let mut lo = pi * T::of_usize(k - 1);
                let hi = pi * T::of_usize(k);
                if k == 1 {
                    lo = T::of(1e-8);
                }
                omegas.push(bisect_matching(theta_left, theta_right, lo, hi)?);
            }
        }
        let norms = omegas
            .iter()
            .map(|&w| {
                let c = simpson_unit(|x| {
                    let v = raw_mode(theta_left, w, x);
                    v * v
                });
                T::one() / c.sqrt()
            })
            .collect();
        Ok(Self { theta_left, theta_right, omegas, norms })
    }

    pub fn eigenvalue(&self, k: usize) -> T {
        self.omegas[k] * self.omegas[k]
    }

    pub fn eval(&self, k: usize, x: T) -> T {
        self.norms[k] * raw_mode(self.theta_left, self.omegas[k], x)
    }

    /// Relative residual of the transcendental matching condition at mode k.
    pub fn matching_residual(&self, k: usize) -> T {
        let w = self.omegas[k];
        if w == T::zero() {
            return T::zero();
        }
        matching(self.theta_left, self.theta_right, w).abs()
            / matching_scale(self.theta_left, self.theta_right, w)
    }

    /// Upper bound on the kernel tail dropped after `n` modes, using
    /// `mu_k >= ((k-1)pi)^2` for the omitted eigenvalues.
    pub fn tail_bound(&self, t: T) -> T {
        let n = self.omegas.len();
        let pi = T::pi();
        let mu_next = (pi * T::of_usize(n)) * (pi * T::of_usize(n));
        let gap = pi * pi * T::of_usize(2 * n + 1);
        let geo = T::one() - (-(gap * t)).exp();
        // sup|phi_k|^2 <= 2 (1 + (theta_l/omega)^2) with omega >= n*pi,
        // padded for the quadrature norm
        let amp = T::of(3.0)
            * (T::one() + (self.theta_left / (pi * T::of_usize(n.max(1)))).powi(2));
        amp * (-(mu_next * t)).exp() / geo.max(T::of(1e-300))
    }
}

fn raw_mode<T: Real>(theta_l: T, omega: T, x: T) -> T {
    if omega == T::zero() {
        T::one()
    } else {
        (omega * x).cos() + (theta_l / omega) * (omega * x).sin()
    }
}

fn bisect_matching<T: Real>(
    theta_l: T,
    theta_r: T,
    mut lo: T,
    mut hi: T,
) -> Result<T, OracleError> {
    let f = |w: T| matching(theta_l, theta_r, w);
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo * fhi > T::zero() {
        return Err(OracleError::BracketFailure(lo.as_f64(), hi.as_f64()));
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::of(0.5);
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if flo * fm < T::zero() {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
        if hi - lo <= T::of(1e-15) * hi.max(T::one()) {
            break;
        }
    }
    Ok((lo + hi) * T::of(0.5))
}

/// Eigenfunction-series heat kernel on (0,1) for `-u''` with Robin data.
pub fn series_heat_kernel_1d<T: Real>(
    theta_left: T,
    theta_right: T,
    x: T,
    y: T,
    t: T,
    n_terms: usize,
) -> Result<T, OracleError> {
    if !(t > T::zero()) {
        return Err(OracleError::BadTime(t.as_f64()));
    }
    let basis = RobinEigenbasis1D::new(theta_left, theta_right, n_terms)?;
    series_from_basis(&basis, x, y, t)
}

pub fn series_from_basis<T: Real>(
    basis: &RobinEigenbasis1D<T>,
    x: T,
    y: T,
    t: T,
) -> Result<T, OracleError> {
    let mut sum = T::zero();
    let mut abs_sum = T::zero();
    for k in 0..basis.omegas.len() {
        // group the product so K(x,y,t) == K(y,x,t) bit-for-bit
        let term = (-(basis.eigenvalue(k) * t)).exp() * (basis.eval(k, x) * basis.eval(k, y));
        sum += term;
        abs_sum += term.abs();
    }
    let bound = basis.tail_bound(t);
    let scale = abs_sum.max(T::of(1e-300));
    if bound > T::of(1e-12) * scale {
        return Err(OracleError::TailTooLarge { bound: bound.as_f64(), scale: scale.as_f64() });
    }
    Ok(sum)
}

/// `∫₀¹ K(x, y, t) dx` by Simpson quadrature of the truncated series.
pub fn series_kernel_mass<T: Real>(
    basis: &RobinEigenbasis1D<T>,
    y: T,
    t: T,
) -> Result<T, OracleError> {
    // integrate term-by-term: each mode contributes e^{-mu t} phi(y) ∫phi
    let mut total = T::zero();
    for k in 0..basis.omegas.len() {
        let integral = simpson_unit(|x| basis.eval(k, x));
        total += (-(basis.eigenvalue(k) * t)).exp() * basis.eval(k, y) * integral;
    }
    let bound = basis.tail_bound(t);
    if bound > T::of(1e-12) * total.abs().max(T::of(1e-300)) {
        return Err(OracleError::TailTooLarge {
            bound: bound.as_f64(),
            scale: total.abs().as_f64(),
        });
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// finite-difference reference solver (implicit Euler, 1D scalar)
// ---------------------------------------------------------------------------

fn thomas<T: Real>(
    sub: &[T],
    diag: &[T],
    sup: &[T],
    rhs: &DVector<T>,
) -> DVector<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / denom } else { T::zero() };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = DVector::zeros(n);
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Second-order finite-volume reference run on the interval, implicit Euler,
/// Robin flux closure at the endpoints. Shares no code with the FEM path.
pub fn dense_reference_solve<T: Real>(
    problem: &RobinProblem<T>,
    psi0: &dyn Fn(T) -> T,
    fine_n: usize,
    grid: TimeGrid<T>,
) -> Result<Trajectory<T>, OracleError> {
    if problem.mesh.dimension != 1 || problem.m() != 1 {
        return Err(OracleError::NotScalar1d);
    }
    if grid.scheme != Scheme::ImplicitEuler {
        return Err(OracleError::UnsupportedScheme);
    }
    let a = problem.mesh.vertices.iter().map(|v| v[0]).fold(T::of(f64::INFINITY), T::min);
    let b = problem.mesh.vertices.iter().map(|v| v[0]).fold(T::of(f64::NEG_INFINITY), T::max);
    let n = fine_n;
    let h = (b - a) / T::of_usize(n);
    let xs: Vec<T> = (0..=n).map(|i| a + h * T::of_usize(i)).collect();
    let kappa = |x: T, t: T| problem.field.tensor(&[x, T::zero()], t)[(0, 0)];
    let theta_at = |x: T, t: T| -> Result<T, OracleError> {
        problem
            .theta
            .theta(&[x, T::zero()], t)
            .map(|m| m[(0, 0)])
            .ok_or(OracleError::NotScalar1d)
    };
    let dt = grid.dt();
    let mut u = DVector::from_fn(n + 1, |i, _| psi0(xs[i]));
    let mut snapshots = Vec::with_capacity(grid.steps + 1);
    let mut energy_log = Vec::with_capacity(grid.steps + 1);
    let log_energy = |u: &DVector<T>, tl: T, tr: T| -> [T; 3] {
        let mut e0 = T::zero();
        let mut e1 = T::zero();
        for i in 0..=n {
            let w = if i == 0 || i == n { h * T::of(0.5) } else { h };
            e0 += w * u[i] * u[i];
        }
        for i in 0..n {
            let s = (u[i + 1] - u[i]) / h;
            e1 += h * s * s;
        }
        [e0, problem.lambda_tilde * e1, tl * u[0] * u[0] + tr * u[n] * u[n]]
    };
    {
        let tl = theta_at(xs[0], grid.t0)?;
        let tr = theta_at(xs[n], grid.t0)?;
        energy_log.push(log_energy(&u, tl, tr));
    }
    snapshots.push(u.clone());
    // lumped cell volumes: h/2 at the ends, h inside
    for k in 0..grid.steps {
        let t_new = grid.time(k + 1);
        let tl = theta_at(xs[0], t_new)?;
        let tr = theta_at(xs[n], t_new)?;
        let kh: Vec<T> =
            (0..n).map(|i| kappa((xs[i] + xs[i + 1]) * T::of(0.5), t_new)).collect();
        let mut sub = vec![T::zero(); n + 1];
        let mut diag = vec![T::zero(); n + 1];
        let mut sup = vec![T::zero(); n + 1];
        // row i of (W/dt + A): W u̇ = flux balance
        let half = h * T::of(0.5);
        diag[0] = half / dt + kh[0] / h + tl;
        sup[0] = -(kh[0] / h);
        for i in 1..n {
            sub[i] = -(kh[i - 1] / h);
            diag[i] = h / dt + (kh[i - 1] + kh[i]) / h;
            sup[i] = -(kh[i] / h);
        }
        sub[n] = -(kh[n - 1] / h);
        diag[n] = half / dt + kh[n - 1] / h + tr;
        let rhs = DVector::from_fn(n + 1, |i, _| {
            let w = if i == 0 || i == n { half } else { h };
            w / dt * u[i]
        });
        u = thomas(&sub, &diag, &sup, &rhs);
        energy_log.push(log_energy(&u, tl, tr));
        snapshots.push(u.clone());
    }
    Ok(Trajectory {
        grid,
        m: 1,
        n_vertices: n + 1,
        snapshots,
        direction: Direction::Forward,
        energy_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{CoefficientField, RobinOperator};
    use crate::mesh::build_interval_mesh;

    #[test]
    fn two_by_two_pencil_by_hand() {
        // N = diag(2, 8), D = diag(1, 2): eigenvalues 2 and 4
        let n: DMatrix<f64> = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let (vals, _) = generalized_eig_dense(&n, &d).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-14);
        assert!((vals[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_pencils_are_entry_ratios() {
        let n: DMatrix<f64> = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 10.0]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0, 5.0]));
        let (vals, _) = generalized_eig_dense(&n, &d).unwrap();
        let mut expect = [1.5, 0.25, 2.0];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (v, e) in vals.iter().zip(expect) {
            assert!((v - e).abs() < 1e-13);
        }
    }

    #[test]
    fn dimension_cap_enforced() {
        let n = DMatrix::<f64>::identity(2001, 2001);
        assert!(matches!(
            generalized_eig_dense(&n, &n),
            Err(OracleError::DimensionCap(2001))
        ));
    }

    #[test]
    fn eigenbasis_orthonormal_and_matching() {
        for (tl, tr) in [(1.0, 1.0), (0.0, 2.5), (3.0, 0.5)] {
            let basis = RobinEigenbasis1D::<f64>::new(tl, tr, 8).unwrap();
            for k in 0..8 {
                assert!(basis.matching_residual(k) <= 1e-10, "residual mode {k}");
                for l in k..8 {
                    let ip = simpson_unit(|x| basis.eval(k, x) * basis.eval(l, x));
                    let expect = if k == l { 1.0 } else { 0.0 };
                    assert!((ip - expect).abs() <= 1e-10, "({tl},{tr}) modes {k},{l}: {ip}");
                }
            }
        }
    }

    #[test]
    fn neumann_kernel_tends_to_one() {
        // constant mode survives: K -> 1 as t grows
        let k: f64 = series_heat_kernel_1d(0.0, 0.0, 0.3, 0.8, 5.0, 6).unwrap();
        assert!((k - 1.0).abs() < 1e-10, "{k}");
    }

    #[test]
    fn robin_kernel_mass_strictly_below_one() {
        let basis = RobinEigenbasis1D::<f64>::new(1.0, 1.0, 40).unwrap();
        for t in [0.05, 0.2, 1.0] {
            let mass = series_kernel_mass(&basis, 0.4, t).unwrap();
            assert!(mass < 1.0 && mass > 0.0, "t={t}: {mass}");
        }
    }

    #[test]
    fn kernel_symmetric_in_its_arguments() {
        let a = series_heat_kernel_1d(1.5, 0.7, 0.2, 0.9, 0.1, 40).unwrap();
        let b = series_heat_kernel_1d(1.5, 0.7, 0.9, 0.2, 0.1, 40).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tail_precondition_enforced() {
        assert!(matches!(
            series_heat_kernel_1d(1.0, 1.0, 0.5, 0.5, 1e-4, 3),
            Err(OracleError::TailTooLarge { .. })
        ));
        assert!(matches!(
            series_heat_kernel_1d(1.0, 1.0, 0.5, 0.5, 0.0, 10),
            Err(OracleError::BadTime(_))
        ));
    }

    fn fd_problem(theta: f64) -> RobinProblem<f64> {
        RobinProblem::new(
            build_interval_mesh(0.0, 1.0, 8).unwrap(),
            CoefficientField::laplace(1, 1),
            RobinOperator::constant(theta, 1),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn fd_constant_neumann_data_is_preserved() {
        let p = fd_problem(0.0);
        let grid = TimeGrid::new(0.0, 0.3, 12, Scheme::ImplicitEuler).unwrap();
        let traj = dense_reference_solve(&p, &|_| 2.0, 64, grid).unwrap();
        for s in &traj.snapshots {
            for i in 0..s.len() {
                assert!((s[i] - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fd_eigenmode_decay_matches_series_eigenvalue() {
        let p = fd_problem(1.0);
        let basis = RobinEigenbasis1D::<f64>::new(1.0, 1.0, 1).unwrap();
        let mu1 = basis.eigenvalue(0);
        let grid = TimeGrid::new(0.0, 0.02, 2000, Scheme::ImplicitEuler).unwrap();
        let traj = dense_reference_solve(&p, &|x| basis.eval(0, x), 2048, grid).unwrap();
        let rate = crate::parabolic::decay_rate(&traj).unwrap();
        assert!(
            (rate - mu1).abs() <= 1e-4 * mu1,
            "fd decay {rate} vs series eigenvalue {mu1}"
        );
    }

    #[test]
    fn fd_mass_strictly_decreasing_under_robin_damping() {
        let p = fd_problem(1.0);
        let grid = TimeGrid::new(0.0, 0.1, 50, Scheme::ImplicitEuler).unwrap();
        let traj = dense_reference_solve(&p, &|_| 1.0, 512, grid).unwrap();
        let h = 1.0 / 512.0;
        let mut prev = f64::INFINITY;
        for s in &traj.snapshots {
            let mut total = 0.0;
            for i in 0..s.len() {
                let w = if i == 0 || i == 512 { h / 2.0 } else { h };
                total += w * s[i];
            }
            assert!(total < prev);
            prev = total;
        }
    }
}
