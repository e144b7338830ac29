//! Galerkin time stepping for the forward problem and its backward adjoint,
//! with per-step energy tracking.

use nalgebra::DVector;

use crate::assembly::solve::{solve, SolveError};
use crate::assembly::{assemble_load, NodalField, SparseMatrix};
use crate::problem::{ProblemError, RobinProblem};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, thiserror::Error)]
pub enum ParabolicError {
    #[error("time window must satisfy t0 < t1 (got [{0}, {1}])")]
    BadWindow(f64, f64),
    #[error("steps must be >= 1")]
    NoSteps,
    #[error("initial data has {got} dofs, problem has {want}")]
    DataMismatch { got: usize, want: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("‖u‖²_M underflowed on the fit window at step {0}")]
    Underflow(usize),
    #[error("zero data denominator with a nonzero trajectory")]
    ZeroDenominator,
}

#[derive(Debug, Clone, Copy)]
pub struct TimeGrid<T> {
    pub t0: T,
    pub t1: T,
    pub steps: usize,
    pub scheme: Scheme,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t0: T, t1: T, steps: usize, scheme: Scheme) -> Result<Self, ParabolicError> {
        if !(t0 < t1) {
            return Err(ParabolicError::BadWindow(t0.as_f64(), t1.as_f64()));
        }
        if steps == 0 {
            return Err(ParabolicError::NoSteps);
        }
        Ok(Self { t0, t1, steps, scheme })
    }

    pub fn dt(&self) -> T {
        (self.t1 - self.t0) / T::of_usize(self.steps)
    }

    pub fn time(&self, k: usize) -> T {
        self.t0 + self.dt() * T::of_usize(k)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub grid: TimeGrid<T>,
    pub m: usize,
    pub n_vertices: usize,
    /// snapshots[k] holds the solution at `grid.time(k)`, for both directions.
    pub snapshots: Vec<DVector<T>>,
    pub direction: Direction,
    /// Per snapshot: (‖u‖²_M, λ̃·uᵀK_unit u, uᵀBu).
    pub energy_log: Vec<[T; 3]>,
}

impl<T: Real> Trajectory<T> {
    pub fn snapshot_field(&self, k: usize) -> NodalField<T> {
        NodalField::from_vector(self.m, self.n_vertices, self.snapshots[k].clone())
    }

    pub fn final_state(&self) -> &DVector<T> {
        match self.direction {
            Direction::Forward => self.snapshots.last().unwrap(),
            Direction::Backward => &self.snapshots[0],
        }
    }
}

pub type LoadFn<'a, T> = dyn Fn(&[T; 2], T) -> DVector<T> + 'a;

const STEP_TOL: f64 = 1e-12;

/// One implicit-Euler step: `(M + dt·C_new) u⁺ = M u + dt F_new`.
pub fn step_implicit_euler<T: Real>(
    mass: &SparseMatrix<T>,
    c_new: &SparseMatrix<T>,
    u: &DVector<T>,
    dt: T,
    f_new: &DVector<T>,
) -> Result<DVector<T>, SolveError> {
    let a = SparseMatrix::linear_combination(&[(T::one(), mass), (dt, c_new)]);
    let rhs = mass.matvec(u) + f_new * dt;
    solve(&a, &rhs, T::of(STEP_TOL))
}

/// One Crank–Nicolson step:
/// `(M + dt/2·C_new) u⁺ = (M − dt/2·C_old) u + dt/2 (F_old + F_new)`.
pub fn step_crank_nicolson<T: Real>(
    mass: &SparseMatrix<T>,
    c_old: &SparseMatrix<T>,
    c_new: &SparseMatrix<T>,
    u: &DVector<T>,
    dt: T,
    f_old: &DVector<T>,
    f_new: &DVector<T>,
) -> Result<DVector<T>, SolveError> {
    let half = dt * T::of(0.5);
    let a = SparseMatrix::linear_combination(&[(T::one(), mass), (half, c_new)]);
    let b = SparseMatrix::linear_combination(&[(T::one(), mass), (-half, c_old)]);
    let rhs = b.matvec(u) + (f_old + f_new) * half;
    solve(&a, &rhs, T::of(STEP_TOL))
}

struct Assemblies<T: Real> {
    mass: SparseMatrix<T>,
    k_unit: SparseMatrix<T>,
    /// `K(t) + B(t)` frozen when the data are time independent.
    fixed_system: Option<SparseMatrix<T>>,
    fixed_robin: Option<SparseMatrix<T>>,
}

impl<T: Real> Assemblies<T> {
    fn build(problem: &RobinProblem<T>) -> Result<Self, ProblemError> {
        let (fixed_system, fixed_robin) = if problem.time_independent() {
            (Some(problem.system(T::zero())?), Some(problem.robin(T::zero())?))
        } else {
            (None, None)
        };
        Ok(Self { mass: problem.mass(), k_unit: problem.k_unit(), fixed_system, fixed_robin })
    }

    fn system(&self, problem: &RobinProblem<T>, t: T) -> Result<SparseMatrix<T>, ProblemError> {
        match &self.fixed_system {
            Some(s) => Ok(s.clone()),
            None => problem.system(t),
        }
    }

    fn robin(&self, problem: &RobinProblem<T>, t: T) -> Result<SparseMatrix<T>, ProblemError> {
        match &self.fixed_robin {
            Some(b) => Ok(b.clone()),
            None => problem.robin(t),
        }
    }

    fn energy(
        &self,
        problem: &RobinProblem<T>,
        u: &DVector<T>,
        t: T,
    ) -> Result<[T; 3], ProblemError> {
        let b = self.robin(problem, t)?;
        Ok([
            u.dot(&self.mass.matvec(u)),
            problem.lambda_tilde * u.dot(&self.k_unit.matvec(u)),
            u.dot(&b.matvec(u)),
        ])
    }
}

fn load_at<T: Real>(
    problem: &RobinProblem<T>,
    f: Option<&LoadFn<T>>,
    t: T,
) -> DVector<T> {
    match f {
        Some(f) => assemble_load(&problem.mesh, problem.m(), f, t),
        None => DVector::zeros(problem.n_dofs()),
    }
}

/// March the forward problem from `psi0` at `grid.t0` to `grid.t1`.
///
/// Time-dependent data are sampled at each step's implicit level: the new
/// time for implicit Euler, both endpoints for Crank–Nicolson.
pub fn solve_forward<T: Real>(
    problem: &RobinProblem<T>,
    psi0: &NodalField<T>,
    f: Option<&LoadFn<T>>,
    grid: TimeGrid<T>,
) -> Result<Trajectory<T>, ParabolicError> {
    let n = problem.n_dofs();
    if psi0.coefficients.len() != n {
        return Err(ParabolicError::DataMismatch { got: psi0.coefficients.len(), want: n });
    }
    let asm = Assemblies::build(problem)?;
    let dt = grid.dt();
    let mut snapshots = Vec::with_capacity(grid.steps + 1);
    let mut energy_log = Vec::with_capacity(grid.steps + 1);
    let mut u = psi0.coefficients.clone();
    energy_log.push(asm.energy(problem, &u, grid.t0)?);
    snapshots.push(u.clone());
    for k in 0..grid.steps {
        let t_old = grid.time(k);
        let t_new = grid.time(k + 1);
        let c_new = asm.system(problem, t_new)?;
        let f_new = load_at(problem, f, t_new);
        u = match grid.scheme {
            Scheme::ImplicitEuler => step_implicit_euler(&asm.mass, &c_new, &u, dt, &f_new)?,
            Scheme::CrankNicolson => {
                let c_old = asm.system(problem, t_old)?;
                let f_old = load_at(problem, f, t_old);
                step_crank_nicolson(&asm.mass, &c_old, &c_new, &u, dt, &f_old, &f_new)?
            }
        };
        energy_log.push(asm.energy(problem, &u, t_new)?);
        snapshots.push(u.clone());
    }
    Ok(Trajectory {
        grid,
        m: problem.m(),
        n_vertices: problem.mesh.n_vertices(),
        snapshots,
        direction: Direction::Forward,
        energy_log,
    })
}

/// March the backward adjoint problem from `psiT` at `grid.t1` down to
/// `grid.t0`, using the transposed coefficient tensor and boundary operator.
/// `snapshots[k]` still holds the state at `grid.time(k)`.
pub fn solve_backward_adjoint<T: Real>(
    problem: &RobinProblem<T>,
    psi_t: &NodalField<T>,
    f: Option<&LoadFn<T>>,
    grid: TimeGrid<T>,
) -> Result<Trajectory<T>, ParabolicError> {
    let adj = problem.adjoint();
    let n = adj.n_dofs();
    if psi_t.coefficients.len() != n {
        return Err(ParabolicError::DataMismatch { got: psi_t.coefficients.len(), want: n });
    }
    let asm = Assemblies::build(&adj)?;
    let dt = grid.dt();
    let mut snapshots = vec![DVector::zeros(n); grid.steps + 1];
    let mut energy_log = vec![[T::zero(); 3]; grid.steps + 1];
    let mut v = psi_t.coefficients.clone();
    energy_log[grid.steps] = asm.energy(&adj, &v, grid.t1)?;
    snapshots[grid.steps] = v.clone();
    for k in (0..grid.steps).rev() {
        // the unknown lives at time(k): that is this step's implicit level
        let t_new = grid.time(k);
        let t_old = grid.time(k + 1);
        let c_new = asm.system(&adj, t_new)?;
        let f_new = load_at(&adj, f, t_new);
        v = match grid.scheme {
            Scheme::ImplicitEuler => step_implicit_euler(&asm.mass, &c_new, &v, dt, &f_new)?,
            Scheme::CrankNicolson => {
                let c_old = asm.system(&adj, t_old)?;
                let f_old = load_at(&adj, f, t_old);
                step_crank_nicolson(&asm.mass, &c_old, &c_new, &v, dt, &f_old, &f_new)?
            }
        };
        energy_log[k] = asm.energy(&adj, &v, t_new)?;
        snapshots[k] = v.clone();
    }
    Ok(Trajectory {
        grid,
        m: adj.m(),
        n_vertices: adj.mesh.n_vertices(),
        snapshots,
        direction: Direction::Backward,
        energy_log,
    })
}

/// `sqrt( max_k ‖u‖²_M + Σ_{k≥1} dt·(λ̃‖Du‖² + ⟨Θu,u⟩) )` from the energy log.
pub fn tri_norm<T: Real>(traj: &Trajectory<T>) -> T {
    let dt = traj.grid.dt();
    let mut peak = T::zero();
    let mut dissip = T::zero();
    for (k, e) in traj.energy_log.iter().enumerate() {
        if e[0] > peak {
            peak = e[0];
        }
        if k >= 1 {
            dissip += dt * (e[1] + e[2]);
        }
    }
    (peak + dissip).max(T::zero()).sqrt()
}

/// Tri-norm over the data norm `‖f‖_{L^{2(n+2)/(n+4)}(Q)} + ‖psi0‖_{L²}`.
pub fn energy_ratio<T: Real>(
    problem: &RobinProblem<T>,
    traj: &Trajectory<T>,
    f: Option<&LoadFn<T>>,
    psi0: &NodalField<T>,
) -> Result<T, ParabolicError> {
    let numer = tri_norm(traj);
    let mass = problem.mass();
    let psi_norm = psi0.coefficients.dot(&mass.matvec(&psi0.coefficients)).max(T::zero()).sqrt();
    let f_norm = match f {
        Some(f) => {
            // ‖f‖_{L^p(Q)} with p = 2(n+2)/(n+4), rectangle rule in time,
            // cell quadrature in space
            let n = problem.mesh.dimension;
            let p = T::of(2.0 * (n as f64 + 2.0) / (n as f64 + 4.0));
            let dt = traj.grid.dt();
            let mut acc = T::zero();
            for k in 1..=traj.grid.steps {
                let t = traj.grid.time(k);
                let mut space = T::zero();
                for c in 0..problem.mesh.cells.len() {
                    for q in crate::quadrature::cell_quadrature(&problem.mesh, c) {
                        let val = f(&q.x, t);
                        space += q.weight * val.norm().powf(p);
                    }
                }
                acc += dt * space;
            }
            acc.powf(T::one() / p)
        }
        None => T::zero(),
    };
    let denom = psi_norm + f_norm;
    if denom == T::zero() {
        if numer <= T::of(1e-14) {
            return Ok(T::zero());
        }
        return Err(ParabolicError::ZeroDenominator);
    }
    Ok(numer / denom)
}

/// Empirical decay exponent: least-squares slope of `log ‖u‖²_M` over the
/// second half of the window, negated and halved.
pub fn decay_rate<T: Real>(traj: &Trajectory<T>) -> Result<T, ParabolicError> {
    let start = traj.grid.steps / 2;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in start..=traj.grid.steps {
        let i = traj.energy_log[k][0];
        if !(i > T::of(1e-290)) {
            return Err(ParabolicError::Underflow(k));
        }
        xs.push(traj.grid.time(k));
        ys.push(i.ln());
    }
    let n = T::of_usize(xs.len());
    let mx = xs.iter().fold(T::zero(), |a, &b| a + b) / n;
    let my = ys.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    Ok(-(sxy / sxx) / T::of(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{CoefficientField, RobinOperator};
    use crate::mesh;

    fn interval_problem(n: usize, theta: f64) -> RobinProblem<f64> {
        let mesh = mesh::build_interval_mesh(0.0, 1.0, n).unwrap();
        RobinProblem::new(
            mesh,
            CoefficientField::laplace(1, 1),
            RobinOperator::constant(theta, 1),
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn zero_data_zero_trajectory() {
        let p = interval_problem(16, 1.0);
        let grid = TimeGrid::new(0.0, 0.1, 10, Scheme::ImplicitEuler).unwrap();
        let psi0 = NodalField::zeros(1, 17);
        let traj = solve_forward(&p, &psi0, None, grid).unwrap();
        for s in &traj.snapshots {
            assert_eq!(s.amax(), 0.0);
        }
        assert_eq!(tri_norm(&traj), 0.0);
        assert_eq!(energy_ratio(&p, &traj, None, &psi0).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_window_rejected() {
        assert!(matches!(
            TimeGrid::new(1.0, 1.0, 4, Scheme::ImplicitEuler),
            Err(ParabolicError::BadWindow(..))
        ));
        assert!(matches!(
            TimeGrid::new(0.0, 1.0, 0, Scheme::ImplicitEuler),
            Err(ParabolicError::NoSteps)
        ));
    }

    #[test]
    fn discrete_energy_identity_implicit_euler() {
        let p = interval_problem(24, 0.7);
        let grid = TimeGrid::new(0.0, 0.05, 20, Scheme::ImplicitEuler).unwrap();
        let psi0 = NodalField::interpolate(&p.mesh, 1, |x| {
            nalgebra::DVector::from_vec(vec![(3.0 * x[0]).sin() + 0.2])
        });
        let f = |x: &[f64; 2], t: f64| nalgebra::DVector::from_vec(vec![x[0] * (1.0 + t)]);
        let traj = solve_forward(&p, &psi0, Some(&f), grid).unwrap();
        let mass = p.mass();
        let dt = grid.dt();
        for k in 0..grid.steps {
            let u0 = &traj.snapshots[k];
            let u1 = &traj.snapshots[k + 1];
            let t1 = grid.time(k + 1);
            let c = p.system(t1).unwrap();
            let fv = crate::assembly::assemble_load(&p.mesh, 1, &f, t1);
            let du = u1 - u0;
            let lhs = u1.dot(&mass.matvec(u1)) - u0.dot(&mass.matvec(u0))
                + du.dot(&mass.matvec(&du))
                + 2.0 * dt * u1.dot(&c.matvec(u1));
            let rhs = 2.0 * dt * fv.dot(u1);
            let scale = u1.dot(&mass.matvec(u1)).abs().max(1e-30);
            assert!((lhs - rhs).abs() <= 1e-10 * scale, "step {k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn constant_mode_conserved_without_robin_damping() {
        // theta = 0 would hit the empty-boundary-operator path; use a Robin
        // operator that is numerically zero instead
        let p = interval_problem(16, 0.0);
        let grid = TimeGrid::new(0.0, 0.2, 8, Scheme::ImplicitEuler).unwrap();
        let psi0 = NodalField::interpolate(&p.mesh, 1, |_| nalgebra::DVector::from_vec(vec![1.0]));
        let traj = solve_forward(&p, &psi0, None, grid).unwrap();
        for s in &traj.snapshots {
            for i in 0..s.len() {
                assert!((s[i] - 1.0).abs() < 1e-10);
            }
        }
        assert!(decay_rate(&traj).unwrap().abs() < 1e-8);
    }

    #[test]
    fn backward_equals_time_reversed_forward_for_self_adjoint_data() {
        let p = interval_problem(20, 1.3);
        let grid = TimeGrid::new(0.0, 0.1, 16, Scheme::ImplicitEuler).unwrap();
        let data = NodalField::interpolate(&p.mesh, 1, |x| {
            nalgebra::DVector::from_vec(vec![x[0] * x[0] - 0.3])
        });
        let fwd = solve_forward(&p, &data, None, grid).unwrap();
        let bwd = solve_backward_adjoint(&p, &data, None, grid).unwrap();
        for k in 0..=grid.steps {
            let diff = (&fwd.snapshots[k] - &bwd.snapshots[grid.steps - k]).amax();
            assert!(diff < 1e-12, "k={k} diff={diff}");
        }
    }

    #[test]
    fn transpose_duality_pairing() {
        let mesh = mesh::build_rectangle_mesh(1.0, 1.0, 8, 8).unwrap();
        let nv = mesh.n_vertices();
        let p = RobinProblem::new(
            mesh,
            CoefficientField::skew2d(0.4),
            RobinOperator::constant(0.8, 1),
            0.5,
        )
        .unwrap();
        for scheme in [Scheme::ImplicitEuler, Scheme::CrankNicolson] {
            let grid = TimeGrid::new(0.0, 0.05, 10, scheme).unwrap();
            let psi0 = NodalField::interpolate(&p.mesh, 1, |x: &[f64; 2]| {
                nalgebra::DVector::from_vec(vec![(x[0] + 2.0 * x[1]).sin()])
            });
            let psi_t = NodalField::interpolate(&p.mesh, 1, |x| {
                nalgebra::DVector::from_vec(vec![x[0] - x[1] * x[1] + 0.5])
            });
            let fwd = solve_forward(&p, &psi0, None, grid).unwrap();
            let bwd = solve_backward_adjoint(&p, &psi_t, None, grid).unwrap();
            let mass = p.mass();
            let lhs: f64 = psi_t.coefficients.dot(&mass.matvec(&fwd.snapshots[grid.steps]));
            let rhs: f64 = bwd.snapshots[0].dot(&mass.matvec(&psi0.coefficients));
            let scale = lhs.abs().max(rhs.abs()).max(1e-30);
            assert!(
                (lhs - rhs).abs() <= 1e-9 * scale,
                "{scheme:?}: {lhs} vs {rhs}, nv={nv}"
            );
        }
    }

    #[test]
    fn causality_of_the_load() {
        let p = interval_problem(12, 1.0);
        let grid = TimeGrid::new(0.0, 0.1, 10, Scheme::ImplicitEuler).unwrap();
        let psi0 = NodalField::interpolate(&p.mesh, 1, |x| {
            nalgebra::DVector::from_vec(vec![x[0]])
        });
        let f_a = |x: &[f64; 2], t: f64| {
            nalgebra::DVector::from_vec(vec![if t <= 0.05 { x[0] } else { 1.0 }])
        };
        let f_b = |x: &[f64; 2], t: f64| {
            nalgebra::DVector::from_vec(vec![if t <= 0.05 { x[0] } else { -7.0 }])
        };
        let ta = solve_forward(&p, &psi0, Some(&f_a), grid).unwrap();
        let tb = solve_forward(&p, &psi0, Some(&f_b), grid).unwrap();
        for k in 0..=5 {
            assert_eq!(ta.snapshots[k], tb.snapshots[k], "snapshot {k} must be bit-identical");
        }
        assert_ne!(ta.snapshots[6], tb.snapshots[6]);
    }

    #[test]
    fn lumped_implicit_euler_preserves_nonnegativity() {
        let p = interval_problem(32, 2.0).with_lumped_mass();
        let grid = TimeGrid::new(0.0, 0.3, 30, Scheme::ImplicitEuler).unwrap();
        let psi0 = NodalField::interpolate(&p.mesh, 1, |x| {
            nalgebra::DVector::from_vec(vec![if (x[0] - 0.5).abs() < 0.1 { 1.0 } else { 0.0 }])
        });
        let traj = solve_forward(&p, &psi0, None, grid).unwrap();
        for (k, s) in traj.snapshots.iter().enumerate() {
            for i in 0..s.len() {
                assert!(s[i] >= -1e-13, "negative value {} at step {k}", s[i]);
            }
        }
        // Robin damping: total lumped mass strictly decreasing
        let lumped = p.mass().diagonal();
        let mut prev = f64::INFINITY;
        for s in &traj.snapshots {
            let total = lumped.dot(s);
            assert!(total < prev || prev == f64::INFINITY);
            prev = total;
        }
    }

    #[test]
    fn tri_norm_of_constant_in_time_field() {
        // u ≡ w held fixed: tri² = ‖w‖²_M + T·(λ̃‖Dw‖² + ⟨Θw,w⟩)
        let p = interval_problem(16, 1.0);
        let grid = TimeGrid::new(0.0, 0.5, 5, Scheme::ImplicitEuler).unwrap();
        let w = NodalField::interpolate(&p.mesh, 1, |x| {
            nalgebra::DVector::from_vec(vec![2.0 * x[0] + 1.0])
        });
        let mass = p.mass();
        let k_unit = p.k_unit();
        let b = p.robin(0.0).unwrap();
        let e = [
            w.coefficients.dot(&mass.matvec(&w.coefficients)),
            p.lambda_tilde * w.coefficients.dot(&k_unit.matvec(&w.coefficients)),
            w.coefficients.dot(&b.matvec(&w.coefficients)),
        ];
        let traj = Trajectory {
            grid,
            m: 1,
            n_vertices: 17,
            snapshots: vec![w.coefficients.clone(); 6],
            direction: Direction::Forward,
            energy_log: vec![e; 6],
        };
        let expect = (e[0] + 0.5 * (e[1] + e[2])).sqrt();
        assert!((tri_norm(&traj) - expect).abs() < 1e-14);
    }

    #[test]
    fn repeated_steps_are_deterministic() {
        let p = interval_problem(16, 1.0);
        let psi0 = NodalField::interpolate(&p.mesh, 1, |x| {
            nalgebra::DVector::from_vec(vec![(x[0] * 7.0).cos()])
        });
        let grid = TimeGrid::new(0.0, 0.1, 10, Scheme::CrankNicolson).unwrap();
        let a = solve_forward(&p, &psi0, None, grid).unwrap();
        let b = solve_forward(&p, &psi0, None, grid).unwrap();
        for k in 0..=grid.steps {
            assert_eq!(a.snapshots[k], b.snapshots[k]);
        }
    }
}
