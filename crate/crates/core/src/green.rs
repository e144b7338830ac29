//! Green's function construction: averaged columns, heat-kernel columns,
//! pointwise kernel evaluation, the elliptic Green's function by time
//! integration, and the representation formula.

use nalgebra::{DMatrix, DVector};

use crate::assembly::solve::{solve, solve_spd, SolveError};
use crate::assembly::{assemble_load, NodalField, SparseMatrix};
use crate::mesh::SpaceTimePoint;
use crate::parabolic::{
    solve_backward_adjoint, solve_forward, LoadFn, ParabolicError, Scheme,
    TimeGrid, Trajectory,
};
use crate::problem::{ProblemError, RobinProblem};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum GreenError {
    #[error("averaging radius {eps} is below the mesh size {h}: the indicator is invisible to quadrature")]
    EpsilonTooSmall { eps: f64, h: f64 },
    #[error("backward cylinder (s - eps^2, s] = ({0}, {1}] leaves the time window")]
    CylinderOutsideWindow(f64, f64),
    #[error("construction requires time-independent coefficients; use green_eval with an explicit source time instead")]
    TimeDependent,
    #[error("kernel evaluation at the diagonal point (x,t) = (y,s)")]
    DiagonalSingularity,
    #[error("elliptic Green's function needs theta0 > 0 (got {0}); the time integral may diverge")]
    Theta0NotPositive(f64),
    #[error("time integration did not reach the truncation criterion within {0} steps")]
    TruncationStalled(usize),
    #[error("representation path implements implicit Euler only")]
    UnsupportedScheme,
    #[error("kernel sample has non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Parabolic(#[from] ParabolicError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Debug, Clone)]
pub struct GreenColumn<T: Real> {
    pub source: SpaceTimePoint<T>,
    pub source_vertex: usize,
    /// Component index of the delta load.
    pub column: usize,
    /// Averaging radius; 0 marks a sharp discrete delta.
    pub epsilon: T,
    pub trajectory: Trajectory<T>,
}

#[derive(Debug, Clone)]
pub struct KernelMatrixSample<T: Real> {
    pub x: [T; 2],
    pub y: [T; 2],
    pub t: T,
    pub s: T,
    /// `value[(j,k)]` is component j of the response to a unit delta in
    /// component k.
    pub value: DMatrix<T>,
}

fn euclid<T: Real>(a: &[T; 2], b: &[T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// `M^{-1} e_{(y,k)}`: the L²-dual of point evaluation at vertex y.
pub fn discrete_delta<T: Real>(
    problem: &RobinProblem<T>,
    y: usize,
    k: usize,
) -> Result<NodalField<T>, GreenError> {
    let nv = problem.mesh.n_vertices();
    let mut e = DVector::zeros(problem.n_dofs());
    e[NodalField::<T>::dof(k, y, nv)] = T::one();
    let mass = problem.mass();
    let psi0 = solve_spd(&mass, &e, T::of(1e-13))?;
    Ok(NodalField::from_vector(problem.m(), nv, psi0))
}

/// Forward solve with the normalized indicator of the backward cylinder
/// `B_eps(y) x (s - eps^2, s]` as the k-component load.
pub fn averaged_green<T: Real>(
    problem: &RobinProblem<T>,
    source: SpaceTimePoint<T>,
    epsilon: T,
    k: usize,
    grid: TimeGrid<T>,
) -> Result<GreenColumn<T>, GreenError> {
    let h = problem.mesh.mesh_size();
    if !(epsilon >= h) {
        return Err(GreenError::EpsilonTooSmall { eps: epsilon.as_f64(), h: h.as_f64() });
    }
    let s_lo = source.t - epsilon * epsilon;
    let window_tol = grid.dt() * T::of(1e-9);
    if s_lo < grid.t0 - window_tol || source.t > grid.t1 + window_tol {
        return Err(GreenError::CylinderOutsideWindow(s_lo.as_f64(), source.t.as_f64()));
    }
    // spatial quadrature mass of the indicator, with the same rule the load
    // assembly uses
    let mut spatial = T::zero();
    for c in 0..problem.mesh.cells.len() {
        for q in crate::quadrature::cell_quadrature(&problem.mesh, c) {
            if euclid(&q.x, &source.x) <= epsilon {
                spatial += q.weight;
            }
        }
    }
    if !(spatial > T::zero()) {
        return Err(GreenError::EpsilonTooSmall { eps: epsilon.as_f64(), h: h.as_f64() });
    }
    // time weight of each grid level under the scheme's load sampling
    let dt = grid.dt();
    let active = |t: T| t > s_lo && t <= source.t + dt * T::of(1e-12);
    let mut time_mass = T::zero();
    for j in 0..grid.steps {
        match grid.scheme {
            Scheme::ImplicitEuler => {
                if active(grid.time(j + 1)) {
                    time_mass += dt;
                }
            }
            Scheme::CrankNicolson => {
                let half = dt * T::of(0.5);
                if active(grid.time(j)) {
                    time_mass += half;
                }
                if active(grid.time(j + 1)) {
                    time_mass += half;
                }
            }
        }
    }
    if time_mass == T::zero() {
        return Err(GreenError::CylinderOutsideWindow(s_lo.as_f64(), source.t.as_f64()));
    }
    let scale = T::one() / (spatial * time_mass);
    let m = problem.m();
    let sx = source.x;
    let load = move |x: &[T; 2], t: T| -> DVector<T> {
        let mut v = DVector::zeros(m);
        if active(t) && euclid(x, &sx) <= epsilon {
            v[k] = scale;
        }
        v
    };
    let psi0 = NodalField::zeros(m, problem.mesh.n_vertices());
    let trajectory = solve_forward(problem, &psi0, Some(&load), grid)?;
    Ok(GreenColumn {
        source,
        source_vertex: problem.mesh.nearest_vertex(&source.x),
        column: k,
        epsilon,
        trajectory,
    })
}

/// Total space-time quadrature mass of a column's load normalization; 1 by
/// construction for averaged columns.
pub fn averaged_load_mass<T: Real>(
    problem: &RobinProblem<T>,
    column: &GreenColumn<T>,
) -> T {
    let grid = column.trajectory.grid;
    let dt = grid.dt();
    let eps = column.epsilon;
    let s_lo = column.source.t - eps * eps;
    let mut spatial = T::zero();
    for c in 0..problem.mesh.cells.len() {
        for q in crate::quadrature::cell_quadrature(&problem.mesh, c) {
            if euclid(&q.x, &column.source.x) <= eps {
                spatial += q.weight;
            }
        }
    }
    let active = |t: T| t > s_lo && t <= column.source.t + dt * T::of(1e-12);
    let mut time_mass = T::zero();
    for j in 0..grid.steps {
        match grid.scheme {
            Scheme::ImplicitEuler => {
                if active(grid.time(j + 1)) {
                    time_mass += dt;
                }
            }
            Scheme::CrankNicolson => {
                let half = dt * T::of(0.5);
                if active(grid.time(j)) {
                    time_mass += half;
                }
                if active(grid.time(j + 1)) {
                    time_mass += half;
                }
            }
        }
    }
    let scale = T::one() / (spatial * time_mass);
    scale * spatial * time_mass
}

/// Heat-kernel column: forward solve with a sharp discrete delta at vertex y,
/// component k, started at `grid.t0` (the kernel time origin).
pub fn heat_kernel_column<T: Real>(
    problem: &RobinProblem<T>,
    y: usize,
    k: usize,
    grid: TimeGrid<T>,
) -> Result<GreenColumn<T>, GreenError> {
    if !problem.time_independent() {
        return Err(GreenError::TimeDependent);
    }
    let psi0 = discrete_delta(problem, y, k)?;
    let trajectory = solve_forward(problem, &psi0, None, grid)?;
    Ok(GreenColumn {
        source: SpaceTimePoint { x: problem.mesh.vertices[y], t: grid.t0 },
        source_vertex: y,
        column: k,
        epsilon: T::zero(),
        trajectory,
    })
}

/// Pointwise kernel sample: m delta columns started at (y, s), interpolated
/// at (x, t). Exactly zero for t <= s (causality; off-diagonal at t = s).
pub fn green_eval<T: Real>(
    problem: &RobinProblem<T>,
    x: [T; 2],
    t: T,
    y: [T; 2],
    s: T,
    steps: usize,
    scheme: Scheme,
) -> Result<KernelMatrixSample<T>, GreenError> {
    let m = problem.m();
    if t == s && x == y {
        return Err(GreenError::DiagonalSingularity);
    }
    if t <= s {
        return Ok(KernelMatrixSample { x, y, t, s, value: DMatrix::zeros(m, m) });
    }
    let grid = TimeGrid::new(s, t, steps, scheme)?;
    let yv = problem.mesh.nearest_vertex(&y);
    let mut value = DMatrix::zeros(m, m);
    for k in 0..m {
        let psi0 = discrete_delta(problem, yv, k)?;
        let traj = solve_forward(problem, &psi0, None, grid)?;
        let field = traj.snapshot_field(steps);
        for j in 0..m {
            value[(j, k)] = field.eval(&problem.mesh, j, &x).unwrap_or(T::zero());
        }
    }
    if value.iter().any(|v| !v.is_finite()) {
        return Err(GreenError::NonFinite);
    }
    Ok(KernelMatrixSample { x, y, t, s, value })
}

/// Kernel of the adjoint (backward) problem: delta columns placed at (x, t)
/// and marched backward to s, interpolated at y. Zero for s >= t.
pub fn adjoint_green_eval<T: Real>(
    problem: &RobinProblem<T>,
    y: [T; 2],
    s: T,
    x: [T; 2],
    t: T,
    steps: usize,
    scheme: Scheme,
) -> Result<KernelMatrixSample<T>, GreenError> {
    let m = problem.m();
    if t == s && x == y {
        return Err(GreenError::DiagonalSingularity);
    }
    if s >= t {
        return Ok(KernelMatrixSample { x: y, y: x, t: s, s: t, value: DMatrix::zeros(m, m) });
    }
    let grid = TimeGrid::new(s, t, steps, scheme)?;
    let xv = problem.mesh.nearest_vertex(&x);
    let mut value = DMatrix::zeros(m, m);
    for k in 0..m {
        let psi_t = discrete_delta(problem, xv, k)?;
        let traj = solve_backward_adjoint(problem, &psi_t, None, grid)?;
        let field = traj.snapshot_field(0);
        for j in 0..m {
            value[(j, k)] = field.eval(&problem.mesh, j, &y).unwrap_or(T::zero());
        }
    }
    if value.iter().any(|v| !v.is_finite()) {
        return Err(GreenError::NonFinite);
    }
    Ok(KernelMatrixSample { x: y, y: x, t: s, s: t, value })
}

/// Elliptic Green's function `G(., y) = ∫₀^∞ K(., y, t) dt`: heat-kernel
/// columns integrated in time on a geometrically growing grid (dt doubles
/// every 16 steps from dt0 = (h/2)²), truncated once the certified decay rate
/// bounds the tail below `tol` relative to the accumulated integral.
///
/// The quadrature is the right-endpoint rectangle rule, which telescopes
/// exactly through each implicit-Euler step (`dt u_k` equals the exact
/// integral of the discrete decay over the step, for any dt sequence); a
/// trapezoidal rule on this grid would overshoot by a mesh-independent few
/// percent because dt grows proportionally to t.
/// Returns one m-component nodal field per source column k.
pub fn elliptic_green<T: Real>(
    problem: &RobinProblem<T>,
    y: usize,
    theta0: T,
    tol: T,
) -> Result<Vec<NodalField<T>>, GreenError> {
    if !problem.time_independent() {
        return Err(GreenError::TimeDependent);
    }
    if !(theta0 > T::zero()) {
        return Err(GreenError::Theta0NotPositive(theta0.as_f64()));
    }
    let mass = problem.mass();
    let system = problem.system(T::zero())?;
    let h = problem.mesh.mesh_size();
    let cap = 200_000usize;
    let nv = problem.mesh.n_vertices();
    let mut columns = Vec::with_capacity(problem.m());
    for k in 0..problem.m() {
        let mut u = discrete_delta(problem, y, k)?.coefficients;
        let mut g = DVector::zeros(problem.n_dofs());
        let mut dt = (h * T::of(0.5)) * (h * T::of(0.5));
        let mut stepper =
            SparseMatrix::linear_combination(&[(T::one(), &mass), (dt, &system)]);
        let mut done = false;
        let mut count = 0usize;
        while count < cap {
            count += 1;
            let rhs = mass.matvec(&u);
            let u_new = solve(&stepper, &rhs, T::of(1e-12))?;
            g.axpy(dt, &u_new, T::one());
            u = u_new;
            if count % 16 == 0 {
                dt *= T::of(2.0);
                stepper =
                    SparseMatrix::linear_combination(&[(T::one(), &mass), (dt, &system)]);
            }
            let unorm = u.dot(&mass.matvec(&u)).max(T::zero()).sqrt();
            let gnorm = g.dot(&mass.matvec(&g)).max(T::zero()).sqrt();
            if gnorm > T::zero() && unorm / theta0 <= tol * gnorm {
                done = true;
                break;
            }
        }
        if !done {
            return Err(GreenError::TruncationStalled(cap));
        }
        columns.push(NodalField::from_vector(problem.m(), nv, g));
    }
    Ok(columns)
}

/// Independent steady-state oracle: `(K + B) g = e_{(y,k)}`, one column per k.
pub fn steady_green<T: Real>(
    problem: &RobinProblem<T>,
    y: usize,
) -> Result<Vec<NodalField<T>>, GreenError> {
    let system = problem.system(T::zero())?;
    let nv = problem.mesh.n_vertices();
    let mut columns = Vec::with_capacity(problem.m());
    for k in 0..problem.m() {
        let mut e = DVector::zeros(problem.n_dofs());
        e[NodalField::<T>::dof(k, y, nv)] = T::one();
        let g = solve(&system, &e, T::of(1e-12))?;
        columns.push(NodalField::from_vector(problem.m(), nv, g));
    }
    Ok(columns)
}

/// Representation formula: the solution with load f rebuilt by superposing
/// per-dof impulse responses (implicit Euler, time-independent data). A
/// different code path from `solve_forward`, used as a mutual check.
pub fn represent_solution<T: Real>(
    problem: &RobinProblem<T>,
    f: &LoadFn<T>,
    grid: TimeGrid<T>,
) -> Result<Trajectory<T>, GreenError> {
    if grid.scheme != Scheme::ImplicitEuler {
        return Err(GreenError::UnsupportedScheme);
    }
    if !problem.time_independent() {
        return Err(GreenError::TimeDependent);
    }
    let n = problem.n_dofs();
    let dt = grid.dt();
    let mass = problem.mass();
    let k_unit = problem.k_unit();
    let robin = problem.robin(T::zero())?;
    let system = problem.system(T::zero())?;
    let stepper = SparseMatrix::linear_combination(&[(T::one(), &mass), (dt, &system)]);
    // impulse[v][r] = E^r (M + dt C)^{-1} e_v: response r steps after a unit
    // load at dof v
    let mut impulse: Vec<Vec<DVector<T>>> = Vec::with_capacity(n);
    for v in 0..n {
        let mut e = DVector::zeros(n);
        e[v] = T::one();
        let mut z = solve(&stepper, &e, T::of(1e-12))?;
        let mut responses = Vec::with_capacity(grid.steps);
        responses.push(z.clone());
        for _ in 1..grid.steps {
            z = solve(&stepper, &mass.matvec(&z), T::of(1e-12))?;
            responses.push(z.clone());
        }
        impulse.push(responses);
    }
    let loads: Vec<DVector<T>> =
        (1..=grid.steps).map(|i| assemble_load(&problem.mesh, problem.m(), f, grid.time(i))).collect();
    let mut snapshots = vec![DVector::zeros(n)];
    let mut energy_log = vec![[T::zero(); 3]];
    for j in 1..=grid.steps {
        let mut u = DVector::zeros(n);
        for (i, load) in loads.iter().enumerate().take(j) {
            // load applied on step i+1 contributes its (j-i-1)-step response
            for v in 0..n {
                let c = load[v] * dt;
                if c != T::zero() {
                    u.axpy(c, &impulse[v][j - i - 1], T::one());
                }
            }
        }
        energy_log.push([
            u.dot(&mass.matvec(&u)),
            problem.lambda_tilde * u.dot(&k_unit.matvec(&u)),
            u.dot(&robin.matvec(&u)),
        ]);
        snapshots.push(u);
    }
    Ok(Trajectory {
        grid,
        m: problem.m(),
        n_vertices: problem.mesh.n_vertices(),
        snapshots,
        direction: crate::parabolic::Direction::Forward,
        energy_log,
    })
}
