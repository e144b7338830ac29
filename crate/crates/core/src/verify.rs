//! Quantitative verification: fit Gaussian envelopes, power/log bounds,
//! duality symmetry, local boundedness and decay against sampled kernel data.

use crate::assembly::NodalField;
use crate::green::{adjoint_green_eval, green_eval, GreenError, KernelMatrixSample};
use crate::mesh::Mesh;
use crate::parabolic::{Scheme, Trajectory};
use crate::problem::RobinProblem;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("sample with t <= s present; causality filter rejects the set")]
    CausalityViolated,
    #[error("need at least {need} usable samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("all samples sit at one abscissa; the fit is degenerate")]
    DegenerateAbscissa,
    #[error("slack must be >= 1")]
    BadSlack,
    #[error("distance ladder spans only {0} dyadic levels (need 4)")]
    LadderTooShort(usize),
    #[error("time slab (b - R^2, b] leaves the trajectory window")]
    SlabOutsideWindow,
    #[error("empty pair list")]
    NoPairs,
    #[error(transparent)]
    Green(#[from] GreenError),
}

#[derive(Debug, Clone)]
pub struct GaussianFit<T> {
    pub c: T,
    pub kappa: T,
    pub r_squared: T,
    pub violations: usize,
    pub slack: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    OffdiagPower,
    EllipticLog,
    EllipticPower,
    Boundedness,
    LocalBound,
    Symmetry,
}

#[derive(Debug, Clone)]
pub struct BoundReport<T> {
    pub kind: BoundKind,
    pub constant: T,
    pub target_exponent: T,
    pub fitted_exponent: T,
    pub pass: bool,
    pub n_samples: usize,
    pub excluded: usize,
}

fn sample_magnitude<T: Real>(s: &KernelMatrixSample<T>) -> T {
    s.value.amax()
}

fn euclid<T: Real>(a: &[T; 2], b: &[T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Least squares of y against x; pairs are sorted first so the result does
/// not depend on input order.
fn linfit<T: Real>(pairs: &mut Vec<(T, T)>) -> Result<(T, T, T), VerifyError> {
    pairs.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    let n = T::of_usize(pairs.len());
    let mx = pairs.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pairs.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for &(x, y) in pairs.iter() {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == T::zero() {
        return Err(VerifyError::DegenerateAbscissa);
    }
    let slope = sxy / sxx;
    let ss_res = syy - slope * sxy;
    let r2 = if syy > T::zero() { T::one() - ss_res / syy } else { T::one() };
    Ok((slope, my - slope * mx, r2))
}

/// Fit `|G| <= C min(sqrt(t-s), diam)^{-n} exp(-kappa |x-y|^2 / (t-s))` by
/// log-linear regression, then inflate C minimally so no sample exceeds the
/// envelope by more than `slack`.
pub fn fit_gaussian_bound<T: Real>(
    samples: &[KernelMatrixSample<T>],
    n: usize,
    diam: T,
    slack: T,
) -> Result<GaussianFit<T>, VerifyError> {
    if !(slack >= T::one()) {
        return Err(VerifyError::BadSlack);
    }
    if samples.iter().any(|s| s.t <= s.s) {
        return Err(VerifyError::CausalityViolated);
    }
    let mut pairs: Vec<(T, T)> = Vec::new();
    for s in samples {
        let v = sample_magnitude(s);
        if !(v > T::zero()) {
            continue;
        }
        let tau = s.t - s.s;
        let xi = {
            let d = euclid(&s.x, &s.y);
            d * d / tau
        };
        let scale = tau.sqrt().min(diam).powi(n as i32);
        pairs.push((xi, (v * scale).ln()));
    }
    if pairs.len() < 8 {
        return Err(VerifyError::TooFewSamples { need: 8, got: pairs.len() });
    }
    let (slope, intercept, r_squared) = linfit(&mut pairs)?;
    let kappa = -slope;
    let mut c = intercept.exp();
    // minimal inflation: envelope must dominate every sample up to slack
    let mut factor = T::one();
    for &(xi, ly) in pairs.iter() {
        let env = (c * slack) * (-(kappa * xi)).exp();
        let needed = ly.exp() / env;
        if needed > factor {
            factor = needed;
        }
    }
    c *= factor;
    let violations = pairs
        .iter()
        .filter(|&&(xi, ly)| ly.exp() > (c * slack) * (-(kappa * xi)).exp() * (T::one() + T::of(1e-13)))
        .count();
    Ok(GaussianFit { c, kappa, r_squared, violations, slack })
}

fn dyadic_levels<T: Real>(ds: impl Iterator<Item = T>) -> usize {
    let mut levels: Vec<i64> = ds
        .map(|d| d.as_f64().log2().floor() as i64)
        .collect();
    levels.sort_unstable();
    levels.dedup();
    levels.len()
}

/// Fit `|G| ~ C d_P^{-p}` over samples on a dyadic ladder of parabolic
/// distances; samples violating `4h <= d_P <= dist(Y, boundary)/2` are
/// excluded and counted.
pub fn check_offdiagonal_decay<T: Real>(
    samples: &[KernelMatrixSample<T>],
    n: usize,
    h: T,
    dist_to_boundary: &dyn Fn(&KernelMatrixSample<T>) -> T,
) -> Result<BoundReport<T>, VerifyError> {
    let mut pairs: Vec<(T, T)> = Vec::new();
    let mut excluded = 0usize;
    for s in samples {
        let d_p = euclid(&s.x, &s.y).max((s.t - s.s).abs().sqrt());
        if d_p < T::of(4.0) * h || d_p > dist_to_boundary(s) * T::of(0.5) {
            excluded += 1;
            continue;
        }
        let v = sample_magnitude(s);
        if !(v > T::zero()) {
            excluded += 1;
            continue;
        }
        pairs.push((d_p.ln(), v.ln()));
    }
    let levels = dyadic_levels(pairs.iter().map(|p| p.0.exp()));
    if levels < 4 {
        return Err(VerifyError::LadderTooShort(levels));
    }
    let n_samples = pairs.len();
    let (slope, intercept, _r2) = linfit(&mut pairs)?;
    let p = -slope;
    let c = intercept.exp();
    let slack = T::of(2.0);
    let envelope_ok = pairs.iter().all(|&(lx, ly)| {
        ly.exp() <= slack * c * (-(p * lx)).exp() * (T::one() + T::of(1e-13))
    });
    let target = T::of_usize(n);
    Ok(BoundReport {
        kind: BoundKind::OffdiagPower,
        constant: c,
        target_exponent: target,
        fitted_exponent: p,
        pass: p >= target - T::of(0.3) && envelope_ok,
        n_samples,
        excluded,
    })
}

/// Maximum relative duality defect over point pairs:
/// `max ‖G(X,Y) - G*(Y,X)^T‖ / ‖G(X,Y)‖`.
pub fn symmetry_error<T: Real>(
    problem: &RobinProblem<T>,
    pairs: &[(crate::mesh::SpaceTimePoint<T>, crate::mesh::SpaceTimePoint<T>)],
    steps: usize,
    scheme: Scheme,
) -> Result<T, VerifyError> {
    if pairs.is_empty() {
        return Err(VerifyError::NoPairs);
    }
    if pairs.iter().any(|(a, b)| a.t == b.t) {
        return Err(VerifyError::CausalityViolated);
    }
    let mut worst = T::zero();
    for (xp, yp) in pairs {
        let g = green_eval(problem, xp.x, xp.t, yp.x, yp.t, steps, scheme)?;
        let gs = adjoint_green_eval(problem, yp.x, yp.t, xp.x, xp.t, steps, scheme)?;
        let denom = g.value.amax();
        if denom == T::zero() {
            continue;
        }
        let err = (&g.value - gs.value.transpose()).amax() / denom;
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

/// Duality check: Crank–Nicolson must sit at solver tolerance; implicit Euler
/// must be below 5e-2 on the base problem and strictly improve on the
/// refined one (pass `None` to skip the refinement clause).
pub fn check_symmetry<T: Real>(
    problem: &RobinProblem<T>,
    refined: Option<(&RobinProblem<T>, usize)>,
    pairs: &[(crate::mesh::SpaceTimePoint<T>, crate::mesh::SpaceTimePoint<T>)],
    steps: usize,
    scheme: Scheme,
) -> Result<BoundReport<T>, VerifyError> {
    let base = symmetry_error(problem, pairs, steps, scheme)?;
    let pass = match scheme {
        Scheme::CrankNicolson => base <= T::of(1e-8),
        Scheme::ImplicitEuler => {
            let mut ok = base <= T::of(5e-2);
            if let Some((fine, fine_steps)) = refined {
                let fine_err = symmetry_error(fine, pairs, fine_steps, scheme)?;
                ok = ok && fine_err < base;
            }
            ok
        }
    };
    Ok(BoundReport {
        kind: BoundKind::Symmetry,
        constant: base,
        target_exponent: T::zero(),
        fitted_exponent: T::zero(),
        pass,
        n_samples: pairs.len(),
        excluded: 0,
    })
}

/// Elliptic pointwise bound. In 2D, fits `|G|` against `1 + ln(diam/r)` over
/// vertices at `r >= 4h` and reports the envelope constant (slack 2). In 1D
/// the kind downgrades to plain boundedness.
pub fn check_elliptic_bounds<T: Real>(
    g: &NodalField<T>,
    mesh: &Mesh<T>,
    y: usize,
    diam: T,
) -> Result<BoundReport<T>, VerifyError> {
    let yx = mesh.vertices[y];
    if mesh.dimension == 1 {
        let mut sup = T::zero();
        for v in 0..mesh.n_vertices() {
            for c in 0..g.m {
                sup = sup.max(g.coefficients[c * g.n_vertices + v].abs());
            }
        }
        return Ok(BoundReport {
            kind: BoundKind::Boundedness,
            constant: sup,
            target_exponent: T::zero(),
            fitted_exponent: T::zero(),
            pass: sup.is_finite(),
            n_samples: mesh.n_vertices(),
            excluded: 0,
        });
    }
    let h = mesh.mesh_size();
    let mut pairs: Vec<(T, T)> = Vec::new();
    let mut excluded = 0usize;
    for v in 0..mesh.n_vertices() {
        let r = euclid(&mesh.vertices[v], &yx);
        if r < T::of(4.0) * h {
            excluded += 1;
            continue;
        }
        let mut mag = T::zero();
        for c in 0..g.m {
            mag = mag.max(g.coefficients[c * g.n_vertices + v].abs());
        }
        pairs.push((T::one() + (diam / r).ln(), mag));
    }
    if pairs.len() < 8 {
        return Err(VerifyError::TooFewSamples { need: 8, got: pairs.len() });
    }
    let n_samples = pairs.len();
    // envelope constant: smallest C with |G| <= 2 C (1 + ln(diam/r))
    let slack = T::of(2.0);
    let mut c_env = T::zero();
    for &(z, v) in pairs.iter() {
        c_env = c_env.max(v / (slack * z));
    }
    let (slope, _intercept, _r2) = linfit(&mut pairs)?;
    Ok(BoundReport {
        kind: BoundKind::EllipticLog,
        constant: c_env,
        target_exponent: T::zero(),
        fitted_exponent: slope,
        pass: c_env.is_finite(),
        n_samples,
        excluded,
    })
}

/// Local boundedness ratio: sup over the half cylinder `Q^-_{R/2}(x0, b)`
/// divided by `R^{-(n+2)/2} ‖u‖_{L²(Ω x (b-R², b))}`. Invariant under
/// positive rescaling of the trajectory.
pub fn check_local_boundedness<T: Real>(
    mesh: &Mesh<T>,
    traj: &Trajectory<T>,
    x0: &[T; 2],
    r: T,
) -> Result<BoundReport<T>, VerifyError> {
    let grid = traj.grid;
    let b = grid.t1;
    if b - r * r < grid.t0 - grid.dt() * T::of(1e-9) {
        return Err(VerifyError::SlabOutsideWindow);
    }
    let half = r * T::of(0.5);
    let nearest = mesh.nearest_vertex(x0);
    let mut sup = T::zero();
    let mut n_samples = 0usize;
    for k in 0..=grid.steps {
        let t = grid.time(k);
        if t <= b - half * half || t > b + grid.dt() * T::of(1e-9) {
            continue;
        }
        for v in 0..mesh.n_vertices() {
            let inside = euclid(&mesh.vertices[v], x0) <= half || v == nearest;
            if !inside {
                continue;
            }
            for c in 0..traj.m {
                sup = sup.max(traj.snapshots[k][c * traj.n_vertices + v].abs());
                n_samples += 1;
            }
        }
    }
    // slab L² norm from the logged ‖u‖²_M values, rectangle rule
    let dt = grid.dt();
    let mut slab = T::zero();
    for k in 1..=grid.steps {
        let t = grid.time(k);
        if t > b - r * r && t <= b + dt * T::of(1e-9) {
            slab += dt * traj.energy_log[k][0];
        }
    }
    let slab_norm = slab.max(T::zero()).sqrt();
    let n = mesh.dimension;
    let weight = r.powf(-(T::of_usize(n + 2)) * T::of(0.5));
    let ratio = if slab_norm > T::zero() { sup / (weight * slab_norm) } else { T::zero() };
    Ok(BoundReport {
        kind: BoundKind::LocalBound,
        constant: ratio,
        target_exponent: T::zero(),
        fitted_exponent: T::zero(),
        pass: ratio.is_finite(),
        n_samples,
        excluded: 0,
    })
}

/// Discrete decay check: `I(t_j) <= I(t_i) exp(-2 theta0 (t_j - t_i)) (1 + tol)`
/// for every grid pair i < j. Returns the flag and the worst margin
/// `I_j / (I_i e^{-2 theta0 dt} (1+tol))`.
pub fn check_decay_vs_theta0<T: Real>(
    traj: &Trajectory<T>,
    theta0: T,
    tol: T,
) -> (bool, T) {
    let grid = traj.grid;
    let mut worst = T::zero();
    for i in 0..=grid.steps {
        let ii = traj.energy_log[i][0];
        for j in (i + 1)..=grid.steps {
            let ij = traj.energy_log[j][0];
            let bound =
                ii * (-(T::of(2.0) * theta0 * (grid.time(j) - grid.time(i)))).exp()
                    * (T::one() + tol);
            let margin = if bound > T::zero() { ij / bound } else if ij > T::zero() { T::of(f64::INFINITY) } else { T::zero() };
            if margin > worst {
                worst = margin;
            }
        }
    }
    (worst <= T::one(), worst)
}
