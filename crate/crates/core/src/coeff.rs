//! Operator data: the coefficient tensor `A^{ab}(x,t)` and the Robin boundary
//! operator, with sampled validation of the structural hypotheses on them.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mesh::Mesh;
use crate::quadrature::{boundary_quadrature, cell_quadrature};
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum CoeffError {
    #[error("evaluator returned a non-finite value at x = {0:?}, t = {1}")]
    NonFinite([f64; 2], f64),
    #[error("mesh has no boundary facets")]
    EmptyBoundary,
    #[error("dir_samples must be at least 1")]
    NoDirections,
}

type TensorFn<T> = Arc<dyn Fn(&[T; 2], T) -> DMatrix<T> + Send + Sync>;
type BoundaryMatrixFn<T> = Arc<dyn Fn(&[T; 2], T) -> DMatrix<T> + Send + Sync>;
type BoundaryProfileFn<T> = Arc<dyn Fn(&[T; 2]) -> DVector<T> + Send + Sync>;

/// The tensor `A^{ab}_{ij}(x, t)` stored as one `mn x mn` matrix per point:
/// entry `(a*m + i, b*m + j)` holds `a^{ab}_{ij}`.
#[derive(Clone)]
pub struct CoefficientField<T: Real> {
    pub m: usize,
    pub n: usize,
    /// Claimed ellipticity constant in `(0, 1]`.
    pub lambda: T,
    pub time_independent: bool,
    eval: TensorFn<T>,
}

impl<T: Real> CoefficientField<T> {
    pub fn from_fn(
        m: usize,
        n: usize,
        lambda: T,
        time_independent: bool,
        eval: impl Fn(&[T; 2], T) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self { m, n, lambda, time_independent, eval: Arc::new(eval) }
    }

    /// Full `mn x mn` tensor at a point.
    pub fn tensor(&self, x: &[T; 2], t: T) -> DMatrix<T> {
        (self.eval)(x, t)
    }

    /// The `m x m` block `A^{ab}(x, t)`.
    pub fn block(&self, x: &[T; 2], t: T, a: usize, b: usize) -> DMatrix<T> {
        let full = self.tensor(x, t);
        full.view((a * self.m, b * self.m), (self.m, self.m)).into_owned()
    }

    /// Coefficients of the adjoint operator: `(A*)^{ab} = (A^{ba})^T`, i.e.
    /// the transpose of the full tensor.
    pub fn adjoint(&self) -> Self {
        let eval = self.eval.clone();
        Self {
            m: self.m,
            n: self.n,
            lambda: self.lambda,
            time_independent: self.time_independent,
            eval: Arc::new(move |x, t| eval(x, t).transpose()),
        }
    }

    /// Identity tensor (the Laplacian) for `m` components in dimension `n`.
    pub fn laplace(m: usize, n: usize) -> Self {
        Self::from_fn(m, n, T::one(), true, move |_, _| DMatrix::identity(m * n, m * n))
    }

    /// Scalar anisotropic tensor `diag(a, b)` in 2D; claimed lambda is
    /// `min(a, b, 1/max(a,b))`.
    pub fn diag2(a: T, b: T) -> Self {
        let lo = a.min(b).min(T::one() / a.max(b));
        Self::from_fn(1, 2, lo, true, move |_, _| DMatrix::from_diagonal(&DVector::from_vec(vec![a, b])))
    }

    /// Two-component system: `A^{aa} = I` with skew coupling `eps` between the
    /// components. The skew part drops from the quadratic form, so lambda = 1.
    pub fn system2_skew(eps: T, n: usize) -> Self {
        let m = 2;
        Self::from_fn(m, n, T::one(), true, move |_, _| {
            let mut full = DMatrix::identity(m * n, m * n);
            for a in 0..n {
                full[(a * m, a * m + 1)] = eps;
                full[(a * m + 1, a * m)] = -eps;
            }
            full
        })
    }

    /// Scalar checkerboard coefficient alternating between `a` and `b` on a
    /// 1/4-spaced grid.
    pub fn checkerboard(a: T, b: T, n: usize) -> Self {
        let lo = a.min(b).min(T::one() / a.max(b));
        Self::from_fn(1, n, lo, true, move |x, _| {
            let cell = |v: T| (v * T::of(4.0)).floor().as_f64() as i64;
            let parity = if n == 1 { cell(x[0]) } else { cell(x[0]) + cell(x[1]) };
            let v = if parity.rem_euclid(2) == 0 { a } else { b };
            DMatrix::identity(n, n) * v
        })
    }

    /// Scalar 2D tensor `[[1, eps], [-eps, 1]]`: nonsymmetric in the spatial
    /// indices, drift-free, lambda = 1.
    pub fn skew2d(eps: T) -> Self {
        Self::from_fn(1, 2, T::one(), true, move |_, _| {
            DMatrix::from_row_slice(2, 2, &[T::one(), eps, -eps, T::one()])
        })
    }

    /// Time-modulated variant of [`CoefficientField::skew2d`]: the skew part
    /// is `eps * (1 + t/2)`.
    pub fn skew2d_timedep(eps: T) -> Self {
        Self::from_fn(1, 2, T::one(), false, move |_, t| {
            let e = eps * (T::one() + t * T::of(0.5));
            DMatrix::from_row_slice(2, 2, &[T::one(), e, -e, T::one()])
        })
    }
}

/// Boundary operator: pointwise matrix multiplier or finite-rank nonlocal form
/// `<Theta u, v> = sum_{k,l} c_kl (int phi_k . u dS)(int psi_l . v dS)`.
#[derive(Clone)]
pub enum RobinKind<T: Real> {
    Multiplier(BoundaryMatrixFn<T>),
    FiniteRank {
        phi: Vec<BoundaryProfileFn<T>>,
        psi: Vec<BoundaryProfileFn<T>>,
        coupling: DMatrix<T>,
    },
}

#[derive(Clone)]
pub struct RobinOperator<T: Real> {
    pub m: usize,
    pub kind: RobinKind<T>,
    pub time_independent: bool,
    pub claimed_nonneg: bool,
}

impl<T: Real> RobinOperator<T> {
    pub fn multiplier_fn(
        m: usize,
        time_independent: bool,
        claimed_nonneg: bool,
        theta: impl Fn(&[T; 2], T) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self { m, kind: RobinKind::Multiplier(Arc::new(theta)), time_independent, claimed_nonneg }
    }

    /// Constant scalar multiplier `theta = c * I`.
    pub fn constant(c: T, m: usize) -> Self {
        Self::multiplier_fn(m, true, c >= T::zero(), move |_, _| DMatrix::identity(m, m) * c)
    }

    /// Constant matrix multiplier.
    pub fn matrix(theta: DMatrix<T>) -> Self {
        let m = theta.nrows();
        assert_eq!(theta.ncols(), m);
        let sym = (&theta + theta.transpose()) * T::of(0.5);
        let nonneg = sym.symmetric_eigenvalues().iter().all(|&e| e >= -T::of(1e-12));
        Self::multiplier_fn(m, true, nonneg, move |_, _| theta.clone())
    }

    /// Pure Neumann boundary: `theta = 0`.
    pub fn zero(m: usize) -> Self {
        Self::constant(T::zero(), m)
    }

    /// Rank-one nonlocal operator with `phi = psi = 1` and coupling `c`:
    /// `<Theta u, v> = c (int u dS)(int v dS)` per component pair summed.
    pub fn rank1_const(c: T, m: usize) -> Self {
        let ones = move || -> BoundaryProfileFn<T> {
            Arc::new(move |_: &[T; 2]| DVector::from_element(m, T::one()))
        };
        Self {
            m,
            kind: RobinKind::FiniteRank {
                phi: vec![ones()],
                psi: vec![ones()],
                coupling: DMatrix::from_element(1, 1, c),
            },
            time_independent: true,
            claimed_nonneg: c >= T::zero(),
        }
    }

    pub fn theta(&self, x: &[T; 2], t: T) -> Option<DMatrix<T>> {
        match &self.kind {
            RobinKind::Multiplier(f) => Some(f(x, t)),
            RobinKind::FiniteRank { .. } => None,
        }
    }

    /// Adjoint operator: transposed multiplier, resp. swapped profiles with a
    /// transposed coupling matrix.
    pub fn adjoint(&self) -> Self {
        let kind = match &self.kind {
            RobinKind::Multiplier(f) => {
                let f = f.clone();
                RobinKind::Multiplier(Arc::new(move |x: &[T; 2], t: T| f(x, t).transpose()) as _)
            }
            RobinKind::FiniteRank { phi, psi, coupling } => RobinKind::FiniteRank {
                phi: psi.clone(),
                psi: phi.clone(),
                coupling: coupling.transpose(),
            },
        };
        Self {
            m: self.m,
            kind,
            time_independent: self.time_independent,
            claimed_nonneg: self.claimed_nonneg,
        }
    }

    /// Multiplier scaled by a constant.
    pub fn scaled(&self, c: T) -> Self {
        let kind = match &self.kind {
            RobinKind::Multiplier(f) => {
                let f = f.clone();
                RobinKind::Multiplier(Arc::new(move |x: &[T; 2], t: T| f(x, t) * c) as _)
            }
            RobinKind::FiniteRank { phi, psi, coupling } => RobinKind::FiniteRank {
                phi: phi.clone(),
                psi: psi.clone(),
                coupling: coupling.clone() * c,
            },
        };
        Self {
            m: self.m,
            kind,
            time_independent: self.time_independent,
            claimed_nonneg: self.claimed_nonneg && c >= T::zero(),
        }
    }
}

/// Result of sampling the strong ellipticity condition.
#[derive(Debug, Clone)]
pub struct EllipticityReport<T> {
    /// Minimum of the quadratic form over unit directions (min eigenvalue of
    /// the symmetric part), over all sampled points.
    pub lambda_lower: T,
    /// Whether the bilinear upper bound held with constant `1/lambda` at all
    /// sampled direction pairs.
    pub lambda_upper_ok: bool,
    /// Sample `(x, t)` achieving the minimum.
    pub worst_point: ([T; 2], T),
}

/// Result of sampling the boundary operator hypothesis: `delta` is the
/// smallest eigenvalue of the symmetric part of `int_dOmega theta dS`,
/// minimized over the sampled times.
#[derive(Debug, Clone)]
pub struct ThetaReport<T> {
    pub delta: T,
    pub nonneg_ok: bool,
}

/// Sample the quadratic form of the tensor at all cell quadrature points and
/// report the worst lower constant, plus a randomized check of the bilinear
/// upper bound with constant `1/lambda`.
pub fn validate_ellipticity<T: Real>(
    field: &CoefficientField<T>,
    mesh: &Mesh<T>,
    t_samples: &[T],
    dir_samples: usize,
) -> Result<EllipticityReport<T>, CoeffError> {
    if dir_samples == 0 {
        return Err(CoeffError::NoDirections);
    }
    let dim = field.m * field.n;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    let mut lambda_lower = T::of(f64::INFINITY);
    let mut worst = ([T::zero(); 2], T::zero());
    let mut upper_ok = true;
    let inv_lambda = T::one() / field.lambda;
    let times: &[T] = if t_samples.is_empty() { &[T::zero()] } else { t_samples };
    for &t in times {
        for k in 0..mesh.cells.len() {
            for q in cell_quadrature(mesh, k) {
                let a = field.tensor(&q.x, t);
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(CoeffError::NonFinite(
                        [q.x[0].as_f64(), q.x[1].as_f64()],
                        t.as_f64(),
                    ));
                }
                let sym = (&a + a.transpose()) * T::of(0.5);
                let min_eig = sym
                    .symmetric_eigenvalues()
                    .iter()
                    .copied()
                    .fold(T::of(f64::INFINITY), |x, y| x.min(y));
                if min_eig < lambda_lower {
                    lambda_lower = min_eig;
                    worst = (q.x, t);
                }
                for _ in 0..dir_samples {
                    let xi = random_unit(&mut rng, dim);
                    let eta = random_unit(&mut rng, dim);
                    let form = (eta.transpose() * &a * &xi)[(0, 0)].abs();
                    if form > inv_lambda + T::of(1e-9) {
                        upper_ok = false;
                    }
                }
            }
        }
    }
    Ok(EllipticityReport { lambda_lower, lambda_upper_ok: upper_ok, worst_point: worst })
}

fn random_unit<T: Real>(rng: &mut ChaCha8Rng, dim: usize) -> DVector<T> {
    loop {
        let v = DVector::from_fn(dim, |_, _| T::of(rng.gen_range(-1.0..1.0)));
        let n = v.norm();
        if n > T::of(1e-3) {
            return v / n;
        }
    }
}

/// Boundary integral `int_dOmega theta(., t) dS` as an `m x m` matrix
/// (effective coupling matrix for the finite-rank kind), reduced to its
/// smallest symmetric-part eigenvalue over the sampled times.
pub fn validate_theta<T: Real>(
    theta: &RobinOperator<T>,
    mesh: &Mesh<T>,
    t_samples: &[T],
) -> Result<ThetaReport<T>, CoeffError> {
    if mesh.boundary_facets.is_empty() {
        return Err(CoeffError::EmptyBoundary);
    }
    let m = theta.m;
    let times: &[T] = if t_samples.is_empty() { &[T::zero()] } else { t_samples };
    let mut delta = T::of(f64::INFINITY);
    let mut nonneg_ok = true;
    for &t in times {
        let mut total = DMatrix::<T>::zeros(m, m);
        match &theta.kind {
            RobinKind::Multiplier(f) => {
                for k in 0..mesh.boundary_facets.len() {
                    for q in boundary_quadrature(mesh, k) {
                        let th = f(&q.x, t);
                        let sym = (&th + th.transpose()) * T::of(0.5);
                        let min_eig = sym
                            .symmetric_eigenvalues()
                            .iter()
                            .copied()
                            .fold(T::of(f64::INFINITY), |x, y| x.min(y));
                        if min_eig < -T::of(1e-10) {
                            nonneg_ok = false;
                        }
                        total += th * q.weight;
                    }
                }
            }
            RobinKind::FiniteRank { phi, psi, coupling } => {
                // effective matrix: sum_kl c_kl a_k b_l^T with a_k = int phi_k dS
                let integrate = |prof: &BoundaryProfileFn<T>| -> DVector<T> {
                    let mut acc = DVector::zeros(m);
                    for k in 0..mesh.boundary_facets.len() {
                        for q in boundary_quadrature(mesh, k) {
                            acc += prof(&q.x) * q.weight;
                        }
                    }
                    acc
                };
                let a: Vec<DVector<T>> = phi.iter().map(&integrate).collect();
                let b: Vec<DVector<T>> = psi.iter().map(&integrate).collect();
                for k in 0..phi.len() {
                    for l in 0..psi.len() {
                        total += &a[k] * b[l].transpose() * coupling[(k, l)];
                    }
                }
                let csym = (coupling + coupling.transpose()) * T::of(0.5);
                if csym.symmetric_eigenvalues().iter().any(|&e| e < -T::of(1e-10)) {
                    nonneg_ok = false;
                }
            }
        }
        let sym = (&total + total.transpose()) * T::of(0.5);
        let min_eig = sym
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(T::of(f64::INFINITY), |x, y| x.min(y));
        delta = delta.min(min_eig);
    }
    Ok(ThetaReport { delta, nonneg_ok })
}
