//! Iterative linear solvers: preconditioned conjugate gradients for symmetric
//! positive (semi)definite systems, BiCGSTAB for nonsymmetric ones. Both are
//! deterministic given identical inputs.

use nalgebra::DVector;

use super::SparseMatrix;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error("dimension mismatch: matrix {n}, vector {len}")]
    DimensionMismatch { n: usize, len: usize },
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("no convergence within {iters} iterations (residual {residual})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("breakdown in BiCGSTAB (rho ~ 0) at iteration {0}")]
    Breakdown(usize),
}

fn jacobi<T: Real>(a: &SparseMatrix<T>) -> DVector<T> {
    let d = a.diagonal();
    d.map(|v| if v.abs() > T::zero() { T::one() / v } else { T::one() })
}

fn max_iters(n: usize) -> usize {
    (20 * n).max(10_000)
}

/// Conjugate gradients with Jacobi preconditioning. Requires `a` symmetric
/// positive definite (or semidefinite with `b` orthogonal to the kernel).
pub fn solve_spd<T: Real>(
    a: &SparseMatrix<T>,
    b: &DVector<T>,
    tol: T,
) -> Result<DVector<T>, SolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolveError::DimensionMismatch { n, len: b.len() });
    }
    if !(tol > T::zero()) {
        return Err(SolveError::BadTolerance);
    }
    let bnorm = b.norm();
    if bnorm == T::zero() {
        return Ok(DVector::zeros(n));
    }
    let minv = jacobi(a);
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let mut z = r.component_mul(&minv);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let cap = max_iters(n);
    for _ in 0..cap {
        let ap = a.matvec(&p);
        let pap = p.dot(&ap);
        if !(pap > T::zero()) {
            // indefinite or fully converged direction
            if r.norm() <= tol * bnorm {
                return Ok(x);
            }
            return Err(SolveError::NoConvergence {
                iters: cap,
                residual: (r.norm() / bnorm).as_f64(),
            });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, T::one());
        r.axpy(-alpha, &ap, T::one());
        if r.norm() <= tol * bnorm {
            return Ok(x);
        }
        z = r.component_mul(&minv);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &p * beta;
    }
    Err(SolveError::NoConvergence { iters: cap, residual: (r.norm() / bnorm).as_f64() })
}

/// BiCGSTAB with Jacobi preconditioning for general square systems.
pub fn solve_nonsym<T: Real>(
    a: &SparseMatrix<T>,
    b: &DVector<T>,
    tol: T,
) -> Result<DVector<T>, SolveError> {
    let n = a.dim();
    if b.len() != n {
        return Err(SolveError::DimensionMismatch { n, len: b.len() });
    }
    if !(tol > T::zero()) {
        return Err(SolveError::BadTolerance);
    }
    let bnorm = b.norm();
    if bnorm == T::zero() {
        return Ok(DVector::zeros(n));
    }
    let minv = jacobi(a);
    let mut x = DVector::zeros(n);
    let mut r = b.clone();
    let r0 = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = DVector::zeros(n);
    let mut p = DVector::zeros(n);
    let cap = max_iters(n);
    for it in 0..cap {
        let rho_new = r0.dot(&r);
        if rho_new.abs() < T::of(1e-300) {
            if r.norm() <= tol * bnorm {
                return Ok(x);
            }
            return Err(SolveError::Breakdown(it));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        p = &r + (&p - &v * omega) * beta;
        let phat = p.component_mul(&minv);
        v = a.matvec(&phat);
        alpha = rho / r0.dot(&v);
        let s = &r - &v * alpha;
        if s.norm() <= tol * bnorm {
            x.axpy(alpha, &phat, T::one());
            return Ok(x);
        }
        let shat = s.component_mul(&minv);
        let t = a.matvec(&shat);
        let tt = t.dot(&t);
        if tt == T::zero() {
            return Err(SolveError::Breakdown(it));
        }
        omega = t.dot(&s) / tt;
        x.axpy(alpha, &phat, T::one());
        x.axpy(omega, &shat, T::one());
        r = &s - &t * omega;
        if r.norm() <= tol * bnorm {
            return Ok(x);
        }
    }
    Err(SolveError::NoConvergence { iters: cap, residual: (r.norm() / bnorm).as_f64() })
}

/// Dispatch on the matrix symmetry flag.
pub fn solve<T: Real>(
    a: &SparseMatrix<T>,
    b: &DVector<T>,
    tol: T,
) -> Result<DVector<T>, SolveError> {
    if a.is_symmetric() {
        solve_spd(a, b, tol)
    } else {
        solve_nonsym(a, b, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_diagonal() {
        let a = SparseMatrix::identity(3);
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = solve_spd(&a, &b, 1e-12).unwrap();
        assert!((x - b).amax() < 1e-12);

        let a: SparseMatrix<f64> = SparseMatrix::from_triplets(2, vec![(0, 0, 2.0), (1, 1, 4.0)]);
        let x = solve_spd(&a, &DVector::from_vec(vec![2.0, 4.0]), 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        // SPD as A = B^T B + n I built densely, stored sparse
        let mut dense = vec![vec![0.0f64; n]; n];
        let b_rand: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += b_rand[k][i] * b_rand[k][j];
                }
                dense[i][j] = acc + if i == j { n as f64 } else { 0.0 };
            }
        }
        let entries: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j, 0.0)).collect::<Vec<_>>())
            .enumerate()
            .map(|(k, (i, j, _))| (i, j, dense[k / n][k % n]))
            .collect();
        let a = SparseMatrix::from_triplets(n, entries);
        let rhs = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let tol = 1e-10;
        let x = solve_spd(&a, &rhs, tol).unwrap();
        let res = (&rhs - a.matvec(&x)).norm() / rhs.norm();
        assert!(res <= tol, "residual {}", res);
    }

    #[test]
    fn nonsymmetric_solve() {
        let a = SparseMatrix::from_triplets(
            3,
            vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, -1.0), (1, 1, 3.0), (2, 2, 2.0), (2, 0, 0.5)],
        );
        let xtrue = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let b = a.matvec(&xtrue);
        let x = solve_nonsym(&a, &b, 1e-12).unwrap();
        assert!((x - xtrue).amax() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = SparseMatrix::identity(3);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(
            solve_spd(&a, &b, 1e-10),
            Err(SolveError::DimensionMismatch { .. })
        ));
    }
}
