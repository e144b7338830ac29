//! Discrete carriers of the weak formulation: mass, stiffness, Robin boundary
//! form and load functionals for m-component P1 elements.
//!
//! Degrees of freedom are component-major: dof = component * n_vertices + vertex.

pub mod solve;

use nalgebra::{DMatrix, DVector};

use crate::coeff::{CoefficientField, RobinKind, RobinOperator};
use crate::mesh::Mesh;
use crate::quadrature::{boundary_quadrature, cell_quadrature};
use crate::scalar::Real;

pub use solve::{solve, solve_nonsym, solve_spd, SolveError};

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("coefficient dimension mismatch: field n = {field_n}, mesh dimension = {mesh_n}")]
    DimensionMismatch { field_n: usize, mesh_n: usize },
    #[error("mesh has no boundary facets")]
    EmptyBoundary,
}

/// Square sparse matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    symmetric: bool,
}

impl<T: Real> SparseMatrix<T> {
    /// Build from triplets, summing duplicate coordinates.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, T)>) -> Self {
        entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self { n, row_ptr, col_idx, values, symmetric: false };
        m.symmetric = m.check_symmetric();
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, T::one())).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[k] == j {
                return self.values[k];
            }
        }
        T::zero()
    }

    fn check_symmetric(&self) -> bool {
        let scale = self
            .values
            .iter()
            .fold(T::zero(), |a, &b| a.max(b.abs()))
            .max(T::of(f64::MIN_POSITIVE));
        let tol = T::of(1e-12) * scale;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                if (self.values[k] - self.get(j, i)).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn matvec(&self, x: &DVector<T>) -> DVector<T> {
        assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let entries: Vec<(usize, usize, T)> = self
            .iter_entries()
            .map(|(i, j, v)| (j, i, v))
            .collect();
        Self::from_triplets(self.n, entries)
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    /// `sum_k c_k * M_k` over matrices of equal dimension.
    pub fn linear_combination(terms: &[(T, &SparseMatrix<T>)]) -> Self {
        let n = terms[0].1.n;
        let mut entries = Vec::new();
        for (c, m) in terms {
            assert_eq!(m.n, n);
            entries.extend(m.iter_entries().map(|(i, j, v)| (i, j, *c * v)));
        }
        Self::from_triplets(n, entries)
    }

    /// Symmetric part `(A + A^T)/2`.
    pub fn symmetric_part(&self) -> Self {
        let t = self.transpose();
        Self::linear_combination(&[(T::of(0.5), self), (T::of(0.5), &t)])
    }

    pub fn diagonal(&self) -> DVector<T> {
        DVector::from_fn(self.n, |i, _| self.get(i, i))
    }

    pub fn row_sums(&self) -> DVector<T> {
        let mut s = DVector::zeros(self.n);
        for (i, _, v) in self.iter_entries() {
            s[i] += v;
        }
        s
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.iter_entries() {
            d[(i, j)] += v;
        }
        d
    }

    /// Coordinate text export: one `row col value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for (i, j, v) in self.iter_entries() {
            out.push_str(&format!("{} {} {:.16e}\n", i, j, v.as_f64()));
        }
        out
    }
}

/// Nodal coefficient vector for an m-component P1 field.
#[derive(Debug, Clone)]
pub struct NodalField<T> {
    pub m: usize,
    pub n_vertices: usize,
    pub coefficients: DVector<T>,
}

impl<T: Real> NodalField<T> {
    pub fn zeros(m: usize, n_vertices: usize) -> Self {
        Self { m, n_vertices, coefficients: DVector::zeros(m * n_vertices) }
    }

    pub fn from_vector(m: usize, n_vertices: usize, coefficients: DVector<T>) -> Self {
        assert_eq!(coefficients.len(), m * n_vertices);
        Self { m, n_vertices, coefficients }
    }

    /// Nodal interpolation of a pointwise function.
    pub fn interpolate(mesh: &Mesh<T>, m: usize, f: impl Fn(&[T; 2]) -> DVector<T>) -> Self {
        let nv = mesh.n_vertices();
        let mut coefficients = DVector::zeros(m * nv);
        for (v, x) in mesh.vertices.iter().enumerate() {
            let val = f(x);
            for c in 0..m {
                coefficients[c * nv + v] = val[c];
            }
        }
        Self { m, n_vertices: nv, coefficients }
    }

    pub fn dof(comp: usize, vertex: usize, n_vertices: usize) -> usize {
        comp * n_vertices + vertex
    }

    /// P1 evaluation of component `comp` at an arbitrary point.
    pub fn eval(&self, mesh: &Mesh<T>, comp: usize, x: &[T; 2]) -> Option<T> {
        let (k, w) = mesh.locate(x)?;
        let c = &mesh.cells[k];
        let mut acc = T::zero();
        for (loc, &v) in c.iter().enumerate() {
            acc += w[loc] * self.coefficients[comp * self.n_vertices + v];
        }
        Some(acc)
    }
}

/// P1 mass matrix, block-diagonal over components; `lumped` moves row sums to
/// the diagonal.
pub fn assemble_mass<T: Real>(mesh: &Mesh<T>, m: usize, lumped: bool) -> SparseMatrix<T> {
    let nv = mesh.n_vertices();
    let mut entries = Vec::new();
    for k in 0..mesh.cells.len() {
        let c = &mesh.cells[k];
        let meas = mesh.cell_measure(k);
        let nloc = c.len();
        // exact P1 local mass: measure/(d+1)(d+2) * (1 + delta_ij)
        let base = meas / T::of_usize((nloc) * (nloc + 1));
        for i in 0..nloc {
            for j in 0..nloc {
                let v = if i == j { base * T::of(2.0) } else { base };
                if lumped {
                    for comp in 0..m {
                        entries.push((comp * nv + c[i], comp * nv + c[i], v));
                    }
                } else {
                    for comp in 0..m {
                        entries.push((comp * nv + c[i], comp * nv + c[j], v));
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(m * nv, entries)
}

/// Constant P1 gradients of the cell's basis functions.
fn cell_gradients<T: Real>(mesh: &Mesh<T>, k: usize) -> Vec<[T; 2]> {
    let c = &mesh.cells[k];
    match mesh.dimension {
        1 => {
            let h = mesh.vertices[c[1]][0] - mesh.vertices[c[0]][0];
            vec![[-T::one() / h, T::zero()], [T::one() / h, T::zero()]]
        }
        _ => {
            let (a, b, cc) = (mesh.vertices[c[0]], mesh.vertices[c[1]], mesh.vertices[c[2]]);
            let det = (b[0] - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (b[1] - a[1]);
            vec![
                [(b[1] - cc[1]) / det, (cc[0] - b[0]) / det],
                [(cc[1] - a[1]) / det, (a[0] - cc[0]) / det],
                [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
            ]
        }
    }
}

/// Stiffness matrix of the form `a(u, v; t) = int A^{ab}(., t) D_b u . D_a v`.
pub fn assemble_stiffness<T: Real>(
    mesh: &Mesh<T>,
    field: &CoefficientField<T>,
    t: T,
) -> Result<SparseMatrix<T>, AssemblyError> {
    if field.n != mesh.dimension {
        return Err(AssemblyError::DimensionMismatch { field_n: field.n, mesh_n: mesh.dimension });
    }
    let nv = mesh.n_vertices();
    let (m, nd) = (field.m, field.n);
    let mut entries = Vec::new();
    for k in 0..mesh.cells.len() {
        let c = &mesh.cells[k];
        let grads = cell_gradients(mesh, k);
        let nloc = c.len();
        let mut local = DMatrix::<T>::zeros(m * nloc, m * nloc);
        for q in cell_quadrature(mesh, k) {
            let a = field.tensor(&q.x, t);
            for li in 0..nloc {
                for lj in 0..nloc {
                    for ci in 0..m {
                        for cj in 0..m {
                            let mut acc = T::zero();
                            for alpha in 0..nd {
                                for beta in 0..nd {
                                    acc += a[(alpha * m + ci, beta * m + cj)]
                                        * grads[lj][beta]
                                        * grads[li][alpha];
                                }
                            }
                            local[(ci * nloc + li, cj * nloc + lj)] += acc * q.weight;
                        }
                    }
                }
            }
        }
        for li in 0..nloc {
            for lj in 0..nloc {
                for ci in 0..m {
                    for cj in 0..m {
                        entries.push((
                            ci * nv + c[li],
                            cj * nv + c[lj],
                            local[(ci * nloc + li, cj * nloc + lj)],
                        ));
                    }
                }
            }
        }
    }
    Ok(SparseMatrix::from_triplets(m * nv, entries))
}

/// P1 basis values at a point of a given cell.
fn basis_values_at<T: Real>(mesh: &Mesh<T>, k: usize, x: &[T; 2]) -> Vec<T> {
    let c = &mesh.cells[k];
    match mesh.dimension {
        1 => {
            let (x0, x1) = (mesh.vertices[c[0]][0], mesh.vertices[c[1]][0]);
            let w1 = (x[0] - x0) / (x1 - x0);
            vec![T::one() - w1, w1]
        }
        _ => {
            let (a, b, cc) = (mesh.vertices[c[0]], mesh.vertices[c[1]], mesh.vertices[c[2]]);
            let det = (b[0] - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (b[1] - a[1]);
            let w1 = ((x[0] - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (x[1] - a[1])) / det;
            let w2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
            vec![T::one() - w1 - w2, w1, w2]
        }
    }
}

/// P1 basis values on a boundary facet at a point.
fn facet_basis_values_at<T: Real>(mesh: &Mesh<T>, facet: usize, x: &[T; 2]) -> Vec<T> {
    let f = &mesh.boundary_facets[facet];
    match mesh.dimension {
        1 => vec![T::one()],
        _ => {
            let (a, b) = (mesh.vertices[f.vertices[0]], mesh.vertices[f.vertices[1]]);
            let len2 = (b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]);
            let s = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1])) / len2;
            vec![T::one() - s, s]
        }
    }
}

/// Boundary form `<Theta(t) u, v>`: boundary mass matrix weighted by theta for
/// the multiplier kind, materialized low-rank outer products for the
/// finite-rank kind.
pub fn assemble_robin<T: Real>(
    mesh: &Mesh<T>,
    theta: &RobinOperator<T>,
    t: T,
) -> Result<SparseMatrix<T>, AssemblyError> {
    if mesh.boundary_facets.is_empty() {
        return Err(AssemblyError::EmptyBoundary);
    }
    let nv = mesh.n_vertices();
    let m = theta.m;
    match &theta.kind {
        RobinKind::Multiplier(f) => {
            let mut entries = Vec::new();
            for k in 0..mesh.boundary_facets.len() {
                let verts = mesh.boundary_facets[k].vertices.clone();
                for q in boundary_quadrature(mesh, k) {
                    let th = f(&q.x, t);
                    let phis = facet_basis_values_at(mesh, k, &q.x);
                    for (li, &vi) in verts.iter().enumerate() {
                        for (lj, &vj) in verts.iter().enumerate() {
                            for ci in 0..m {
                                for cj in 0..m {
                                    entries.push((
                                        ci * nv + vi,
                                        cj * nv + vj,
                                        th[(ci, cj)] * phis[li] * phis[lj] * q.weight,
                                    ));
                                }
                            }
                        }
                    }
                }
            }
            Ok(SparseMatrix::from_triplets(m * nv, entries))
        }
        RobinKind::FiniteRank { phi, psi, coupling } => {
            // boundary integration vectors w_k with (w_k)_{(i,v)} = int phi_k^i basis_v dS
            let profile_vector = |prof: &std::sync::Arc<
                dyn Fn(&[T; 2]) -> DVector<T> + Send + Sync,
            >|
             -> DVector<T> {
                let mut w = DVector::zeros(m * nv);
                for k in 0..mesh.boundary_facets.len() {
                    let verts = mesh.boundary_facets[k].vertices.clone();
                    for q in boundary_quadrature(mesh, k) {
                        let p = prof(&q.x);
                        let phis = facet_basis_values_at(mesh, k, &q.x);
                        for (li, &vi) in verts.iter().enumerate() {
                            for ci in 0..m {
                                w[ci * nv + vi] += p[ci] * phis[li] * q.weight;
                            }
                        }
                    }
                }
                w
            };
            let wphi: Vec<DVector<T>> = phi.iter().map(|p| profile_vector(p)).collect();
            let wpsi: Vec<DVector<T>> = psi.iter().map(|p| profile_vector(p)).collect();
            let mut entries = Vec::new();
            for k in 0..wphi.len() {
                for l in 0..wpsi.len() {
                    let c = coupling[(k, l)];
                    if c == T::zero() {
                        continue;
                    }
                    for (i, &a) in wphi[k].iter().enumerate() {
                        if a == T::zero() {
                            continue;
                        }
                        for (j, &b) in wpsi[l].iter().enumerate() {
                            if b == T::zero() {
                                continue;
                            }
                            // <Theta u, v> = c (w_psi . v)(w_phi . u): row = test dof
                            entries.push((j, i, c * a * b));
                        }
                    }
                }
            }
            Ok(SparseMatrix::from_triplets(m * nv, entries))
        }
    }
}

/// Load vector `int f(., t) . basis` by cell quadrature.
pub fn assemble_load<T: Real>(
    mesh: &Mesh<T>,
    m: usize,
    f: &dyn Fn(&[T; 2], T) -> DVector<T>,
    t: T,
) -> DVector<T> {
    let nv = mesh.n_vertices();
    let mut load = DVector::zeros(m * nv);
    for k in 0..mesh.cells.len() {
        let c = &mesh.cells[k];
        for q in cell_quadrature(mesh, k) {
            let val = f(&q.x, t);
            let phis = basis_values_at(mesh, k, &q.x);
            for (li, &vi) in c.iter().enumerate() {
                for comp in 0..m {
                    load[comp * nv + vi] += val[comp] * phis[li] * q.weight;
                }
            }
        }
    }
    load
}
