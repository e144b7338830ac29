//! A Robin initial-boundary-value problem: mesh, coefficient tensor and
//! boundary operator bundled with the split constant `lambda_tilde`.

use crate::assembly::{assemble_mass, assemble_robin, assemble_stiffness, AssemblyError, SparseMatrix};
use crate::coeff::{CoefficientField, RobinOperator};
use crate::mesh::Mesh;
use crate::scalar::Real;

#[derive(Debug, thiserror::Error)]
pub enum ProblemError {
    #[error("component count mismatch: field m = {0}, theta m = {1}")]
    ComponentMismatch(usize, usize),
    #[error("field dimension {0} does not match mesh dimension {1}")]
    DimensionMismatch(usize, usize),
    #[error("lambda_tilde must lie in (0, lambda); got {0} with lambda = {1}")]
    BadLambdaTilde(f64, f64),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

#[derive(Clone)]
pub struct RobinProblem<T: Real> {
    pub mesh: Mesh<T>,
    pub field: CoefficientField<T>,
    pub theta: RobinOperator<T>,
    pub lambda_tilde: T,
    /// Use the lumped mass matrix (positivity / mass-dissipation runs).
    pub lumped_mass: bool,
}

impl<T: Real> RobinProblem<T> {
    pub fn new(
        mesh: Mesh<T>,
        field: CoefficientField<T>,
        theta: RobinOperator<T>,
        lambda_tilde: T,
    ) -> Result<Self, ProblemError> {
        if field.m != theta.m {
            return Err(ProblemError::ComponentMismatch(field.m, theta.m));
        }
        if field.n != mesh.dimension {
            return Err(ProblemError::DimensionMismatch(field.n, mesh.dimension));
        }
        if !(lambda_tilde > T::zero()) || lambda_tilde >= field.lambda {
            return Err(ProblemError::BadLambdaTilde(
                lambda_tilde.as_f64(),
                field.lambda.as_f64(),
            ));
        }
        Ok(Self { mesh, field, theta, lambda_tilde, lumped_mass: false })
    }

    pub fn with_lumped_mass(mut self) -> Self {
        self.lumped_mass = true;
        self
    }

    pub fn m(&self) -> usize {
        self.field.m
    }

    pub fn n_dofs(&self) -> usize {
        self.field.m * self.mesh.n_vertices()
    }

    pub fn time_independent(&self) -> bool {
        self.field.time_independent && self.theta.time_independent
    }

    pub fn mass(&self) -> SparseMatrix<T> {
        assemble_mass(&self.mesh, self.m(), self.lumped_mass)
    }

    /// Stiffness of the identity tensor: `u^T K_unit u = |Du|^2`.
    pub fn k_unit(&self) -> SparseMatrix<T> {
        assemble_stiffness(
            &self.mesh,
            &CoefficientField::laplace(self.m(), self.mesh.dimension),
            T::zero(),
        )
        .expect("identity tensor matches mesh")
    }

    pub fn stiffness(&self, t: T) -> Result<SparseMatrix<T>, ProblemError> {
        Ok(assemble_stiffness(&self.mesh, &self.field, t)?)
    }

    pub fn robin(&self, t: T) -> Result<SparseMatrix<T>, ProblemError> {
        Ok(assemble_robin(&self.mesh, &self.theta, t)?)
    }

    /// `K(t) + B(t)`, the full spatial operator.
    pub fn system(&self, t: T) -> Result<SparseMatrix<T>, ProblemError> {
        let k = self.stiffness(t)?;
        let b = self.robin(t)?;
        Ok(SparseMatrix::linear_combination(&[(T::one(), &k), (T::one(), &b)]))
    }

    /// The adjoint problem: transposed coefficients and boundary operator.
    pub fn adjoint(&self) -> Self {
        Self {
            mesh: self.mesh.clone(),
            field: self.field.adjoint(),
            theta: self.theta.adjoint(),
            lambda_tilde: self.lambda_tilde,
            lumped_mass: self.lumped_mass,
        }
    }
}
